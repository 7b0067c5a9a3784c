#include "mer/data/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace mer::data {

std::string to_string(const BBox& b) {
  std::ostringstream os;
  os << "(x=" << b.x << ", y=" << b.y << ", w=" << b.w << ", h=" << b.h << ")";
  return os.str();
}

Image crop(const Image& image, const BBox& box) {
  if (box.w <= 0 || box.h <= 0) throw ImageError("degenerate bounding box " + to_string(box));
  if (!box.within(image.width, image.height)) {
    throw ImageError("bounding box " + to_string(box) + " exceeds image " + std::to_string(image.width) + "x" +
                     std::to_string(image.height));
  }
  Image out = Image::blank(image.channels, box.h, box.w);
  for (Index c = 0; c < image.channels; ++c) {
    for (Index y = 0; y < box.h; ++y) {
      for (Index x = 0; x < box.w; ++x) out.at(c, y, x) = image.at(c, box.y + y, box.x + x);
    }
  }
  return out;
}

Image resize_bilinear(const Image& image, Index out_height, Index out_width) {
  if (out_height <= 0 || out_width <= 0) throw ImageError("resize target must be positive");
  if (image.height <= 0 || image.width <= 0) throw ImageError("cannot resize an empty image");
  Image out = Image::blank(image.channels, out_height, out_width);
  const double sy = static_cast<double>(image.height) / static_cast<double>(out_height);
  const double sx = static_cast<double>(image.width) / static_cast<double>(out_width);
  struct Tap {
    Index i0, i1;
    float frac;
  };
  auto taps = [](Index out_n, Index in_n, double scale) {
    std::vector<Tap> t(static_cast<std::size_t>(out_n));
    for (Index o = 0; o < out_n; ++o) {
      const double src = std::clamp((static_cast<double>(o) + 0.5) * scale - 0.5, 0.0, static_cast<double>(in_n - 1));
      const Index i0 = static_cast<Index>(std::floor(src));
      t[static_cast<std::size_t>(o)] = {i0, std::min(i0 + 1, in_n - 1), static_cast<float>(src - static_cast<double>(i0))};
    }
    return t;
  };
  const auto ty = taps(out_height, image.height, sy);
  const auto tx = taps(out_width, image.width, sx);
  for (Index c = 0; c < image.channels; ++c) {
    for (Index y = 0; y < out_height; ++y) {
      const Tap& a = ty[static_cast<std::size_t>(y)];
      for (Index x = 0; x < out_width; ++x) {
        const Tap& b = tx[static_cast<std::size_t>(x)];
        const float p00 = image.at(c, a.i0, b.i0), p01 = image.at(c, a.i0, b.i1);
        const float p10 = image.at(c, a.i1, b.i0), p11 = image.at(c, a.i1, b.i1);
        const float top = p00 + b.frac * (p01 - p00);
        const float bottom = p10 + b.frac * (p11 - p10);
        out.at(c, y, x) = top + a.frac * (bottom - top);
      }
    }
  }
  return out;
}

Image convert_channels(const Image& image, Index channels) {
  if (channels == image.channels) return image;
  Image out = Image::blank(channels, image.height, image.width);
  const Index plane = image.height * image.width;
  if (channels == 1) {
    for (Index i = 0; i < plane; ++i) {
      float acc = 0.0f;
      for (Index c = 0; c < image.channels; ++c) acc += image.pixels[static_cast<std::size_t>(c * plane + i)];
      out.pixels[static_cast<std::size_t>(i)] = acc / static_cast<float>(image.channels);
    }
  } else if (image.channels == 1) {
    for (Index c = 0; c < channels; ++c) {
      std::copy(image.pixels.begin(), image.pixels.end(), out.pixels.begin() + c * plane);
    }
  } else {
    throw ImageError("cannot convert " + std::to_string(image.channels) + "-channel image to " +
                     std::to_string(channels) + " channels");
  }
  return out;
}

namespace {

// Next header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in, const std::string& source) {
  std::string tok;
  while (true) {
    const int ch = in.get();
    if (ch == EOF) throw ImageError(source + ": truncated PNM header");
    if (ch == '#') {
      std::string ignored;
      std::getline(in, ignored);
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok += static_cast<char>(ch);
  }
}

PnmInfo read_header(std::istream& in, const std::string& source) {
  const std::string magic = next_token(in, source);
  PnmInfo info;
  if (magic == "P5") {
    info.channels = 1;
  } else if (magic == "P6") {
    info.channels = 3;
  } else {
    throw ImageError(source + ": unsupported image format '" + magic + "' (expected binary P5/P6)");
  }
  try {
    info.width = std::stoll(next_token(in, source));
    info.height = std::stoll(next_token(in, source));
    const long maxval = std::stol(next_token(in, source));
    if (maxval != 255) throw ImageError(source + ": only 8-bit images (maxval 255) are supported");
  } catch (const std::logic_error&) {
    throw ImageError(source + ": malformed PNM header");
  }
  if (info.width <= 0 || info.height <= 0) throw ImageError(source + ": non-positive image size");
  return info;
}

}  // namespace

PnmInfo read_pnm_info(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageError("cannot open image " + path.string());
  return read_header(in, path.string());
}

Image read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageError("cannot open image " + path.string());
  const PnmInfo info = read_header(in, path.string());
  const Index plane = info.height * info.width;
  std::vector<unsigned char> raw(static_cast<std::size_t>(plane * info.channels));
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) throw ImageError(path.string() + ": truncated pixel data");
  Image img = Image::blank(info.channels, info.height, info.width);
  for (Index i = 0; i < plane; ++i) {
    for (Index c = 0; c < info.channels; ++c) {
      img.pixels[static_cast<std::size_t>(c * plane + i)] =
          static_cast<float>(raw[static_cast<std::size_t>(i * info.channels + c)]) / 255.0f;
    }
  }
  return img;
}

void write_pnm(const std::filesystem::path& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw ImageError("PNM output needs 1 or 3 channels, got " + std::to_string(image.channels));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ImageError("cannot write image " + path.string());
  out << (image.channels == 1 ? "P5" : "P6") << '\n' << image.width << ' ' << image.height << "\n255\n";
  const Index plane = image.height * image.width;
  std::vector<unsigned char> raw(static_cast<std::size_t>(plane * image.channels));
  for (Index i = 0; i < plane; ++i) {
    for (Index c = 0; c < image.channels; ++c) {
      const float v = std::clamp(image.pixels[static_cast<std::size_t>(c * plane + i)], 0.0f, 1.0f);
      raw[static_cast<std::size_t>(i * image.channels + c)] = static_cast<unsigned char>(std::lround(v * 255.0f));
    }
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw ImageError("failed writing image " + path.string());
}

void quantize_8bit(Image& image) {
  for (float& v : image.pixels) {
    v = static_cast<float>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)) / 255.0f;
  }
}

}  // namespace mer::data
