#include "mer/data/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>

#include "mer/tensor/rng.hpp"

namespace mer::data {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct FaceShape {
  double cx, cy, rx, ry;
  double brightness;
  double eye_dx, eye_y, brow_y, mouth_y, mouth_w;
};

FaceShape subject_shape(Rng& rng, const SynthConfig& c) {
  const double w = static_cast<double>(c.width), h = static_cast<double>(c.height);
  FaceShape f;
  f.cx = w * (0.5 + rng.uniform(-0.015, 0.015));
  f.cy = h * (0.5 + rng.uniform(-0.015, 0.015));
  f.rx = w * rng.uniform(0.43, 0.47);
  f.ry = h * rng.uniform(0.45, 0.49);
  f.brightness = rng.uniform(0.45, 0.6);
  f.eye_dx = w * rng.uniform(0.16, 0.2);
  f.eye_y = h * rng.uniform(0.31, 0.35);
  f.brow_y = f.eye_y - h * rng.uniform(0.06, 0.08);
  f.mouth_y = h * rng.uniform(0.71, 0.75);
  f.mouth_w = w * rng.uniform(0.12, 0.16);
  return f;
}

double bump(double x, double y, double cx, double cy, double sx, double sy) {
  const double dx = (x - cx) / sx, dy = (y - cy) / sy;
  return std::exp(-0.5 * (dx * dx + dy * dy));
}

// Grayscale face-like base frame of one subject.
std::vector<double> base_face(const FaceShape& f, const SynthConfig& c) {
  const double w = static_cast<double>(c.width), h = static_cast<double>(c.height);
  std::vector<double> out(static_cast<std::size_t>(c.height * c.width));
  for (Index y = 0; y < c.height; ++y) {
    for (Index x = 0; x < c.width; ++x) {
      const double px = static_cast<double>(x), py = static_cast<double>(y);
      const double ex = (px - f.cx) / f.rx, ey = (py - f.cy) / f.ry;
      const double r2 = ex * ex + ey * ey;
      // Soft face edge.
      const double inside = 1.0 / (1.0 + std::exp((r2 - 1.0) * 12.0));
      double v = 0.18 + inside * (f.brightness - 0.18 + 0.06 * (0.5 - py / h));
      for (double side : {-1.0, 1.0}) {
        v -= 0.22 * bump(px, py, f.cx + side * f.eye_dx, f.eye_y, 0.045 * w, 0.022 * h);
        v -= 0.15 * bump(px, py, f.cx + side * f.eye_dx, f.brow_y, 0.07 * w, 0.01 * h);
      }
      v -= 0.07 * bump(px, py, f.cx, f.cy + 0.02 * h, 0.025 * w, 0.09 * h);
      v -= 0.18 * bump(px, py, f.cx, f.mouth_y, f.mouth_w, 0.018 * h);
      out[static_cast<std::size_t>(y * c.width + x)] = v;
    }
  }
  return out;
}

const char* raw_label_for(Emotion e, std::size_t variant) {
  if (e != Emotion::others) return emotion_name(e);
  static const char* kOthers[] = {"Others", "Fear", "Sadness"};
  return kOthers[variant % 3];
}

std::vector<int> aus_for(Emotion e) {
  switch (e) {
    case Emotion::happiness: return {6, 12};
    case Emotion::surprise: return {1, 2};
    case Emotion::disgust: return {4, 7};
    case Emotion::repression: return {14};
    case Emotion::others: return {17};
  }
  return {};
}

}  // namespace

Texture cue_texture(Emotion e) {
  switch (e) {
    case Emotion::happiness:
    case Emotion::surprise: return Texture::horizontal;
    case Emotion::disgust:
    case Emotion::repression: return Texture::vertical;
    case Emotion::others: return Texture::checker;
  }
  return Texture::checker;
}

Region cue_region(Emotion e) {
  switch (e) {
    case Emotion::happiness:
    case Emotion::repression: return Region::oral;
    case Emotion::surprise:
    case Emotion::disgust: return Region::ocular_brow;
    case Emotion::others: return Region::mandibular;
  }
  return Region::mandibular;
}

std::vector<SynthFrames> synth_frames(std::size_t n, std::uint64_t seed, const SynthConfig& c) {
  if (c.height <= 0 || c.width <= 0 || (c.channels != 1 && c.channels != 3) || c.num_subjects <= 0) {
    throw std::invalid_argument("synthetic config needs positive size, 1 or 3 channels and at least one subject");
  }
  const Rng root(seed);
  const BBox face{0, 0, c.width, c.height};
  const auto regions = default_region_layout(face);
  std::vector<unsigned char> outside(static_cast<std::size_t>(c.height * c.width), 1);
  for (const auto& b : regions) {
    for (Index y = b.y; y < b.y + b.h; ++y) {
      for (Index x = b.x; x < b.x + b.w; ++x) outside[static_cast<std::size_t>(y * c.width + x)] = 0;
    }
  }

  std::map<Index, std::vector<double>> bases;
  std::vector<SynthFrames> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto label = static_cast<Emotion>(i % kNumEmotions);
    const Index subject = static_cast<Index>(i / kNumEmotions) % c.num_subjects;
    auto base_it = bases.find(subject);
    if (base_it == bases.end()) {
      Rng srng = root.fork(1'000'000 + static_cast<std::uint64_t>(subject));
      base_it = bases.emplace(subject, base_face(subject_shape(srng, c), c)).first;
    }
    const auto& base = base_it->second;

    Rng rng = root.fork(static_cast<std::uint64_t>(i));
    const double phase_x = rng.uniform(0.0, kTwoPi), phase_y = rng.uniform(0.0, kTwoPi);
    const BBox& zone = regions[static_cast<std::size_t>(cue_region(label))];
    const double bx = static_cast<double>(zone.x) + static_cast<double>(zone.w) * rng.uniform(0.25, 0.75);
    const double by = static_cast<double>(zone.y) + static_cast<double>(zone.h) * rng.uniform(0.25, 0.75);
    const double polarity = rng.coin() ? 1.0 : -1.0;
    const double offset = rng.normal(0.0, 0.02);
    const Texture texture = cue_texture(label);
    const double k = kTwoPi / c.stripe_period;

    auto render = [&](double strength) {
      Image img = Image::blank(c.channels, c.height, c.width);
      for (Index y = 0; y < c.height; ++y) {
        for (Index x = 0; x < c.width; ++x) {
          const auto idx = static_cast<std::size_t>(y * c.width + x);
          const double px = static_cast<double>(x), py = static_cast<double>(y);
          double v = base[idx] + offset;
          if (outside[idx]) {
            double t = 0.0;
            switch (texture) {
              case Texture::horizontal: t = std::sin(k * py + phase_y); break;
              case Texture::vertical: t = std::sin(k * px + phase_x); break;
              case Texture::checker: t = 2.0 * std::sin(k * px + phase_x) * std::sin(k * py + phase_y); break;
            }
            v += strength * c.texture_amplitude * t;
          }
          v += strength * polarity * c.blob_amplitude * bump(px, py, bx, by, c.blob_sigma, c.blob_sigma);
          for (Index ch = 0; ch < c.channels; ++ch) {
            const double tint = c.channels == 1 ? 0.0 : 0.03 * static_cast<double>(ch - 1);
            img.at(ch, y, x) = static_cast<float>(v + tint + rng.normal(0.0, c.noise_std));
          }
        }
      }
      quantize_8bit(img);
      return img;
    };

    SynthFrames f;
    f.onset = render(c.onset_fraction);
    f.apex = render(1.0);
    char id[32];
    std::snprintf(id, sizeof(id), "syn%05zu", i);
    char sub[32];
    std::snprintf(sub, sizeof(sub), "sub%02lld", static_cast<long long>(subject + 1));
    const std::string ext = c.channels == 1 ? ".pgm" : ".ppm";
    f.record.sample_id = id;
    f.record.subject = sub;
    f.record.onset_path = std::filesystem::path("images") / (std::string(id) + "_onset" + ext);
    f.record.apex_path = std::filesystem::path("images") / (std::string(id) + "_apex" + ext);
    f.record.raw_label = raw_label_for(label, i / kNumEmotions);
    f.record.action_units = aus_for(label);
    f.record.face_bbox = face;
    for (std::size_t r = 0; r < kNumRegions; ++r) f.record.region_bboxes[kRegions[r]] = regions[r];
    out.push_back(std::move(f));
  }
  return out;
}

std::vector<Sample> synth_generate(std::size_t n, std::uint64_t seed, const SynthConfig& config,
                                   const CropGeometry& geometry) {
  std::vector<Sample> out;
  out.reserve(n);
  for (const auto& f : synth_frames(n, seed, config)) out.push_back(make_sample(f.record, f.onset, f.apex, geometry));
  return out;
}

std::filesystem::path write_synthetic(const std::filesystem::path& dir, const std::vector<SynthFrames>& frames) {
  std::filesystem::create_directories(dir / "images");
  std::vector<ManifestRecord> records;
  records.reserve(frames.size());
  for (const auto& f : frames) {
    write_pnm(dir / f.record.onset_path, f.onset);
    write_pnm(dir / f.record.apex_path, f.apex);
    records.push_back(f.record);
  }
  const auto manifest = dir / "manifest.jsonl";
  write_manifest(manifest, records);
  return manifest;
}

}  // namespace mer::data
