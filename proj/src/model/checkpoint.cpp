#include "mer/model/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

namespace mer::model {

namespace {

constexpr char kMagic[8] = {'M', 'E', 'R', 'C', 'K', 'P', 'T', '\0'};

class Writer {
 public:
  template <typename V>
  void put(const V& v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    bytes_.insert(bytes_.end(), p, p + sizeof(V));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const char*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  void put_string(const std::string& s) {
    put<std::uint64_t>(s.size());
    put_bytes(s.data(), s.size());
  }
  std::vector<char>& bytes() { return bytes_; }

 private:
  std::vector<char> bytes_;
};

class Reader {
 public:
  Reader(const std::vector<char>& bytes, std::size_t end, std::string source)
      : bytes_(bytes), end_(end), source_(std::move(source)) {}
  template <typename V>
  V get() {
    V v;
    get_bytes(&v, sizeof(V));
    return v;
  }
  void get_bytes(void* out, std::size_t n) {
    if (pos_ + n > end_) throw CheckpointError(source_ + ": truncated checkpoint");
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::string get_string() {
    const auto n = get<std::uint64_t>();
    if (n > end_ - pos_) throw CheckpointError(source_ + ": truncated checkpoint");
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == end_; }

 private:
  const std::vector<char>& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
  std::string source_;
};

struct RawCheckpoint {
  std::vector<char> bytes;
  std::size_t payload_end = 0;
};

RawCheckpoint read_verified(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  RawCheckpoint raw;
  raw.bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  if (raw.bytes.size() < sizeof(kMagic) + sizeof(std::uint64_t) ||
      std::memcmp(raw.bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError(path.string() + ": not a checkpoint file");
  }
  raw.payload_end = raw.bytes.size() - sizeof(std::uint64_t);
  std::uint64_t stored;
  std::memcpy(&stored, raw.bytes.data() + raw.payload_end, sizeof(stored));
  if (stored != fnv1a64(raw.bytes.data(), raw.payload_end)) {
    throw CheckpointError(path.string() + ": checksum mismatch");
  }
  return raw;
}

CheckpointHeader parse_header(Reader& r, const std::string& source) {
  char magic[sizeof(kMagic)];
  r.get_bytes(magic, sizeof(magic));
  CheckpointHeader h;
  h.version = r.get<std::uint32_t>();
  if (h.version != kCheckpointVersion) {
    throw CheckpointError(source + ": unsupported checkpoint version " + std::to_string(h.version));
  }
  h.scalar_bytes = r.get<std::uint8_t>();
  if (h.scalar_bytes != 4 && h.scalar_bytes != 8) throw CheckpointError(source + ": bad scalar width");
  try {
    h.config = model_config_from_json(nlohmann::json::parse(r.get_string()));
  } catch (const std::exception& e) {
    throw CheckpointError(source + ": invalid model config: " + e.what());
  }
  return h;
}

}  // namespace

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed) {
  std::uint64_t h = seed;
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, DbfemNetwork<T>& model) {
  Writer w;
  w.put_bytes(kMagic, sizeof(kMagic));
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint8_t>(sizeof(T));
  w.put_string(to_json(model.config()).dump());
  std::vector<std::pair<std::string, Tensor<T>>> tensors;
  model.visit("", [&](const std::string& name, Tensor<T>& p) { tensors.emplace_back(name, p); });
  w.put<std::uint64_t>(tensors.size());
  for (const auto& [name, t] : tensors) {
    w.put_string(name);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (Index d : t.shape()) w.put<std::int64_t>(d);
    w.put_bytes(t.data().data(), t.data().size() * sizeof(T));
  }
  const std::uint64_t checksum = fnv1a64(w.bytes().data(), w.bytes().size());
  w.put(checksum);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw CheckpointError("failed writing checkpoint " + path.string());
}

CheckpointHeader read_checkpoint_header(const std::filesystem::path& path) {
  RawCheckpoint raw = read_verified(path);
  Reader r(raw.bytes, raw.payload_end, path.string());
  return parse_header(r, path.string());
}

template <typename T>
void load_checkpoint(const std::filesystem::path& path, DbfemNetwork<T>& model) {
  const std::string source = path.string();
  RawCheckpoint raw = read_verified(path);
  Reader r(raw.bytes, raw.payload_end, source);
  CheckpointHeader h = parse_header(r, source);
  if (h.scalar_bytes != static_cast<int>(sizeof(T))) {
    throw CheckpointError(source + ": stored with " + std::to_string(h.scalar_bytes * 8) + "-bit values, model uses " +
                          std::to_string(sizeof(T) * 8));
  }
  if (!(h.config == model.config())) {
    throw CheckpointError(source + ": model config mismatch (checkpoint " + to_json(h.config).dump() + " vs model " +
                          to_json(model.config()).dump() + ")");
  }
  std::vector<std::pair<std::string, Tensor<T>>> tensors;
  model.visit("", [&](const std::string& name, Tensor<T>& p) { tensors.emplace_back(name, p); });
  const auto count = r.get<std::uint64_t>();
  if (count != tensors.size()) {
    throw CheckpointError(source + ": holds " + std::to_string(count) + " tensors, model has " +
                          std::to_string(tensors.size()));
  }
  for (auto& [name, t] : tensors) {
    const std::string stored = r.get_string();
    if (stored != name) throw CheckpointError(source + ": expected tensor '" + name + "', found '" + stored + "'");
    const auto rank = r.get<std::uint32_t>();
    Shape shape(rank);
    for (auto& d : shape) d = r.get<std::int64_t>();
    if (shape != t.shape()) {
      throw CheckpointError(source + ": tensor '" + name + "' has shape " + mer::to_string(shape) + ", model expects " +
                            mer::to_string(t.shape()));
    }
    r.get_bytes(t.data().data(), t.data().size() * sizeof(T));
  }
  if (!r.at_end()) throw CheckpointError(source + ": trailing bytes after tensors");
}

template void save_checkpoint<float>(const std::filesystem::path&, DbfemNetwork<float>&);
template void save_checkpoint<double>(const std::filesystem::path&, DbfemNetwork<double>&);
template void load_checkpoint<float>(const std::filesystem::path&, DbfemNetwork<float>&);
template void load_checkpoint<double>(const std::filesystem::path&, DbfemNetwork<double>&);

}  // namespace mer::model
