#pragma once

// Binary checkpoint container, little-endian:
//   "MERCKPT\0" | u32 version | u8 scalar bytes (4 or 8)
//   u64 len | model config JSON
//   u64 tensor count | per tensor: u64 len | name | u32 rank | i64 dims[rank] | values
//   u64 FNV-1a checksum of every preceding byte

#include <filesystem>
#include <stdexcept>
#include <string>

#include "mer/model/dbfem.hpp"

namespace mer::model {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CheckpointHeader {
  std::uint32_t version = 0;
  int scalar_bytes = 0;
  ModelConfig config;
};

template <typename T>
void save_checkpoint(const std::filesystem::path& path, DbfemNetwork<T>& model);

// Reads and verifies the container header and checksum without building a model.
CheckpointHeader read_checkpoint_header(const std::filesystem::path& path);

// Loads parameters into `model`. The stored config, precision, tensor names
// and shapes must all match the model.
template <typename T>
void load_checkpoint(const std::filesystem::path& path, DbfemNetwork<T>& model);

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace mer::model
