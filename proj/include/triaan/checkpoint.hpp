#pragma once

// Single-file checkpoint archive:
//
//   8 bytes   magic "TRIAANCK"
//   u32       format version (kCheckpointVersion)
//   u64       header length N
//   N bytes   JSON header: config, step, metadata, tensor table, optimizer info
//   payload   every tensor of the table in order, column-major float64, then
//             the optimizer's first and second moments in the same order
//
// Loading validates the tensor table against the shape table derived from the
// stored config.

#include "triaan/model.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>

namespace triaan {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr const char* kCodeVersion = "0.1.0";

struct AdamState {
  std::uint64_t step = 0;
  std::vector<Mat> m;
  std::vector<Mat> v;

  bool empty() const { return m.empty(); }
};

struct CheckpointMetadata {
  std::string created;  // ISO-8601 UTC
  std::string code_version = kCodeVersion;
  std::string frontend;
};

struct Checkpoint {
  ModelConfig config;
  Weights weights;
  AdamState optimizer;
  std::uint64_t step = 0;
  CheckpointMetadata metadata;
  nlohmann::json train_config;  // informational
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string utc_timestamp();

}  // namespace triaan
