#pragma once

// Per-utterance feature records (.feat). Layout, little-endian:
//
//   8  bytes  magic "TRVCFEAT"
//   u32       format version (kFeatureCacheVersion)
//   str       utterance id        (u32 length + bytes)
//   str       speaker id
//   str       frontend ("mel" or "adapter:<name>")
//   mat       content features    (u32 rows, u32 cols, rows*cols f64 column-major)
//   mat       log mel             (80 x T)
//   mat       pitch               (3 x T: z-scored log f0, voiced 0/1, raw f0 Hz)
//
// The cache directory also holds features.tsv listing ids and shapes.

#include "triaan/features.hpp"

#include <filesystem>

namespace triaan {

inline constexpr std::uint32_t kFeatureCacheVersion = 1;

void write_features(const std::filesystem::path& path, const UtteranceFeatures& u,
                    const std::string& frontend_tag);

struct CachedFeatures {
  UtteranceFeatures features;
  std::string frontend_tag;
};

CachedFeatures read_features(const std::filesystem::path& path);

std::string frontend_tag(const ModelConfig& config);

}  // namespace triaan
