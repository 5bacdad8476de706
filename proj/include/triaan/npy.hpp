#pragma once

#include "triaan/common.hpp"

#include <filesystem>

namespace triaan {

/// Writes a 2-D float64 array in NumPy .npy v1.0 format (C order).
void write_npy(const std::filesystem::path& path, const Mat& m);

/// Reads a 1-D or 2-D little-endian float32/float64 .npy array. 1-D arrays
/// come back as a single row.
Mat read_npy(const std::filesystem::path& path);

}  // namespace triaan
