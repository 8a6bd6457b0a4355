// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "affect/matrix.hpp"

namespace affect::serialize {

// "AFEN" container: versioned binary file of named, shape-tagged float64
// arrays, all little-endian.
//
//   bytes 0..3   magic "AFEN"
//   u32          format version (currently 1)
//   u32          array count
//   per array:   u32 name length, name bytes,
//                u32 rows, u32 cols, rows*cols float64
constexpr std::uint32_t kFormatVersion = 1;

using NamedMatrices = std::vector<std::pair<std::string, Matrix>>;

void save_afen(const std::string& path, const NamedMatrices& arrays);
NamedMatrices load_afen(const std::string& path);

// nullptr if absent
const Matrix* find(const NamedMatrices& arrays, const std::string& name);

}  // namespace affect::serialize
