// Copyright 2026 The natgrad Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Dataset sources: a seeded Gaussian-mixture generator, CSV files and raw
// IDX image/label pairs.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "natgrad/models.hpp"

namespace natgrad {

struct MixtureSpec {
  std::size_t n = 512;
  std::size_t dim = 8;
  std::size_t classes = 3;
  std::uint64_t seed = 0;
  std::size_t clusters_per_class = 2;
  double separation = 2.0;  // std of the cluster centres
  double noise = 1.0;       // std of samples around their centre

  void validate() const;
};

/// Labels cycle 0, 1, …, C−1 so classes are balanced; each sample picks one
/// of its class's clusters uniformly.
Batch make_gaussian_mixture(const MixtureSpec& spec);

/// Rows "x_1,…,x_d,y". y is a class index for classification and a real
/// target when `regression` is set. A non-numeric first line is a header.
/// `classes` = 0 infers C from the largest label.
Batch parse_csv_dataset(std::string_view text, std::size_t classes, bool regression);
Batch load_csv_dataset(const std::filesystem::path& path, std::size_t classes, bool regression);

/// Big-endian IDX: images magic 0x00000803 (u8, N×rows×cols), labels magic
/// 0x00000801 (u8, N). Pixels are scaled to [0, 1].
Batch parse_idx_dataset(std::span<const unsigned char> images, std::span<const unsigned char> labels,
                        std::size_t classes);
Batch load_idx_dataset(const std::filesystem::path& images, const std::filesystem::path& labels,
                       std::size_t classes);

/// Labels must lie in [0, classes).
void check_labels(const Batch& batch, std::size_t classes);

/// FNV-1a over the raw bytes of inputs, labels and targets.
std::uint64_t dataset_checksum(const Batch& batch);

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path);

}  // namespace natgrad
