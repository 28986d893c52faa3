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

#include "natgrad/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>

#include "natgrad/error.hpp"

namespace natgrad {

namespace {

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint32_t read_be32(std::span<const unsigned char> bytes, std::size_t pos, std::string_view what) {
  if (pos + 4 > bytes.size()) {
    throw Error(ErrorCode::kParseError, std::string(what) + " truncated at byte " + std::to_string(pos));
  }
  return (std::uint32_t{bytes[pos]} << 24) | (std::uint32_t{bytes[pos + 1]} << 16) |
         (std::uint32_t{bytes[pos + 2]} << 8) | std::uint32_t{bytes[pos + 3]};
}

bool parse_double(std::string_view field, double& out) {
  while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
  while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r')) {
    field.remove_suffix(1);
  }
  if (field.empty()) return false;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), out);
  return ec == std::errc() && ptr == field.data() + field.size();
}

}  // namespace

void MixtureSpec::validate() const {
  if (n == 0 || dim == 0 || classes < 2 || clusters_per_class == 0) {
    throw Error(ErrorCode::kInvalidArgument, "mixture needs n, dim, clusters >= 1 and classes >= 2");
  }
  if (!(separation >= 0.0) || !(noise >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "mixture scales must be >= 0");
}

Batch make_gaussian_mixture(const MixtureSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t k = spec.classes * spec.clusters_per_class;
  DenseMatrix centres(k, spec.dim);
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t j = 0; j < spec.dim; ++j) centres(c, j) = spec.separation * normal(rng);
  }
  Batch b;
  b.inputs = DenseMatrix(spec.n, spec.dim);
  b.labels.resize(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    const std::size_t label = i % spec.classes;
    const std::size_t cluster = label * spec.clusters_per_class + rng() % spec.clusters_per_class;
    for (std::size_t j = 0; j < spec.dim; ++j) b.inputs(i, j) = centres(cluster, j) + spec.noise * normal(rng);
    b.labels[i] = static_cast<int>(label);
  }
  return b;
}

void check_labels(const Batch& batch, std::size_t classes) {
  for (std::size_t i = 0; i < batch.labels.size(); ++i) {
    if (batch.labels[i] < 0 || static_cast<std::size_t>(batch.labels[i]) >= classes) {
      throw Error(ErrorCode::kLabelOutOfRange,
                  "label " + std::to_string(batch.labels[i]) + " at row " + std::to_string(i));
    }
  }
}

Batch parse_csv_dataset(std::string_view text, std::size_t classes, bool regression) {
  std::vector<double> values;
  std::vector<double> ys;
  std::size_t width = 0;
  std::size_t pos = 0;
  bool first = true;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    const std::size_t line_start = pos;
    pos = end + 1;
    if (line.empty() || line == "\r") continue;

    std::vector<double> row;
    std::size_t field_start = 0;
    bool ok = true;
    std::size_t bad_offset = 0;
    while (true) {
      std::size_t comma = line.find(',', field_start);
      std::string_view field = line.substr(field_start, comma == std::string_view::npos ? line.size() - field_start
                                                                                        : comma - field_start);
      double v = 0.0;
      if (!parse_double(field, v)) {
        ok = false;
        bad_offset = line_start + field_start;
        break;
      }
      row.push_back(v);
      if (comma == std::string_view::npos) break;
      field_start = comma + 1;
    }
    if (!ok) {
      if (first) {  // header
        first = false;
        continue;
      }
      throw Error(ErrorCode::kParseError, "bad CSV field at byte " + std::to_string(bad_offset));
    }
    first = false;
    if (row.size() < 2) {
      throw Error(ErrorCode::kParseError, "CSV row needs features and a label at byte " + std::to_string(line_start));
    }
    if (width == 0) width = row.size();
    if (row.size() != width) {
      throw Error(ErrorCode::kParseError, "ragged CSV row at byte " + std::to_string(line_start));
    }
    values.insert(values.end(), row.begin(), row.end() - 1);
    ys.push_back(row.back());
  }
  if (ys.empty()) throw Error(ErrorCode::kParseError, "CSV has no data rows");

  Batch b;
  b.inputs = DenseMatrix::from_rows(ys.size(), width - 1, std::move(values));
  if (regression) {
    b.targets = std::move(ys);
    return b;
  }
  int largest = 0;
  for (std::size_t i = 0; i < ys.size(); ++i) {
    if (ys[i] != std::floor(ys[i]) || ys[i] < 0.0 || ys[i] > 2147483647.0) {
      throw Error(ErrorCode::kLabelOutOfRange, "non-integer label at row " + std::to_string(i));
    }
    b.labels.push_back(static_cast<int>(ys[i]));
    largest = std::max(largest, b.labels.back());
  }
  check_labels(b, classes == 0 ? static_cast<std::size_t>(largest) + 1 : classes);
  return b;
}

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

Batch load_csv_dataset(const std::filesystem::path& path, std::size_t classes, bool regression) {
  const auto bytes = read_file_bytes(path);
  return parse_csv_dataset(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()), classes,
                           regression);
}

Batch parse_idx_dataset(std::span<const unsigned char> images, std::span<const unsigned char> labels,
                        std::size_t classes) {
  if (read_be32(images, 0, "IDX images") != 0x00000803u) throw Error(ErrorCode::kParseError, "IDX images magic at byte 0");
  if (read_be32(labels, 0, "IDX labels") != 0x00000801u) throw Error(ErrorCode::kParseError, "IDX labels magic at byte 0");
  const std::size_t n = read_be32(images, 4, "IDX images");
  const std::size_t rows = read_be32(images, 8, "IDX images");
  const std::size_t cols = read_be32(images, 12, "IDX images");
  const std::size_t n_labels = read_be32(labels, 4, "IDX labels");
  if (n != n_labels) throw Error(ErrorCode::kParseError, "IDX label count differs from image count at byte 4");
  const std::size_t dim = rows * cols;
  if (images.size() != 16 + n * dim) {
    throw Error(ErrorCode::kParseError, "IDX images payload length mismatch at byte 16");
  }
  if (labels.size() != 8 + n) throw Error(ErrorCode::kParseError, "IDX labels payload length mismatch at byte 8");

  Batch b;
  b.inputs = DenseMatrix(n, dim);
  b.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < dim; ++j) b.inputs(i, j) = images[16 + i * dim + j] / 255.0;
    b.labels[i] = labels[8 + i];
  }
  check_labels(b, classes);
  return b;
}

Batch load_idx_dataset(const std::filesystem::path& images, const std::filesystem::path& labels,
                       std::size_t classes) {
  return parse_idx_dataset(read_file_bytes(images), read_file_bytes(labels), classes);
}

std::uint64_t dataset_checksum(const Batch& batch) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const std::uint64_t shape[2] = {batch.inputs.rows(), batch.inputs.cols()};
  h = fnv1a(h, shape, sizeof shape);
  for (std::size_t i = 0; i < batch.inputs.rows(); ++i) {
    h = fnv1a(h, batch.inputs.row(i).data(), batch.inputs.cols() * sizeof(double));
  }
  if (!batch.labels.empty()) h = fnv1a(h, batch.labels.data(), batch.labels.size() * sizeof(int));
  if (!batch.targets.empty()) h = fnv1a(h, batch.targets.data(), batch.targets.size() * sizeof(double));
  return h;
}

}  // namespace natgrad
