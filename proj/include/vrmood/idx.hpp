// Copyright 2026 The vrmood Authors.
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

// Reader for the IDX container used by the MNIST distribution. Headers are
// big-endian: a u32 magic (0x00000803 for u8 image stacks, 0x00000801 for u8
// label vectors) followed by one u32 per dimension, then the raw bytes.

#pragma once

#include <cstdint>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "vrmood/data.hpp"
#include "vrmood/error.hpp"

namespace vrmood {

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

namespace detail {

inline std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset,
                               const char* what) {
  if (offset + 4 > bytes.size()) {
    throw TruncatedError(std::string(what) + ": truncated header");
  }
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace detail

/// Decodes in-memory IDX image and label files. Pixels are scaled to [0, 1]
/// and flattened row-major; labels 0..9 become classes 1..10.
inline Dataset parse_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels) {
  if (detail::read_be32(images, 0, "idx images") != kIdxImageMagic) {
    throw BadMagicError("idx images: bad magic number");
  }
  if (detail::read_be32(labels, 0, "idx labels") != kIdxLabelMagic) {
    throw BadMagicError("idx labels: bad magic number");
  }
  const std::uint32_t n_images = detail::read_be32(images, 4, "idx images");
  const std::uint32_t rows = detail::read_be32(images, 8, "idx images");
  const std::uint32_t cols = detail::read_be32(images, 12, "idx images");
  const std::uint32_t n_labels = detail::read_be32(labels, 4, "idx labels");

  const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
  if (images.size() - 16 < static_cast<std::size_t>(n_images) * pixels) {
    throw TruncatedError("idx images: payload shorter than header declares");
  }
  if (labels.size() - 8 < n_labels) {
    throw TruncatedError("idx labels: payload shorter than header declares");
  }
  if (n_images != n_labels) {
    throw CountMismatchError("idx: " + std::to_string(n_images) + " images but " +
                             std::to_string(n_labels) + " labels");
  }

  std::vector<Tensor> features;
  std::vector<std::size_t> ys;
  features.reserve(n_images);
  ys.reserve(n_images);
  for (std::size_t i = 0; i < n_images; ++i) {
    std::vector<double> x(pixels);
    const std::uint8_t* p = images.data() + 16 + i * pixels;
    for (std::size_t j = 0; j < pixels; ++j) x[j] = static_cast<double>(p[j]) / 255.0;
    features.push_back(Tensor::vector(std::move(x)));
    const std::uint8_t y = labels[8 + i];
    if (y > 9) throw FormatError("idx labels: label " + std::to_string(y) + " outside 0..9");
    ys.push_back(std::size_t{y} + 1);
  }
  return Dataset(std::move(features), std::move(ys), 10);
}

inline Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  const auto images = detail::read_file_bytes(images_path);
  const auto labels = detail::read_file_bytes(labels_path);
  return parse_idx(images, labels);
}

}  // namespace vrmood
