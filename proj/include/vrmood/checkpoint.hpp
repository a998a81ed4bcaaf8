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

// Binary checkpoint layout (all integers and floats little-endian):
//
//   "VOOD"                        4 bytes magic
//   version                       u32 (currently 1)
//   input_dim, k                  u64, u64
//   aux_class                     u8
//   seed                          u64
//   n_hidden, hidden[n_hidden]    u64, u64...
//   epoch                         i64 (-1 when untrained)
//   val_accuracy                  f64
//   parameters                    f64 per value; per layer the row-major
//                                 (in x out) weight, then the bias

#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "vrmood/error.hpp"
#include "vrmood/model.hpp"

namespace vrmood {

inline constexpr char kCheckpointMagic[4] = {'V', 'O', 'O', 'D'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  std::int64_t epoch = -1;
  double val_accuracy = 0.0;

  friend bool operator==(const CheckpointMeta&, const CheckpointMeta&) = default;
};

namespace detail {

template <typename U>
void put_le(std::ostream& os, U v) {
  char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    buf[i] = static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF);
  }
  os.write(buf, sizeof(U));
}

template <typename U>
U get_le(std::istream& is) {
  unsigned char buf[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(U))) {
    throw TruncatedError("checkpoint: unexpected end of file");
  }
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return static_cast<U>(v);
}

inline void put_f64(std::ostream& os, double v) { put_le(os, std::bit_cast<std::uint64_t>(v)); }
inline double get_f64(std::istream& is) { return std::bit_cast<double>(get_le<std::uint64_t>(is)); }

}  // namespace detail

inline void write_checkpoint(std::ostream& os, const Model& model, const CheckpointMeta& meta = {}) {
  const auto& cfg = model.config();
  os.write(kCheckpointMagic, 4);
  detail::put_le<std::uint32_t>(os, kCheckpointVersion);
  detail::put_le<std::uint64_t>(os, cfg.input_dim);
  detail::put_le<std::uint64_t>(os, cfg.k);
  detail::put_le<std::uint8_t>(os, cfg.aux_class ? 1 : 0);
  detail::put_le<std::uint64_t>(os, cfg.seed);
  detail::put_le<std::uint64_t>(os, cfg.hidden.size());
  for (std::size_t h : cfg.hidden) detail::put_le<std::uint64_t>(os, h);
  detail::put_le<std::uint64_t>(os, static_cast<std::uint64_t>(meta.epoch));
  detail::put_f64(os, meta.val_accuracy);
  for (const auto& layer : model.layers()) {
    for (double v : layer.weight.values()) detail::put_f64(os, v);
    for (double v : layer.bias.values()) detail::put_f64(os, v);
  }
}

struct LoadedCheckpoint {
  Model model;
  CheckpointMeta meta;
};

inline LoadedCheckpoint read_checkpoint(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4)) throw TruncatedError("checkpoint: missing magic");
  if (!std::equal(magic, magic + 4, kCheckpointMagic)) {
    throw BadMagicError("checkpoint: bad magic, not a VOOD file");
  }
  const auto version = detail::get_le<std::uint32_t>(is);
  if (version != kCheckpointVersion) {
    throw UnsupportedVersionError("checkpoint: unsupported format version " +
                                  std::to_string(version));
  }
  ModelConfig cfg;
  cfg.input_dim = detail::get_le<std::uint64_t>(is);
  cfg.k = detail::get_le<std::uint64_t>(is);
  cfg.aux_class = detail::get_le<std::uint8_t>(is) != 0;
  cfg.seed = detail::get_le<std::uint64_t>(is);
  const auto n_hidden = detail::get_le<std::uint64_t>(is);
  if (n_hidden > 4096) throw FormatError("checkpoint: implausible layer count");
  for (std::uint64_t i = 0; i < n_hidden; ++i) cfg.hidden.push_back(detail::get_le<std::uint64_t>(is));
  cfg.validate();
  CheckpointMeta meta;
  meta.epoch = static_cast<std::int64_t>(detail::get_le<std::uint64_t>(is));
  meta.val_accuracy = detail::get_f64(is);

  std::vector<DenseLayer> layers;
  std::size_t in = cfg.input_dim;
  for (std::size_t l = 0; l <= cfg.hidden.size(); ++l) {
    const std::size_t out = l < cfg.hidden.size() ? cfg.hidden[l] : cfg.output_width();
    Tensor w = Tensor::zeros({in, out});
    for (double& v : w.values()) v = detail::get_f64(is);
    Tensor b = Tensor::zeros({out});
    for (double& v : b.values()) v = detail::get_f64(is);
    layers.push_back({std::move(w), std::move(b)});
    in = out;
  }
  return {Model(cfg, std::move(layers)), meta};
}

inline void save_checkpoint(const std::string& path, const Model& model, const CheckpointMeta& meta = {}) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path + " for writing");
  write_checkpoint(os, model, meta);
  if (!os) throw Error("failed writing " + path);
}

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open checkpoint " + path);
  return read_checkpoint(is);
}

}  // namespace vrmood
