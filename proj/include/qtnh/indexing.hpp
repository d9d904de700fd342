// Copyright 2026 The qtnh Authors
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

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "qtnh/common.hpp"

namespace qtnh {

using Dim = std::int64_t;
using Coords = std::vector<Dim>;

/// Index tuple of a tensor: ordered dimensions with the first `split` indices
/// distributed and the rest local. Flat storage is row-major, the rightmost
/// index varying fastest.
struct IndexTuple {
  std::vector<Dim> dims;
  int split = 0;

  IndexTuple() = default;
  IndexTuple(std::vector<Dim> d, int s) : dims(std::move(d)), split(s) { validate(); }

  void validate() const {
    if (split < 0 || split > static_cast<int>(dims.size()))
      throw InvalidArgument("index split " + std::to_string(split) +
                            " outside [0, " + std::to_string(dims.size()) + "]");
    for (Dim d : dims)
      if (d < 1) throw InvalidArgument("index dimensions must be positive");
  }

  int n_idx() const { return static_cast<int>(dims.size()); }
  int n_dist() const { return split; }
  int n_local() const { return n_idx() - split; }

  Dim dist_size() const {
    Dim n = 1;
    for (int i = 0; i < split; ++i) n *= dims[i];
    return n;
  }
  Dim local_size() const {
    Dim n = 1;
    for (int i = split; i < n_idx(); ++i) n *= dims[i];
    return n;
  }
  Dim total_size() const { return dist_size() * local_size(); }

  std::vector<Dim> dist_dims() const {
    return {dims.begin(), dims.begin() + split};
  }
  std::vector<Dim> local_dims() const {
    return {dims.begin() + split, dims.end()};
  }

  std::string str() const {
    std::string s = "(";
    for (int i = 0; i < n_idx(); ++i) {
      if (i > 0 && i != split) s += ",";
      if (i == split) s += ";";
      s += std::to_string(dims[i]);
    }
    if (split == n_idx()) s += ";";
    return s + ")";
  }
};

/// Broadcast pattern. A tensor spans stretch*cycles*N_d consecutive ranks from
/// `offset`: cycles outermost, distributed blocks next, stretch innermost.
struct DistParams {
  Dim stretch = 1;
  Dim cycles = 1;
  Dim offset = 0;

  void validate() const {
    if (stretch < 1 || cycles < 1 || offset < 0)
      throw InvalidArgument("invalid broadcast parameters (str=" +
                            std::to_string(stretch) + ", cyc=" + std::to_string(cycles) +
                            ", off=" + std::to_string(offset) + ")");
  }

  Dim span(Dim dist_size) const { return stretch * cycles * dist_size; }

  bool operator==(const DistParams& o) const {
    return stretch == o.stretch && cycles == o.cycles && offset == o.offset;
  }
};

namespace idx {

/// Row-major strides of a dimension list.
inline std::vector<Dim> strides(const std::vector<Dim>& dims) {
  std::vector<Dim> s(dims.size(), 1);
  for (int i = static_cast<int>(dims.size()) - 2; i >= 0; --i)
    s[i] = s[i + 1] * dims[i + 1];
  return s;
}

/// Lexicographic flat offset of `coords` over `dims` (rightmost fastest).
inline Dim flat(const Coords& coords, const std::vector<Dim>& dims) {
  if (coords.size() != dims.size())
    throw InvalidArgument("coordinate count does not match dimension count");
  Dim off = 0;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (coords[i] < 0 || coords[i] >= dims[i])
      throw InvalidArgument("coordinate " + std::to_string(coords[i]) +
                            " out of bounds for dimension " + std::to_string(dims[i]));
    off = off * dims[i] + coords[i];
  }
  return off;
}

inline Coords unflat(Dim off, const std::vector<Dim>& dims) {
  Coords c(dims.size(), 0);
  for (int i = static_cast<int>(dims.size()) - 1; i >= 0; --i) {
    c[i] = off % dims[i];
    off /= dims[i];
  }
  return c;
}

}  // namespace idx

/// Flat offset of local coordinates within a rank's buffer.
inline Dim flat_offset(const Coords& local_coords, const IndexTuple& shape) {
  return idx::flat(local_coords, shape.local_dims());
}

/// Ranks that hold the block addressed by distributed coordinates: for every
/// cycle c and stretch slot t, rank = offset + c*stretch*N_d + b*stretch + t.
inline std::vector<int> home_ranks(const Coords& dist_coords, const IndexTuple& shape,
                                   const DistParams& dist) {
  Dim b = idx::flat(dist_coords, shape.dist_dims());
  Dim nd = shape.dist_size();
  std::vector<int> out;
  out.reserve(dist.cycles * dist.stretch);
  for (Dim c = 0; c < dist.cycles; ++c)
    for (Dim t = 0; t < dist.stretch; ++t)
      out.push_back(static_cast<int>(dist.offset + c * dist.stretch * nd +
                                     b * dist.stretch + t));
  return out;
}

/// Home ranks of block index b (row-major over distributed dims).
inline std::vector<int> home_ranks_of_block(Dim b, Dim dist_size, const DistParams& dist) {
  std::vector<int> out;
  out.reserve(dist.cycles * dist.stretch);
  for (Dim c = 0; c < dist.cycles; ++c)
    for (Dim t = 0; t < dist.stretch; ++t)
      out.push_back(static_cast<int>(dist.offset + c * dist.stretch * dist_size +
                                     b * dist.stretch + t));
  return out;
}

/// Rank holding the canonical (cycle 0, stretch slot 0) copy of block b.
inline int canonical_rank_of_block(Dim b, const DistParams& dist) {
  return static_cast<int>(dist.offset + b * dist.stretch);
}

struct BlockLocation {
  Dim cycle;
  Dim block;
  Dim slot;
};

/// Which block a rank holds, or nothing when the rank is outside the span.
inline bool locate_rank(int rank, Dim dist_size, const DistParams& dist,
                        BlockLocation* loc) {
  Dim r = rank - dist.offset;
  if (r < 0 || r >= dist.span(dist_size)) return false;
  Dim per_cycle = dist.stretch * dist_size;
  loc->cycle = r / per_cycle;
  Dim rem = r % per_cycle;
  loc->block = rem / dist.stretch;
  loc->slot = rem % dist.stretch;
  return true;
}

/// Odometer over a dimension list, visiting coordinates in row-major order.
class Odometer {
 public:
  explicit Odometer(std::vector<Dim> dims)
      : dims_(std::move(dims)), coords_(dims_.size(), 0) {
    count_ = 1;
    for (Dim d : dims_) count_ *= d;
  }

  Dim count() const { return count_; }
  const Coords& coords() const { return coords_; }

  /// Advances to the next coordinate tuple; returns the index that rolled
  /// over to (or -1 when iteration wrapped past the end).
  int advance() {
    for (int i = static_cast<int>(dims_.size()) - 1; i >= 0; --i) {
      if (++coords_[i] < dims_[i]) return i;
      coords_[i] = 0;
    }
    return -1;
  }

 private:
  std::vector<Dim> dims_;
  Coords coords_;
  Dim count_;
};

}  // namespace qtnh
