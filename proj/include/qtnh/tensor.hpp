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

#include <cstring>
#include <fstream>
#include <functional>
#include <optional>
#include <utility>

#include "qtnh/indexing.hpp"
#include "qtnh/runtime.hpp"

namespace qtnh {

enum class Variant : std::uint32_t { dense = 0, symmetric = 1, diagonal = 2, identity = 3, swap = 4 };

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::dense: return "dense";
    case Variant::symmetric: return "symmetric";
    case Variant::diagonal: return "diagonal";
    case Variant::identity: return "identity";
    case Variant::swap: return "swap";
  }
  return "?";
}

/// Distributed tensor value. Immutable after construction; every rank in the
/// span holds the local block its position selects, replicated according to
/// the broadcast parameters. Ranks outside the span carry metadata only.
///
/// Variants:
///  - dense:     all local elements stored.
///  - symmetric: dense storage, input/output index groups identical and
///               half-split in both the distributed and the local part.
///  - diagonal:  symmetric layout, only elements with equal input and output
///               coordinates stored; the rest are implicitly zero.
///  - identity / swap: no storage, elements computed from equality
///               constraints between paired indices.
class Tensor {
 public:
  Tensor() = default;

  // -- constructors ----------------------------------------------------------

  /// Dense tensor from per-rank local data (must have local_size() elements
  /// on span ranks; ignored elsewhere).
  static Tensor dense(Rank& ctx, IndexTuple shape, DistParams dist,
                      std::vector<Complex> local_data) {
    Tensor t = make(ctx, Variant::dense, std::move(shape), dist);
    if (t.in_span()) {
      if (static_cast<Dim>(local_data.size()) != t.shape_.local_size())
        throw InvalidArgument("dense local data has " + std::to_string(local_data.size()) +
                              " elements, expected " + std::to_string(t.shape_.local_size()));
      t.data_ = std::move(local_data);
    }
    return t;
  }

  /// Dense tensor whose elements are computed per global coordinate tuple.
  /// No communication: every span rank fills its own block.
  static Tensor dense_fn(Rank& ctx, IndexTuple shape, DistParams dist,
                         const std::function<Complex(const Coords&)>& fn) {
    Tensor t = make(ctx, Variant::dense, std::move(shape), dist);
    t.fill_from(fn);
    return t;
  }

  /// Dense tensor from a replicated global element vector (row-major).
  static Tensor from_global(Rank& ctx, IndexTuple shape, DistParams dist,
                            const std::vector<Complex>& global) {
    if (static_cast<Dim>(global.size()) != shape.total_size())
      throw InvalidArgument("global element count mismatch");
    Tensor t = make(ctx, Variant::dense, std::move(shape), dist);
    if (t.in_span()) {
      Dim nl = t.shape_.local_size();
      t.data_.assign(global.begin() + t.my_block_ * nl,
                     global.begin() + (t.my_block_ + 1) * nl);
    }
    return t;
  }

  /// Symmetric tensor: same storage as dense, with the half-split layout
  /// (in_dist, out_dist; in_local, out_local) validated.
  static Tensor symmetric(Rank& ctx, IndexTuple shape, DistParams dist,
                          std::vector<Complex> local_data) {
    check_symmetric_shape(shape);
    Tensor t = dense(ctx, std::move(shape), dist, std::move(local_data));
    t.var_ = Variant::symmetric;
    return t;
  }

  static Tensor symmetric_from_global(Rank& ctx, IndexTuple shape, DistParams dist,
                                      const std::vector<Complex>& global) {
    check_symmetric_shape(shape);
    Tensor t = from_global(ctx, std::move(shape), dist, global);
    t.var_ = Variant::symmetric;
    return t;
  }

  /// Diagonal tensor over the symmetric layout; `diag_global` lists the
  /// diagonal in row-major order of the input coordinates.
  static Tensor diagonal(Rank& ctx, IndexTuple shape, DistParams dist,
                         const std::vector<Complex>& diag_global) {
    check_symmetric_shape(shape);
    Tensor t = make(ctx, Variant::diagonal, std::move(shape), dist);
    auto in_d = t.in_dist_dims();
    auto in_l = t.in_local_dims();
    Dim nd_in = 1;
    for (Dim d : in_d) nd_in *= d;
    Dim nl_in = 1;
    for (Dim d : in_l) nl_in *= d;
    if (static_cast<Dim>(diag_global.size()) != nd_in * nl_in)
      throw InvalidArgument("diagonal payload has wrong length");
    if (t.in_span()) {
      // Only blocks with equal input and output distributed coordinates
      // carry data.
      Coords dc = idx::unflat(t.my_block_, t.shape_.dist_dims());
      bool on_diag = true;
      int k = static_cast<int>(in_d.size());
      for (int i = 0; i < k; ++i) on_diag &= (dc[i] == dc[k + i]);
      if (on_diag) {
        Dim b_in = idx::flat(Coords(dc.begin(), dc.begin() + k), in_d);
        t.data_.assign(diag_global.begin() + b_in * nl_in,
                       diag_global.begin() + (b_in + 1) * nl_in);
      }
    }
    return t;
  }

  /// Identity over paired indices: element is 1 iff coords[in_pos[i]] ==
  /// coords[out_pos[i]] for every pair. Index types of a pair may differ,
  /// which is what makes identity insertion equivalent to scatter/gather.
  static Tensor identity(Rank& ctx, IndexTuple shape, DistParams dist,
                         std::vector<int> in_pos, std::vector<int> out_pos) {
    Tensor t = make(ctx, Variant::identity, std::move(shape), dist);
    t.set_pairs(std::move(in_pos), std::move(out_pos), /*crossed=*/false);
    return t;
  }

  /// Swap: element is 1 iff the outputs are the transposed inputs,
  /// coords[out_pos[0]] == coords[in_pos[1]] and coords[out_pos[1]] ==
  /// coords[in_pos[0]].
  static Tensor swap_tensor(Rank& ctx, IndexTuple shape, DistParams dist,
                            std::vector<int> in_pos, std::vector<int> out_pos) {
    if (in_pos.size() != 2 || out_pos.size() != 2)
      throw InvalidArgument("swap pairs exactly two indices");
    Tensor t = make(ctx, Variant::swap, std::move(shape), dist);
    t.set_pairs(std::move(in_pos), std::move(out_pos), /*crossed=*/true);
    return t;
  }

  /// Rank-0 scalar (legal tensor with N_d = N_l = 1).
  static Tensor scalar(Rank& ctx, Complex value, DistParams dist = {}) {
    return dense(ctx, IndexTuple({}, 0), dist, {value});
  }

  // -- metadata --------------------------------------------------------------

  Rank& ctx() const { return *ctx_; }
  Variant variant() const { return var_; }
  const IndexTuple& shape() const { return shape_; }
  const DistParams& dist() const { return dist_; }
  const std::vector<Complex>& local_data() const { return data_; }
  std::vector<Complex>& mutable_local_data() { return data_; }

  Dim span() const { return dist_.span(shape_.dist_size()); }
  bool in_span() const { return in_span_; }
  Dim my_block() const { return my_block_; }
  bool is_canonical_holder() const {
    return in_span_ && my_cycle_ == 0 && my_slot_ == 0;
  }

  std::vector<int> span_ranks() const {
    std::vector<int> out(span());
    for (Dim i = 0; i < span(); ++i) out[i] = static_cast<int>(dist_.offset + i);
    return out;
  }

  const std::vector<int>& equality_in() const { return pair_in_; }
  const std::vector<int>& equality_out() const { return pair_out_; }

  // Half-split input/output views (symmetric and diagonal variants).
  std::vector<Dim> in_dist_dims() const {
    return {shape_.dims.begin(), shape_.dims.begin() + shape_.split / 2};
  }
  std::vector<Dim> in_local_dims() const {
    int nl = shape_.n_local();
    return {shape_.dims.begin() + shape_.split, shape_.dims.begin() + shape_.split + nl / 2};
  }

  // -- element access --------------------------------------------------------

  /// Value at full global coordinates, computed locally. Only valid on ranks
  /// whose block hosts the coordinates (always valid for the computed
  /// variants and on single-span tensors).
  Complex local_element(const Coords& coords) const {
    check_coords(coords);
    switch (var_) {
      case Variant::dense:
      case Variant::symmetric: {
        Coords dc(coords.begin(), coords.begin() + shape_.split);
        Dim b = idx::flat(dc, shape_.dist_dims());
        if (!in_span_ || b != my_block_)
          throw InvalidArgument("rank does not host the requested element");
        Coords lc(coords.begin() + shape_.split, coords.end());
        return data_[flat_offset(lc, shape_)];
      }
      case Variant::diagonal: {
        auto in_d = in_dist_dims();
        auto in_l = in_local_dims();
        int kd = static_cast<int>(in_d.size());
        int kl = static_cast<int>(in_l.size());
        for (int i = 0; i < kd; ++i)
          if (coords[i] != coords[kd + i]) return {0.0, 0.0};
        for (int i = 0; i < kl; ++i)
          if (coords[shape_.split + i] != coords[shape_.split + kl + i]) return {0.0, 0.0};
        Coords dc(coords.begin(), coords.begin() + shape_.split);
        Dim b = idx::flat(dc, shape_.dist_dims());
        if (!in_span_ || b != my_block_)
          throw InvalidArgument("rank does not host the requested element");
        Coords ic(coords.begin() + shape_.split, coords.begin() + shape_.split + kl);
        return data_[idx::flat(ic, in_l)];
      }
      case Variant::identity:
      case Variant::swap: {
        for (std::size_t i = 0; i < eq_in_.size(); ++i)
          if (coords[eq_in_[i]] != coords[eq_out_[i]]) return {0.0, 0.0};
        return {1.0, 0.0};
      }
    }
    return {0.0, 0.0};
  }

  /// Collective element lookup over the span: the canonical holder's value is
  /// broadcast to every span rank. Returns 0 on ranks outside the span.
  Complex element(const Coords& coords) const {
    check_coords(coords);
    if (!in_span_) return {0.0, 0.0};
    if (span() == 1) return local_element(coords);
    Coords dc(coords.begin(), coords.begin() + shape_.split);
    Dim b = idx::flat(dc, shape_.dist_dims());
    int root_world = canonical_rank_of_block(b, dist_);
    Group g = ctx_->group(span_ranks());
    std::vector<Complex> buf;
    if (ctx_->rank() == root_world) buf.push_back(local_element(coords));
    buf = g.broadcast(buf, root_world - static_cast<int>(dist_.offset));
    return buf.at(0);
  }

  /// World-collective element lookup: every rank of the world receives the
  /// value. All world ranks must call.
  Complex element_world(const Coords& coords) const {
    check_coords(coords);
    Coords dc(coords.begin(), coords.begin() + shape_.split);
    Dim b = idx::flat(dc, shape_.dist_dims());
    int root = canonical_rank_of_block(b, dist_);
    Group g = ctx_->world_group();
    std::vector<Complex> buf;
    if (ctx_->rank() == root) buf.push_back(local_element(coords));
    buf = g.broadcast(buf, root);
    return buf.at(0);
  }

  // -- conversions -----------------------------------------------------------

  /// Dense tensor with the same shape, distribution and values. Local work
  /// only; every span rank materialises its block.
  Tensor to_dense() const {
    if (var_ == Variant::dense) return *this;
    Tensor t = make(*ctx_, Variant::dense, shape_, dist_);
    if (var_ == Variant::symmetric) {
      t.data_ = data_;
      return t;
    }
    if (t.in_span()) {
      t.data_.assign(shape_.local_size(), Complex{0.0, 0.0});
      visit_my_nonzeros([&](const Coords& lc, Complex v) {
        t.data_[idx::flat(lc, shape_.local_dims())] = v;
      });
    }
    return t;
  }

  /// Visits the non-zero elements of this rank's block as (local coords,
  /// value). For dense variants that is every element.
  void visit_my_nonzeros(const std::function<void(const Coords&, Complex)>& fn) const {
    if (!in_span_) return;
    switch (var_) {
      case Variant::dense:
      case Variant::symmetric: {
        Odometer od(shape_.local_dims());
        for (Dim i = 0; i < od.count(); ++i) {
          fn(od.coords(), data_[i]);
          od.advance();
        }
        return;
      }
      case Variant::diagonal: {
        auto in_d = in_dist_dims();
        auto in_l = in_local_dims();
        int kd = static_cast<int>(in_d.size());
        Coords dc = idx::unflat(my_block_, shape_.dist_dims());
        for (int i = 0; i < kd; ++i)
          if (dc[i] != dc[kd + i]) return;
        int kl = static_cast<int>(in_l.size());
        Odometer od(in_l);
        Coords lc(2 * kl, 0);
        for (Dim i = 0; i < od.count(); ++i) {
          for (int j = 0; j < kl; ++j) lc[j] = lc[kl + j] = od.coords()[j];
          fn(lc, data_[i]);
          od.advance();
        }
        return;
      }
      case Variant::identity:
      case Variant::swap: {
        visit_special_nonzeros(fn);
        return;
      }
    }
  }

  // -- global views ----------------------------------------------------------

  /// Gathers the full global element vector (row-major) onto every span rank.
  /// Span-collective; ranks outside the span return an empty vector.
  std::vector<Complex> to_global_vector() const {
    if (!in_span_) return {};
    Dim nl = shape_.local_size();
    Dim nd = shape_.dist_size();
    if (span() == 1) {
      std::vector<Complex> out(nd * nl, Complex{0.0, 0.0});
      visit_my_nonzeros([&](const Coords& lc, Complex v) {
        out[my_block_ * nl + idx::flat(lc, shape_.local_dims())] = v;
      });
      return out;
    }
    Group g = ctx_->group(span_ranks());
    std::vector<Complex> mine;
    if (is_canonical_holder()) {
      mine.assign(nl, Complex{0.0, 0.0});
      visit_my_nonzeros([&](const Coords& lc, Complex v) {
        mine[idx::flat(lc, shape_.local_dims())] = v;
      });
    }
    auto parts = g.gather(mine, 0);
    std::vector<Complex> global;
    if (g.rank() == 0) {
      global.assign(nd * nl, Complex{0.0, 0.0});
      for (Dim b = 0; b < nd; ++b) {
        int src = canonical_rank_of_block(b, dist_) - static_cast<int>(dist_.offset);
        const auto& blk = parts[src];
        std::copy(blk.begin(), blk.end(), global.begin() + b * nl);
      }
    }
    return g.broadcast(global, 0);
  }

  // -- serialization ---------------------------------------------------------
  // Binary format: magic "QTNHTEN1", then u32 variant, u32 rank, u32 split,
  // i64 stretch, i64 cycles, i64 offset, i64 dims[rank], u64 payload count,
  // payload as little-endian float64 (re, im) pairs in row-major global
  // order. Dense and symmetric tensors store every element, diagonal tensors
  // store the diagonal, the computed variants store nothing (the identity and
  // swap payload also encodes the paired index positions).

  /// Collective save into a stream; only the first span rank writes, so the
  /// stream may be default-constructed elsewhere.
  void save(std::ostream& os) const {
    auto payload = gather_payload();
    if (in_span_ && ctx_->rank() == dist_.offset) save_with_payload(os, payload);
  }

  /// Collective save: the first span rank writes the file.
  void save(const std::string& path) const {
    auto payload = gather_payload();
    if (in_span_ && ctx_->rank() == dist_.offset) {
      std::ofstream os(path, std::ios::binary);
      if (!os) throw Error("cannot open " + path + " for writing");
      save_with_payload(os, payload);
    }
    if (in_span_ && span() > 1) ctx_->group(span_ranks()).barrier();
  }

  /// Loads a tensor; every rank reads the file independently, no
  /// communication.
  static Tensor load(Rank& ctx, std::istream& is) {
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, "QTNHTEN1", 8) != 0)
      throw Error("not a qtnh tensor stream");
    auto var = static_cast<Variant>(read_u32(is));
    auto rank = read_u32(is);
    auto split = read_u32(is);
    DistParams dist;
    dist.stretch = read_i64(is);
    dist.cycles = read_i64(is);
    dist.offset = read_i64(is);
    std::vector<Dim> dims(rank);
    for (auto& d : dims) d = read_i64(is);
    IndexTuple shape(dims, static_cast<int>(split));
    if (var == Variant::identity || var == Variant::swap) {
      std::uint64_t pairs = read_u64(is);
      std::vector<int> in_pos(pairs), out_pos(pairs);
      for (std::uint64_t i = 0; i < pairs; ++i) {
        in_pos[i] = static_cast<int>(read_i64(is));
        out_pos[i] = static_cast<int>(read_i64(is));
      }
      return var == Variant::identity
                 ? identity(ctx, shape, dist, in_pos, out_pos)
                 : swap_tensor(ctx, shape, dist, in_pos, out_pos);
    }
    std::uint64_t count = read_u64(is);
    std::vector<Complex> payload(count);
    for (auto& c : payload) {
      double re = read_f64(is);
      double im = read_f64(is);
      c = {re, im};
    }
    switch (var) {
      case Variant::dense: return from_global(ctx, shape, dist, payload);
      case Variant::symmetric: return symmetric_from_global(ctx, shape, dist, payload);
      case Variant::diagonal: return diagonal(ctx, shape, dist, payload);
      default: throw Error("corrupt tensor stream");
    }
  }

  static Tensor load(Rank& ctx, const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open " + path);
    return load(ctx, is);
  }

  /// Rebuilds the same tensor value under a different execution context or
  /// distribution metadata (used internally; data is moved verbatim).
  static Tensor adopt(Rank& ctx, Variant var, IndexTuple shape, DistParams dist,
                      std::vector<Complex> local_data) {
    Tensor t = make(ctx, var, std::move(shape), dist);
    if (t.in_span()) t.data_ = std::move(local_data);
    return t;
  }

 private:
  static Tensor make(Rank& ctx, Variant var, IndexTuple shape, DistParams dist) {
    shape.validate();
    dist.validate();
    Tensor t;
    t.ctx_ = &ctx;
    t.var_ = var;
    t.shape_ = std::move(shape);
    t.dist_ = dist;
    if (dist.offset + dist.span(t.shape_.dist_size()) > ctx.size())
      throw ResourceError("tensor span exceeds world size",
                          dist.offset + dist.span(t.shape_.dist_size()));
    BlockLocation loc;
    t.in_span_ = locate_rank(ctx.rank(), t.shape_.dist_size(), dist, &loc);
    if (t.in_span_) {
      t.my_block_ = loc.block;
      t.my_cycle_ = loc.cycle;
      t.my_slot_ = loc.slot;
    }
    return t;
  }

  static void check_symmetric_shape(const IndexTuple& shape) {
    if (shape.split % 2 != 0 || shape.n_local() % 2 != 0)
      throw InvalidArgument("symmetric tensors split both index groups in half");
    for (int i = 0; i < shape.split / 2; ++i)
      if (shape.dims[i] != shape.dims[shape.split / 2 + i])
        throw InvalidArgument("symmetric distributed dimensions differ");
    int nl = shape.n_local();
    for (int i = 0; i < nl / 2; ++i)
      if (shape.dims[shape.split + i] != shape.dims[shape.split + nl / 2 + i])
        throw InvalidArgument("symmetric local dimensions differ");
  }

  void set_pairs(std::vector<int> in_pos, std::vector<int> out_pos, bool crossed) {
    if (in_pos.size() != out_pos.size())
      throw InvalidArgument("input/output position lists differ in length");
    std::vector<bool> used(shape_.n_idx(), false);
    auto check = [&](int p) {
      if (p < 0 || p >= shape_.n_idx() || used[p])
        throw InvalidArgument("invalid index pairing");
      used[p] = true;
    };
    for (int p : in_pos) check(p);
    for (int p : out_pos) check(p);
    if (static_cast<int>(in_pos.size() + out_pos.size()) != shape_.n_idx())
      throw InvalidArgument("every index must belong to exactly one pair");
    // Store as equality constraints; swap crosses the pairing.
    pair_in_ = in_pos;
    pair_out_ = out_pos;
    std::vector<int> eq_in = in_pos, eq_out = out_pos;
    if (crossed) std::swap(eq_out[0], eq_out[1]);
    for (std::size_t i = 0; i < eq_in.size(); ++i)
      if (shape_.dims[eq_in[i]] != shape_.dims[eq_out[i]])
        throw InvalidArgument("paired indices must have equal dimensions");
    eq_in_ = std::move(eq_in);
    eq_out_ = std::move(eq_out);
  }

  void fill_from(const std::function<Complex(const Coords&)>& fn) {
    if (!in_span_) return;
    data_.assign(shape_.local_size(), Complex{0.0, 0.0});
    Coords full(shape_.n_idx(), 0);
    Coords dc = idx::unflat(my_block_, shape_.dist_dims());
    std::copy(dc.begin(), dc.end(), full.begin());
    Odometer od(shape_.local_dims());
    for (Dim i = 0; i < od.count(); ++i) {
      std::copy(od.coords().begin(), od.coords().end(), full.begin() + shape_.split);
      data_[i] = fn(full);
      od.advance();
    }
  }

  void check_coords(const Coords& coords) const {
    if (static_cast<int>(coords.size()) != shape_.n_idx())
      throw InvalidArgument("expected " + std::to_string(shape_.n_idx()) + " coordinates");
    for (int i = 0; i < shape_.n_idx(); ++i)
      if (coords[i] < 0 || coords[i] >= shape_.dims[i])
        throw InvalidArgument("coordinate out of bounds at index " + std::to_string(i));
  }

  // Nonzeros of an equality-constrained (identity/swap) block: distributed
  // coordinates are fixed by the block, locals iterate over the free
  // diagonal directions.
  void visit_special_nonzeros(const std::function<void(const Coords&, Complex)>& fn) const {
    Coords full(shape_.n_idx(), -1);
    Coords dc = idx::unflat(my_block_, shape_.dist_dims());
    std::copy(dc.begin(), dc.end(), full.begin());
    // Propagate constraints with a fixed-point pass; collect free local pairs.
    std::vector<std::pair<int, int>> free_pairs;
    for (std::size_t i = 0; i < eq_in_.size(); ++i) {
      int a = eq_in_[i], b = eq_out_[i];
      bool a_dist = a < shape_.split, b_dist = b < shape_.split;
      if (a_dist && b_dist) {
        if (full[a] != full[b]) return;  // off-diagonal block, all zero
      } else if (a_dist) {
        full[b] = full[a];
      } else if (b_dist) {
        full[a] = full[b];
      } else {
        free_pairs.emplace_back(a, b);
      }
    }
    std::vector<Dim> free_dims;
    free_dims.reserve(free_pairs.size());
    for (auto& [a, b] : free_pairs) free_dims.push_back(shape_.dims[a]);
    Odometer od(free_dims);
    Coords lc(shape_.n_local(), 0);
    for (Dim n = 0; n < od.count(); ++n) {
      for (std::size_t i = 0; i < free_pairs.size(); ++i) {
        full[free_pairs[i].first] = od.coords()[i];
        full[free_pairs[i].second] = od.coords()[i];
      }
      for (int i = 0; i < shape_.n_local(); ++i) lc[i] = full[shape_.split + i];
      fn(lc, Complex{1.0, 0.0});
      od.advance();
    }
  }

  // Global payload for serialization (gathered onto every span rank).
  std::vector<Complex> gather_payload() const {
    switch (var_) {
      case Variant::dense:
      case Variant::symmetric:
        return to_global_vector();
      case Variant::diagonal: {
        auto in_d = in_dist_dims();
        auto in_l = in_local_dims();
        Dim nd_in = 1;
        for (Dim d : in_d) nd_in *= d;
        Dim nl_in = 1;
        for (Dim d : in_l) nl_in *= d;
        if (!in_span_) return {};
        if (span() == 1) {
          std::vector<Complex> out(nd_in * nl_in);
          std::copy(data_.begin(), data_.end(), out.begin());
          return out;
        }
        Group g = ctx_->group(span_ranks());
        // Canonical holders of on-diagonal blocks contribute their slice.
        std::vector<Complex> mine;
        if (is_canonical_holder() && !data_.empty()) mine = data_;
        auto parts = g.gather(mine, 0);
        std::vector<Complex> global;
        if (g.rank() == 0) {
          global.assign(nd_in * nl_in, Complex{0.0, 0.0});
          int kd = static_cast<int>(in_d.size());
          for (Dim bi = 0; bi < nd_in; ++bi) {
            Coords ic = idx::unflat(bi, in_d);
            Coords dc(2 * kd, 0);
            for (int i = 0; i < kd; ++i) dc[i] = dc[kd + i] = ic[i];
            Dim b = idx::flat(dc, shape_.dist_dims());
            int src = canonical_rank_of_block(b, dist_) - static_cast<int>(dist_.offset);
            const auto& blk = parts[src];
            std::copy(blk.begin(), blk.end(), global.begin() + bi * nl_in);
          }
        }
        return g.broadcast(global, 0);
      }
      case Variant::identity:
      case Variant::swap:
        return {};
    }
    return {};
  }

  void save_with_payload(std::ostream& os, const std::vector<Complex>& payload) const {
    os.write("QTNHTEN1", 8);
    write_u32(os, static_cast<std::uint32_t>(var_));
    write_u32(os, static_cast<std::uint32_t>(shape_.n_idx()));
    write_u32(os, static_cast<std::uint32_t>(shape_.split));
    write_i64(os, dist_.stretch);
    write_i64(os, dist_.cycles);
    write_i64(os, dist_.offset);
    for (Dim d : shape_.dims) write_i64(os, d);
    if (var_ == Variant::identity || var_ == Variant::swap) {
      write_u64(os, pair_in_.size());
      for (std::size_t i = 0; i < pair_in_.size(); ++i) {
        write_i64(os, pair_in_[i]);
        write_i64(os, pair_out_[i]);
      }
    } else {
      write_u64(os, payload.size());
      for (Complex c : payload) {
        write_f64(os, c.real());
        write_f64(os, c.imag());
      }
    }
  }

  static void write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
  static void write_u64(std::ostream& os, std::uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
  static void write_i64(std::ostream& os, std::int64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
  static void write_f64(std::ostream& os, double v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
  static std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!is) throw Error("truncated tensor stream");
    return v;
  }
  static std::uint64_t read_u64(std::istream& is) {
    std::uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!is) throw Error("truncated tensor stream");
    return v;
  }
  static std::int64_t read_i64(std::istream& is) {
    std::int64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!is) throw Error("truncated tensor stream");
    return v;
  }
  static double read_f64(std::istream& is) {
    double v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!is) throw Error("truncated tensor stream");
    return v;
  }

  Rank* ctx_ = nullptr;
  Variant var_ = Variant::dense;
  IndexTuple shape_;
  DistParams dist_;
  std::vector<Complex> data_;
  bool in_span_ = false;
  Dim my_block_ = 0;
  Dim my_cycle_ = 0;
  Dim my_slot_ = 0;
  std::vector<int> pair_in_, pair_out_;  // as constructed
  std::vector<int> eq_in_, eq_out_;      // equality constraints
};

}  // namespace qtnh
