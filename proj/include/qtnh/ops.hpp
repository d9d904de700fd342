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

#include "qtnh/remap.hpp"

namespace qtnh::ops {

/// Index permutation. `perm[new_pos] = old_pos`: the result's index at
/// position p is the source index perm[p], so element(result, c') =
/// element(src, c) with c'[p] = c[perm[p]]. Broadcast parameters are kept;
/// a permutation that grows the distributed size recruits additional ranks
/// (asymmetric permutation) and fails with a resource error if the world is
/// too small.
inline Tensor permute(const Tensor& t, const std::vector<int>& perm, int new_split) {
  const auto& shape = t.shape();
  int r = shape.n_idx();
  if (static_cast<int>(perm.size()) != r)
    throw InvalidArgument("permutation size does not match tensor rank");
  std::vector<int> inv(r, -1);
  for (int p = 0; p < r; ++p) {
    int o = perm[p];
    if (o < 0 || o >= r || inv[o] != -1)
      throw InvalidArgument("invalid index permutation");
    inv[o] = p;
  }
  if (new_split < 0 || new_split > r)
    throw InvalidArgument("invalid split for permuted tensor");

  bool identity = new_split == shape.split;
  for (int p = 0; p < r && identity; ++p) identity &= (perm[p] == p);
  if (identity) return t;

  std::vector<Dim> new_dims(r);
  for (int p = 0; p < r; ++p) new_dims[p] = shape.dims[perm[p]];
  return remap::tensor_to_tensor(t, IndexTuple(new_dims, new_split), t.dist(), inv);
}

/// Changes the broadcast pattern, keeping shape and values. For the computed
/// variants this is a metadata change; stored variants move elements with one
/// all-to-all over the union of the old and new spans.
inline Tensor rebcast(const Tensor& t, DistParams new_dist) {
  new_dist.validate();
  switch (t.variant()) {
    case Variant::identity:
      return Tensor::identity(t.ctx(), t.shape(), new_dist, t.equality_in(),
                              t.equality_out());
    case Variant::swap:
      return Tensor::swap_tensor(t.ctx(), t.shape(), new_dist, t.equality_in(),
                                 t.equality_out());
    case Variant::diagonal: {
      // Same blocks, new homes: route each diagonal slice directly.
      Rank& ctx = t.ctx();
      auto in_d = t.in_dist_dims();
      auto in_l = t.in_local_dims();
      Dim nd_in = 1;
      for (Dim d : in_d) nd_in *= d;
      Dim nl_in = 1;
      for (Dim d : in_l) nl_in *= d;
      Tensor dst = Tensor::adopt(ctx, Variant::diagonal, t.shape(), new_dist, {});
      auto members = remap::union_members(
          {{t.dist().offset, t.span()}, {new_dist.offset, dst.span()}});
      auto member_of = remap::member_index(members, ctx.size());
      if (member_of[ctx.rank()] < 0) return dst;
      std::vector<std::vector<remap::Item>> sends(members.size());
      if (t.is_canonical_holder() && !t.local_data().empty()) {
        Coords dc = idx::unflat(t.my_block(), t.shape().dist_dims());
        for (int dest : home_ranks(dc, t.shape(), new_dist)) {
          auto& list = sends[member_of[dest]];
          for (Dim i = 0; i < nl_in; ++i) {
            Complex v = t.local_data()[i];
            if (v != Complex{0.0, 0.0}) list.push_back({i, v.real(), v.imag()});
          }
        }
      }
      Group g = ctx.group(members);
      auto recvd = g.all_to_all_v(sends);
      if (dst.in_span()) {
        bool on_diag = true;
        Coords dc = idx::unflat(dst.my_block(), t.shape().dist_dims());
        int kd = static_cast<int>(in_d.size());
        for (int i = 0; i < kd; ++i) on_diag &= (dc[i] == dc[kd + i]);
        if (on_diag) {
          auto& buf = dst.mutable_local_data();
          buf.assign(nl_in, Complex{0.0, 0.0});
          for (const auto& list : recvd)
            for (const auto& it : list) buf[it.addr] = Complex{it.re, it.im};
        }
      }
      return dst;
    }
    case Variant::dense:
    case Variant::symmetric: {
      std::vector<int> ident(t.shape().n_idx());
      for (std::size_t i = 0; i < ident.size(); ++i) ident[i] = static_cast<int>(i);
      return remap::tensor_to_tensor(t, t.shape(), new_dist, ident, t.variant());
    }
  }
  throw Error("unreachable");
}

/// Converts the local index at tuple position `pos` to a distributed one.
/// The index moves to the end of the distributed group; everything else keeps
/// its order. Equivalent to contracting with an identity tensor whose output
/// index is distributed.
inline Tensor scatter_index(const Tensor& t, int pos) {
  const auto& shape = t.shape();
  if (pos < shape.split || pos >= shape.n_idx())
    throw InvalidArgument("scatter_index position must name a local index");
  std::vector<int> perm;
  perm.reserve(shape.n_idx());
  for (int i = 0; i < shape.split; ++i) perm.push_back(i);
  perm.push_back(pos);
  for (int i = shape.split; i < shape.n_idx(); ++i)
    if (i != pos) perm.push_back(i);
  return permute(t.variant() == Variant::dense ? t : t.to_dense(), perm, shape.split + 1);
}

/// Converts the distributed index at tuple position `pos` to a local one
/// (inverse of scatter_index).
inline Tensor gather_index(const Tensor& t, int pos) {
  const auto& shape = t.shape();
  if (pos < 0 || pos >= shape.split)
    throw InvalidArgument("gather_index position must name a distributed index");
  std::vector<int> perm;
  perm.reserve(shape.n_idx());
  for (int i = 0; i < shape.split; ++i)
    if (i != pos) perm.push_back(i);
  perm.push_back(pos);
  for (int i = shape.split; i < shape.n_idx(); ++i) perm.push_back(i);
  return permute(t.variant() == Variant::dense ? t : t.to_dense(), perm, shape.split - 1);
}

/// Elementwise complex conjugate.
inline Tensor conj(const Tensor& t) {
  if (t.variant() == Variant::identity || t.variant() == Variant::swap) return t;
  Tensor out = t;
  for (auto& v : out.mutable_local_data()) v = std::conj(v);
  return out;
}

/// Uniform scale by a complex factor.
inline Tensor scale(const Tensor& t, Complex alpha) {
  Tensor out = (t.variant() == Variant::identity || t.variant() == Variant::swap)
                   ? t.to_dense()
                   : t;
  for (auto& v : out.mutable_local_data()) v *= alpha;
  return out;
}

/// Keeps the leading `new_local_dims[i]` entries of every local index. Pure
/// local operation (distributed dimensions are untouched); dense tensors
/// only.
inline Tensor slice_local_dims(const Tensor& t, const std::vector<Dim>& new_local_dims) {
  const auto& shape = t.shape();
  auto ld = shape.local_dims();
  if (new_local_dims.size() != ld.size())
    throw InvalidArgument("local dimension count mismatch");
  bool same = true;
  for (std::size_t i = 0; i < ld.size(); ++i) {
    if (new_local_dims[i] > ld[i])
      throw InvalidArgument("slice cannot grow a dimension");
    same &= (new_local_dims[i] == ld[i]);
  }
  if (same) return t;
  if (t.variant() != Variant::dense) return slice_local_dims(t.to_dense(), new_local_dims);
  std::vector<Dim> dims = shape.dist_dims();
  dims.insert(dims.end(), new_local_dims.begin(), new_local_dims.end());
  Tensor out = Tensor::adopt(t.ctx(), Variant::dense, IndexTuple(dims, shape.split),
                             t.dist(), {});
  if (out.in_span()) {
    auto strides = idx::strides(ld);
    std::vector<Complex> buf;
    buf.reserve(out.shape().local_size());
    Odometer od(new_local_dims);
    for (Dim i = 0; i < od.count(); ++i) {
      Dim off = 0;
      for (std::size_t k = 0; k < ld.size(); ++k) off += od.coords()[k] * strides[k];
      buf.push_back(t.local_data()[off]);
      od.advance();
    }
    out.mutable_local_data() = std::move(buf);
  }
  return out;
}

/// Zero-pads every local index up to `new_local_dims[i]` (inverse of
/// slice_local_dims).
inline Tensor pad_local_dims(const Tensor& t, const std::vector<Dim>& new_local_dims) {
  const auto& shape = t.shape();
  auto ld = shape.local_dims();
  if (new_local_dims.size() != ld.size())
    throw InvalidArgument("local dimension count mismatch");
  bool same = true;
  for (std::size_t i = 0; i < ld.size(); ++i) {
    if (new_local_dims[i] < ld[i]) throw InvalidArgument("pad cannot shrink a dimension");
    same &= (new_local_dims[i] == ld[i]);
  }
  if (same) return t;
  if (t.variant() != Variant::dense) return pad_local_dims(t.to_dense(), new_local_dims);
  std::vector<Dim> dims = shape.dist_dims();
  dims.insert(dims.end(), new_local_dims.begin(), new_local_dims.end());
  Tensor out = Tensor::adopt(t.ctx(), Variant::dense, IndexTuple(dims, shape.split),
                             t.dist(), {});
  if (out.in_span()) {
    auto strides = idx::strides(new_local_dims);
    std::vector<Complex> buf(out.shape().local_size(), Complex{0.0, 0.0});
    Odometer od(ld);
    for (Dim i = 0; i < od.count(); ++i) {
      Dim off = 0;
      for (std::size_t k = 0; k < ld.size(); ++k) off += od.coords()[k] * strides[k];
      buf[off] = t.local_data()[i];
      od.advance();
    }
    out.mutable_local_data() = std::move(buf);
  }
  return out;
}

/// Removes a size-1 index. Metadata-only: flat layouts are unaffected by
/// unit dimensions.
inline Tensor squeeze(const Tensor& t, int pos) {
  const auto& shape = t.shape();
  if (pos < 0 || pos >= shape.n_idx() || shape.dims[pos] != 1)
    throw InvalidArgument("squeeze needs a size-1 index");
  if (t.variant() != Variant::dense) return squeeze(t.to_dense(), pos);
  std::vector<Dim> dims = shape.dims;
  dims.erase(dims.begin() + pos);
  int split = shape.split - (pos < shape.split ? 1 : 0);
  return Tensor::adopt(t.ctx(), Variant::dense, IndexTuple(dims, split), t.dist(),
                       std::vector<Complex>(t.local_data()));
}

/// Inserts a size-1 index at `pos` (becomes distributed when pos < split+1
/// and as_dist is set).
inline Tensor unsqueeze(const Tensor& t, int pos, bool as_dist = false) {
  const auto& shape = t.shape();
  if (pos < 0 || pos > shape.n_idx()) throw InvalidArgument("unsqueeze position out of range");
  if (as_dist && pos > shape.split)
    throw InvalidArgument("distributed index must precede the split");
  if (!as_dist && pos < shape.split)
    throw InvalidArgument("local index must follow the split");
  if (t.variant() != Variant::dense) return unsqueeze(t.to_dense(), pos, as_dist);
  std::vector<Dim> dims = shape.dims;
  dims.insert(dims.begin() + pos, 1);
  int split = shape.split + (as_dist ? 1 : 0);
  return Tensor::adopt(t.ctx(), Variant::dense, IndexTuple(dims, split), t.dist(),
                       std::vector<Complex>(t.local_data()));
}

}  // namespace qtnh::ops
