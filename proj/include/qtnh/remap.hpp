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

#include <algorithm>

#include "qtnh/tensor.hpp"

// Element redistribution engine. Every structural operation (permutation,
// rebroadcast, matrix conversion) is realised as one collective variable
// all-to-all of explicitly packed (address, value) items over the union of
// the involved spans. Only canonical copies send; all destination copies
// receive, so broadcast replicas are rebuilt for free.

namespace qtnh::remap {

struct Item {
  Dim addr;
  double re, im;
};
static_assert(std::is_trivially_copyable_v<Item>);

/// Sorted union of rank spans.
inline std::vector<int> union_members(std::initializer_list<std::pair<Dim, Dim>> spans) {
  std::vector<int> out;
  for (auto [off, span] : spans)
    for (Dim r = off; r < off + span; ++r) out.push_back(static_cast<int>(r));
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

/// member_of[world_rank] = index in `members`, or -1.
inline std::vector<int> member_index(const std::vector<int>& members, int world_size) {
  std::vector<int> out(world_size, -1);
  for (std::size_t i = 0; i < members.size(); ++i) out[members[i]] = static_cast<int>(i);
  return out;
}

/// Produces the per-member send lists for this rank's canonical block of
/// `src`, where the destination address of a source element is an affine
/// function of its coordinates: addr = base + sum_i coords[i] * weight[i].
/// addr_to_targets maps an address to (destination ranks, local address).
template <class TargetsFn>
void pack_sends(const Tensor& src, const std::vector<Dim>& weights,
                const std::vector<int>& member_of, std::size_t n_members,
                const TargetsFn& addr_to_targets,
                std::vector<std::vector<Item>>& sends) {
  sends.assign(n_members, {});
  if (!src.is_canonical_holder()) return;
  const auto& shape = src.shape();
  Dim base = 0;
  {
    Coords dc = idx::unflat(src.my_block(), shape.dist_dims());
    for (int i = 0; i < shape.split; ++i) base += dc[i] * weights[i];
  }
  auto emit = [&](Dim addr, Complex v) {
    if (v.real() == 0.0 && v.imag() == 0.0) return;  // destination starts zeroed
    addr_to_targets(addr, [&](int world_rank, Dim local_addr) {
      sends[member_of[world_rank]].push_back(Item{local_addr, v.real(), v.imag()});
    });
  };
  if (src.variant() == Variant::dense || src.variant() == Variant::symmetric) {
    // Incremental address update over the row-major local iteration order.
    auto ld = shape.local_dims();
    int nl = static_cast<int>(ld.size());
    std::vector<Dim> wl(weights.begin() + shape.split, weights.end());
    std::vector<Dim> roll(nl, 0);
    for (int j = 0; j < nl; ++j) {
      roll[j] = wl[j];
      for (int k = j + 1; k < nl; ++k) roll[j] -= (ld[k] - 1) * wl[k];
    }
    const auto& data = src.local_data();
    Odometer od(ld);
    Dim addr = base;
    for (Dim i = 0; i < od.count(); ++i) {
      emit(addr, data[i]);
      int j = od.advance();
      if (j >= 0) addr += roll[j];
    }
  } else {
    std::vector<Dim> wl(weights.begin() + shape.split, weights.end());
    src.visit_my_nonzeros([&](const Coords& lc, Complex v) {
      Dim addr = base;
      for (std::size_t i = 0; i < wl.size(); ++i) addr += lc[i] * wl[i];
      emit(addr, v);
    });
  }
}

/// Tensor-to-tensor remap. axis_map[src_pos] = dst_pos; destination
/// dimensions must be >= the mapped source dimensions (larger means
/// zero-embedding). Collective over the union of both spans.
inline Tensor tensor_to_tensor(const Tensor& src, IndexTuple dst_shape,
                               DistParams dst_dist, const std::vector<int>& axis_map,
                               Variant dst_variant = Variant::dense) {
  const auto& ss = src.shape();
  if (static_cast<int>(axis_map.size()) != ss.n_idx())
    throw InvalidArgument("axis map size does not match tensor rank");
  std::vector<bool> seen(dst_shape.n_idx(), false);
  for (int i = 0; i < ss.n_idx(); ++i) {
    int p = axis_map[i];
    if (p < 0 || p >= dst_shape.n_idx() || seen[p])
      throw InvalidArgument("axis map is not a bijection");
    seen[p] = true;
    if (dst_shape.dims[p] < ss.dims[i])
      throw InvalidArgument("destination dimension smaller than source");
  }
  for (bool s : seen)
    if (!s) throw InvalidArgument("axis map is not a bijection");

  Rank& ctx = src.ctx();
  Tensor dst = Tensor::adopt(ctx, dst_variant, dst_shape, dst_dist, {});
  if (dst.in_span())
    dst.mutable_local_data().assign(dst_shape.local_size(), Complex{0.0, 0.0});

  auto members = union_members({{src.dist().offset, src.span()},
                                {dst_dist.offset, dst.span()}});
  auto member_of = member_index(members, ctx.size());
  if (member_of[ctx.rank()] < 0) return dst;

  auto dst_strides = idx::strides(dst_shape.dims);
  std::vector<Dim> weights(ss.n_idx());
  for (int i = 0; i < ss.n_idx(); ++i) weights[i] = dst_strides[axis_map[i]];

  Dim dst_nl = dst_shape.local_size();
  Dim dst_nd = dst_shape.dist_size();
  std::vector<std::vector<Item>> sends;
  pack_sends(src, weights, member_of, members.size(),
             [&](Dim addr, auto&& deliver) {
               Dim b = addr / dst_nl, off = addr % dst_nl;
               for (Dim c = 0; c < dst_dist.cycles; ++c)
                 for (Dim t = 0; t < dst_dist.stretch; ++t)
                   deliver(static_cast<int>(dst_dist.offset +
                                            c * dst_dist.stretch * dst_nd +
                                            b * dst_dist.stretch + t),
                           off);
             },
             sends);

  Group g = ctx.group(members);
  auto recvd = g.all_to_all_v(sends);
  if (dst.in_span()) {
    auto& buf = dst.mutable_local_data();
    for (const auto& list : recvd)
      for (const Item& it : list) buf[it.addr] = Complex{it.re, it.im};
  }
  return dst;
}

}  // namespace qtnh::remap
