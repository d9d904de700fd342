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

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>

#include "qtnh/ops.hpp"
#include "test_util.hpp"

using namespace qtnh;
using testutil::rt_assert;
using testutil::run_collect;

namespace {

std::vector<Complex> iota_global(Dim n) {
  std::vector<Complex> v(n);
  for (Dim i = 0; i < n; ++i) v[i] = {double(i + 1), 0.1 * double(i)};
  return v;
}

// Reference permutation on a replicated global vector (perm[new] = old).
std::vector<Complex> permute_global(const std::vector<Complex>& global,
                                    const std::vector<Dim>& dims,
                                    const std::vector<int>& perm) {
  std::vector<Dim> new_dims(dims.size());
  for (std::size_t p = 0; p < perm.size(); ++p) new_dims[p] = dims[perm[p]];
  std::vector<Complex> out(global.size());
  Odometer od(new_dims);
  Coords old_coords(dims.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t p = 0; p < perm.size(); ++p) old_coords[perm[p]] = od.coords()[p];
    out[i] = global[idx::flat(old_coords, dims)];
    od.advance();
  }
  return out;
}

std::vector<Dim> random_dims(std::uint64_t seed, int max_rank) {
  int r = 1 + static_cast<int>(hash_counter(seed, 1) % max_rank);
  std::vector<Dim> dims(r);
  for (int i = 0; i < r; ++i) dims[i] = 1 + static_cast<Dim>(hash_counter(seed, 2, i) % 3);
  return dims;
}

std::vector<Complex> sorted_elems(std::vector<Complex> v) {
  std::sort(v.begin(), v.end(), [](Complex a, Complex b) {
    return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
  });
  return v;
}

}  // namespace

TEST_CASE("identity permutation returns the tensor unchanged") {
  World w(2);
  auto global = iota_global(16);
  auto got = run_collect(w, [&](Rank& rk) {
    Tensor t = Tensor::from_global(rk, IndexTuple({2, 2, 4}, 1), {1, 1, 0}, global);
    return ops::permute(t, {0, 1, 2}, 1).to_global_vector();
  });
  CHECK(got == global);
}

TEST_CASE("matrix transpose") {
  World w(1);
  auto got = run_collect(w, [](Rank& rk) {
    Tensor t = Tensor::from_global(rk, IndexTuple({2, 2}, 0), {},
                                   {{1, 0}, {2, 0}, {3, 0}, {4, 0}});
    return ops::permute(t, {1, 0}, 0).to_global_vector();
  });
  CHECK(got == std::vector<Complex>{{1, 0}, {3, 0}, {2, 0}, {4, 0}});
}

TEST_CASE("asymmetric permutation recruits more ranks") {
  // (2;2,4,2) -> (4;2,2,2): the 4-dimensional local index becomes
  // distributed, growing the span from 2 to 4 ranks.
  World w(4);
  auto global = iota_global(32);
  auto got = run_collect(w, [&](Rank& rk) {
    Tensor t = Tensor::from_global(rk, IndexTuple({2, 2, 4, 2}, 1), {1, 1, 0}, global);
    rt_assert(t.span() == 2, "original span is 2");
    Tensor p = ops::permute(t, {2, 0, 1, 3}, 1);
    rt_assert(p.span() == 4, "permuted span is 4");
    rt_assert(p.shape().str() == "(4;2,2,2)", "new tuple");
    return p.to_global_vector();
  });
  CHECK(got == permute_global(global, {2, 2, 4, 2}, {2, 0, 1, 3}));

  // Not enough ranks: resource error.
  World w2(2);
  CHECK_THROWS_AS(w2.run([&](Rank& rk) {
                    Tensor t = Tensor::from_global(rk, IndexTuple({2, 2, 4, 2}, 1),
                                                   {1, 1, 0}, global);
                    ops::permute(t, {2, 0, 1, 3}, 1);
                  }),
                  ResourceError);
}

TEST_CASE("permutation round trip and composition properties") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    World w(4);
    w.run([seed](Rank& rk) {
      auto dims = random_dims(seed, 5);
      int r = static_cast<int>(dims.size());
      int split = static_cast<int>(hash_counter(seed, 3) % (r + 1));
      IndexTuple shape(dims, split);
      while (shape.dist_size() > 4) shape.split--;
      auto global = iota_global(shape.total_size());
      Tensor t = Tensor::from_global(rk, shape, {1, 1, 0}, global);

      std::vector<int> p(r), q(r);
      for (int i = 0; i < r; ++i) p[i] = q[i] = i;
      for (int i = r - 1; i > 0; --i) {
        std::swap(p[i], p[hash_counter(seed, 4, i) % (i + 1)]);
        std::swap(q[i], q[hash_counter(seed, 5, i) % (i + 1)]);
      }
      auto fits = [&](const std::vector<int>& perm, int s) {
        Dim nd = 1;
        for (int i = 0; i < s; ++i) nd *= dims[perm[i]];
        return nd <= 4;
      };
      int new_split = static_cast<int>(hash_counter(seed, 6) % (r + 1));
      while (!fits(p, new_split)) new_split--;

      Tensor tp = ops::permute(t, p, new_split);
      std::vector<int> pinv(r);
      for (int i = 0; i < r; ++i) pinv[p[i]] = i;
      Tensor back = ops::permute(tp, pinv, shape.split);
      if (back.in_span())
        rt_assert(back.to_global_vector() == global, "round trip restores elements");

      int qsplit = shape.split;
      while (!fits(q, qsplit)) qsplit--;
      std::vector<int> comp(r);
      for (int i = 0; i < r; ++i) comp[i] = q[p[i]];
      int csplit = new_split;
      while (!fits(comp, csplit)) csplit--;
      Tensor tqp = ops::permute(ops::permute(t, q, qsplit), p, csplit);
      Tensor tc = ops::permute(t, comp, csplit);
      if (tc.in_span())
        rt_assert(tqp.to_global_vector() == tc.to_global_vector(),
                  "composition of permutations");
    });
  }
  SUCCEED();
}

TEST_CASE("rebcast changes the pattern and keeps values") {
  World w(4);
  auto global = iota_global(4);
  w.run([&](Rank& rk) {
    Tensor t = Tensor::from_global(rk, IndexTuple({2, 2}, 1), {1, 1, 0}, global);

    // stretch 1 -> 2: each block repeated on two consecutive ranks.
    Tensor s = ops::rebcast(t, {2, 1, 0});
    rt_assert(s.span() == 4, "stretch doubles the span");
    rt_assert(s.to_global_vector() == global, "values preserved under stretch");
    BlockLocation loc;
    rt_assert(locate_rank(rk.rank(), 2, s.dist(), &loc) && loc.block == rk.rank() / 2,
              "blocks repeat on consecutive ranks");

    // cycles 1 -> 2: whole tensor repeated on the next rank region.
    Tensor c = ops::rebcast(t, {1, 2, 0});
    rt_assert(c.span() == 4, "cycle doubles the span");
    rt_assert(c.to_global_vector() == global, "values preserved under cycles");
    rt_assert(locate_rank(rk.rank(), 2, c.dist(), &loc) && loc.block == rk.rank() % 2,
              "global structure repeats");

    // No-op rebcast.
    Tensor n = ops::rebcast(t, t.dist());
    if (n.in_span()) rt_assert(n.to_global_vector() == global, "no-op rebcast");

    // Offset move.
    Tensor o = ops::rebcast(t, {1, 1, 2});
    rt_assert(o.dist().offset == 2, "offset moved");
    if (o.in_span()) rt_assert(o.to_global_vector() == global, "offset keeps values");
  });
  SUCCEED();
}

TEST_CASE("rebcast preserves the variant without materialising") {
  World w(8);
  w.run([](Rank& rk) {
    Tensor dg =
        Tensor::diagonal(rk, IndexTuple({2, 2, 2, 2}, 2), {1, 1, 0}, iota_global(4));
    Tensor moved = ops::rebcast(dg, {1, 2, 0});
    rt_assert(moved.variant() == Variant::diagonal, "diagonal stays diagonal");
    auto dg_dense = dg.to_dense().to_global_vector();
    auto moved_dense = moved.to_dense().to_global_vector();
    if (moved.in_span() && dg.in_span())
      rt_assert(moved_dense == dg_dense, "diagonal rebcast keeps values");

    Tensor id = Tensor::identity(rk, IndexTuple({2, 2}, 1), {1, 1, 0}, {0}, {1});
    Tensor id2 = ops::rebcast(id, {2, 1, 1});
    rt_assert(id2.variant() == Variant::identity, "identity stays identity");
    rt_assert(id2.dist().offset == 1, "identity rebcast moves offset");
    auto id_dense = id.to_dense().to_global_vector();
    auto id2_dense = id2.to_dense().to_global_vector();
    if (id2.in_span() && id.in_span())
      rt_assert(id2_dense == id_dense, "identity rebcast keeps values");
  });
  SUCCEED();
}

TEST_CASE("scatter and gather indices") {
  World w(2);
  auto global = iota_global(4);
  w.run([&](Rank& rk) {
    Tensor t = Tensor::from_global(rk, IndexTuple({2, 2}, 0), {}, global);

    Tensor s = ops::scatter_index(t, 0);
    rt_assert(s.shape().str() == "(2;2)", "scatter moves the index across the split");
    rt_assert(s.to_global_vector() == global, "scatter keeps values");

    Tensor g = ops::gather_index(s, 0);
    rt_assert(g.shape().str() == "(;2,2)", "gather restores the tuple");
    testutil::expect_global(g, global, "gather keeps values");

    bool threw = false;
    try {
      ops::scatter_index(t, 2);
    } catch (const InvalidArgument&) {
      threw = true;
    }
    rt_assert(threw, "scatter of non-local position rejected");
    threw = false;
    try {
      ops::gather_index(t, 0);
    } catch (const InvalidArgument&) {
      threw = true;
    }
    rt_assert(threw, "gather of non-distributed position rejected");
  });
  SUCCEED();
}

TEST_CASE("value preservation across structural ops") {
  // The multiset of global elements never changes.
  for (std::uint64_t seed = 20; seed < 26; ++seed) {
    World w(6);
    w.run([seed](Rank& rk) {
      auto dims = random_dims(seed, 6);
      IndexTuple shape(dims, 0);
      auto global = iota_global(shape.total_size());
      Tensor t = Tensor::from_global(rk, shape, {1, 1, 0}, global);
      auto want = sorted_elems(global);

      Tensor cur = t;
      for (int i = cur.shape().split; i < cur.shape().n_idx(); ++i) {
        if (cur.shape().dist_size() * cur.shape().dims[i] > 6) continue;
        cur = ops::scatter_index(cur, i);
        if (cur.in_span())
          rt_assert(sorted_elems(cur.to_global_vector()) == want,
                    "scatter preserves the element multiset");
      }
      while (cur.shape().split > 0) {
        cur = ops::gather_index(cur, 0);
        if (cur.in_span())
          rt_assert(sorted_elems(cur.to_global_vector()) == want,
                    "gather preserves the element multiset");
      }
      if (cur.in_span())
        rt_assert(sorted_elems(cur.to_global_vector()) == want,
                  "fully gathered multiset");

      // Immediate round trip of the first local index is elementwise exact.
      if (shape.n_local() > 0 && shape.dist_size() * dims[shape.split] <= 6) {
        Tensor rt = ops::gather_index(ops::scatter_index(t, shape.split), shape.split);
        rt_assert(rt.shape().dims == t.shape().dims, "round trip tuple");
        testutil::expect_global(rt, global, "round trip exact");
      }
    });
  }
  SUCCEED();
}

TEST_CASE("local slice pad squeeze helpers") {
  World w(1);
  auto global = iota_global(8);
  w.run([&](Rank& rk) {
    Tensor t = Tensor::from_global(rk, IndexTuple({2, 4}, 0), {}, global);
    Tensor s = ops::slice_local_dims(t, {2, 2});
    rt_assert(s.to_global_vector() ==
                  std::vector<Complex>{global[0], global[1], global[4], global[5]},
              "slice keeps the leading block");
    Tensor p = ops::pad_local_dims(s, {2, 4});
    auto v = p.to_global_vector();
    rt_assert(v[0] == global[0] && v[5] == global[5], "pad keeps values");
    rt_assert(v[2] == Complex{0.0, 0.0}, "pad fills zeros");

    Tensor u = ops::unsqueeze(t, 2, false);
    rt_assert(u.shape().str() == "(;2,4,1)", "unsqueeze adds a unit index");
    rt_assert(u.to_global_vector() == global, "unsqueeze keeps the layout");
    Tensor q = ops::squeeze(u, 2);
    rt_assert(q.shape().dims == t.shape().dims, "squeeze removes it");
    rt_assert(q.to_global_vector() == global, "squeeze keeps the layout");
  });
  SUCCEED();
}
