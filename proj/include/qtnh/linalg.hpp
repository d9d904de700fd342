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

#define LAPACK_COMPLEX_CPP
#include <cblas.h>
#include <lapacke.h>

#include "qtnh/ops.hpp"

// Distributed matrix kernel: 2-d block-cyclic complex matrices over a rank
// group, tensor <-> matrix conversion, SUMMA matrix multiplication and SVD.
// The SVD gathers panels onto the group root and runs LAPACK there; the
// binding contract is reconstruction, orthonormality and descending order,
// not the algorithm.

namespace qtnh::linalg {

/// Process grid over an ordered rank group; grid rank g sits at
/// (g / pcols, g % pcols). Shape is the most-square factorisation with
/// P_r <= P_c.
struct Grid {
  Rank* ctx = nullptr;
  Group group;
  int prows = 1, pcols = 1;

  static Grid make(Rank& ctx, const std::vector<int>& members) {
    int n = static_cast<int>(members.size());
    int pr = 1;
    for (int d = 1; d * d <= n; ++d)
      if (n % d == 0) pr = d;
    return Grid{&ctx, ctx.group(members), pr, n / pr};
  }

  int my_prow() const { return group.rank() / pcols; }
  int my_pcol() const { return group.rank() % pcols; }
  int member_at(int prow, int pcol) const { return prow * pcols + pcol; }

  Group row_group() const {
    std::vector<int> m(pcols);
    for (int pc = 0; pc < pcols; ++pc) m[pc] = group.world_rank(member_at(my_prow(), pc));
    return ctx->group(m);
  }
  Group col_group() const {
    std::vector<int> m(prows);
    for (int pr = 0; pr < prows; ++pr) m[pr] = group.world_rank(member_at(pr, my_pcol()));
    return ctx->group(m);
  }

  bool same_as(const Grid& o) const {
    return prows == o.prows && pcols == o.pcols && group.members() == o.group.members();
  }
};

/// Complex matrix in 2-d block-cyclic layout: tile (I, J) lives on grid rank
/// (I mod P_r, J mod P_c). Local storage is one column-major buffer per rank
/// with owned tiles stacked in block order (only the globally last tile may
/// be partial, so it is also locally last).
class BlockCyclicMatrix {
 public:
  BlockCyclicMatrix() = default;

  BlockCyclicMatrix(Grid grid, Dim rows, Dim cols, Dim row_block, Dim col_block)
      : grid_(std::move(grid)), rows_(rows), cols_(cols), rb_(row_block), cb_(col_block) {
    if (rows < 1 || cols < 1 || row_block < 1 || col_block < 1)
      throw InvalidArgument("matrix and block dimensions must be positive");
    lrows_ = local_count(rows_, rb_, grid_.prows, grid_.my_prow());
    lcols_ = local_count(cols_, cb_, grid_.pcols, grid_.my_pcol());
    local_.assign(static_cast<std::size_t>(lrows_) * lcols_, Complex{0.0, 0.0});
  }

  const Grid& grid() const { return grid_; }
  Dim rows() const { return rows_; }
  Dim cols() const { return cols_; }
  Dim row_block() const { return rb_; }
  Dim col_block() const { return cb_; }
  Dim local_rows() const { return lrows_; }
  Dim local_cols() const { return lcols_; }
  std::vector<Complex>& local() { return local_; }
  const std::vector<Complex>& local() const { return local_; }

  static Dim local_count(Dim n, Dim nb, int p, int my) {
    Dim count = 0;
    for (Dim blk = my; blk * nb < n; blk += p) count += std::min(nb, n - blk * nb);
    return count;
  }

  Dim global_row(Dim lr) const {
    return (lr / rb_ * grid_.prows + grid_.my_prow()) * rb_ + lr % rb_;
  }
  Dim global_col(Dim lc) const {
    return (lc / cb_ * grid_.pcols + grid_.my_pcol()) * cb_ + lc % cb_;
  }

  Complex& at_local(Dim lr, Dim lc) { return local_[lr + lc * lrows_]; }
  Complex at_local(Dim lr, Dim lc) const { return local_[lr + lc * lrows_]; }

  /// Full matrix (column-major) on every group rank. Collective.
  std::vector<Complex> gather_global() const {
    auto parts = grid_.group.gather(local_, 0);
    std::vector<Complex> global;
    if (grid_.group.rank() == 0) {
      global.assign(static_cast<std::size_t>(rows_) * cols_, Complex{0.0, 0.0});
      for (int g = 0; g < grid_.group.size(); ++g) {
        int pr = g / grid_.pcols, pc = g % grid_.pcols;
        Dim glr = local_count(rows_, rb_, grid_.prows, pr);
        Dim glc = local_count(cols_, cb_, grid_.pcols, pc);
        for (Dim lc = 0; lc < glc; ++lc) {
          Dim c = (lc / cb_ * grid_.pcols + pc) * cb_ + lc % cb_;
          for (Dim lr = 0; lr < glr; ++lr) {
            Dim r = (lr / rb_ * grid_.prows + pr) * rb_ + lr % rb_;
            global[r + c * rows_] = parts[g][lr + lc * glr];
          }
        }
      }
    }
    return grid_.group.broadcast(global, 0);
  }

  /// Fills local parts from a full column-major matrix held on the group
  /// root. Collective.
  void scatter_global(const std::vector<Complex>& global_on_root) {
    std::vector<std::vector<Complex>> chunks;
    if (grid_.group.rank() == 0) {
      if (static_cast<Dim>(global_on_root.size()) != rows_ * cols_)
        throw InvalidArgument("global matrix size mismatch");
      chunks.resize(grid_.group.size());
      for (int g = 0; g < grid_.group.size(); ++g) {
        int pr = g / grid_.pcols, pc = g % grid_.pcols;
        Dim glr = local_count(rows_, rb_, grid_.prows, pr);
        Dim glc = local_count(cols_, cb_, grid_.pcols, pc);
        auto& chunk = chunks[g];
        chunk.resize(static_cast<std::size_t>(glr) * glc);
        for (Dim lc = 0; lc < glc; ++lc) {
          Dim c = (lc / cb_ * grid_.pcols + pc) * cb_ + lc % cb_;
          for (Dim lr = 0; lr < glr; ++lr) {
            Dim r = (lr / rb_ * grid_.prows + pr) * rb_ + lr % rb_;
            chunk[lr + lc * glr] = global_on_root[r + c * rows_];
          }
        }
      }
    }
    local_ = grid_.group.scatter(chunks, 0);
  }

  static BlockCyclicMatrix from_global(Grid grid, Dim rows, Dim cols, Dim rb, Dim cb,
                                       const std::vector<Complex>& global_on_root) {
    BlockCyclicMatrix m(std::move(grid), rows, cols, rb, cb);
    m.scatter_global(global_on_root);
    return m;
  }

 private:
  Grid grid_;
  Dim rows_ = 0, cols_ = 0, rb_ = 1, cb_ = 1;
  Dim lrows_ = 0, lcols_ = 0;
  std::vector<Complex> local_;
};

namespace detail {

inline std::vector<Dim> gather_dims(const IndexTuple& shape, const std::vector<int>& pos) {
  std::vector<Dim> out;
  out.reserve(pos.size());
  for (int p : pos) out.push_back(shape.dims[p]);
  return out;
}

inline void check_partition(const IndexTuple& shape, const std::vector<int>& row_pos,
                            const std::vector<int>& col_pos) {
  std::vector<bool> seen(shape.n_idx(), false);
  auto mark = [&](int p) {
    if (p < 0 || p >= shape.n_idx() || seen[p])
      throw InvalidArgument("row/col index sets must partition the tensor indices");
    seen[p] = true;
  };
  for (int p : row_pos) mark(p);
  for (int p : col_pos) mark(p);
  for (bool s : seen)
    if (!s) throw InvalidArgument("row/col index sets must cover every index");
}

inline Dim product(const std::vector<Dim>& dims) {
  Dim n = 1;
  for (Dim d : dims) n *= d;
  return n;
}

}  // namespace detail

/// Flattens a tensor into a block-cyclic matrix: entry (r, c) is the tensor
/// element whose coordinates at row_pos flatten to r (row-major in list
/// order) and at col_pos to c. Listing distributed positions first makes
/// rank blocks coincide with matrix blocks. Collective over the grid group,
/// which must contain the tensor span (defaults to exactly the span).
inline BlockCyclicMatrix tensor_to_matrix(const Tensor& t, const std::vector<int>& row_pos,
                                          const std::vector<int>& col_pos,
                                          const Grid* grid_in = nullptr, Dim rb = 0,
                                          Dim cb = 0) {
  const auto& shape = t.shape();
  detail::check_partition(shape, row_pos, col_pos);
  Rank& ctx = t.ctx();

  Grid grid = grid_in ? *grid_in : Grid::make(ctx, t.span_ranks());
  for (int r : t.span_ranks())
    if (!grid.group.contains(r))
      throw InvalidArgument("matrix group must contain the tensor span");

  auto row_dims = detail::gather_dims(shape, row_pos);
  auto col_dims = detail::gather_dims(shape, col_pos);
  Dim M = detail::product(row_dims), N = detail::product(col_dims);
  if (rb == 0) {
    rb = 1;
    for (int p : row_pos)
      if (p >= shape.split) rb *= shape.dims[p];
  }
  if (cb == 0) {
    cb = 1;
    for (int p : col_pos)
      if (p >= shape.split) cb *= shape.dims[p];
  }

  BlockCyclicMatrix mat(grid, M, N, rb, cb);

  // addr = r * N + c is affine in the tensor coordinates.
  auto row_strides = idx::strides(row_dims);
  auto col_strides = idx::strides(col_dims);
  std::vector<Dim> weights(shape.n_idx(), 0);
  for (std::size_t k = 0; k < row_pos.size(); ++k) weights[row_pos[k]] = row_strides[k] * N;
  for (std::size_t k = 0; k < col_pos.size(); ++k) weights[col_pos[k]] = col_strides[k];

  const auto& members = grid.group.members();
  auto member_of = remap::member_index(members, ctx.size());
  std::vector<Dim> lrows_by_prow(grid.prows);
  for (int pr = 0; pr < grid.prows; ++pr)
    lrows_by_prow[pr] = BlockCyclicMatrix::local_count(M, rb, grid.prows, pr);

  std::vector<std::vector<remap::Item>> sends;
  remap::pack_sends(t, weights, member_of, members.size(),
                    [&](Dim addr, auto&& deliver) {
                      Dim r = addr / N, c = addr % N;
                      int pr = static_cast<int>((r / rb) % grid.prows);
                      int pc = static_cast<int>((c / cb) % grid.pcols);
                      Dim lr = (r / rb / grid.prows) * rb + r % rb;
                      Dim lc = (c / cb / grid.pcols) * cb + c % cb;
                      deliver(members[grid.member_at(pr, pc)],
                              lr + lc * lrows_by_prow[pr]);
                    },
                    sends);

  auto recvd = grid.group.all_to_all_v(sends);
  auto& buf = mat.local();
  for (const auto& list : recvd)
    for (const auto& it : list) buf[it.addr] = Complex{it.re, it.im};
  return mat;
}

/// Inverse of tensor_to_matrix: spreads matrix entries into a tensor of the
/// given shape and distribution (all broadcast copies are written).
/// Collective over the matrix group, which must contain the tensor span.
inline Tensor matrix_to_tensor(const BlockCyclicMatrix& mat, Rank& ctx, IndexTuple shape,
                               DistParams dist, const std::vector<int>& row_pos,
                               const std::vector<int>& col_pos) {
  detail::check_partition(shape, row_pos, col_pos);
  auto row_dims = detail::gather_dims(shape, row_pos);
  auto col_dims = detail::gather_dims(shape, col_pos);
  if (detail::product(row_dims) != mat.rows() || detail::product(col_dims) != mat.cols())
    throw InvalidArgument("tensor shape does not match matrix dimensions");

  Tensor out = Tensor::adopt(ctx, Variant::dense, shape, dist, {});
  if (out.in_span())
    out.mutable_local_data().assign(shape.local_size(), Complex{0.0, 0.0});

  const Grid& grid = mat.grid();
  const auto& members = grid.group.members();
  for (int r : out.span_ranks())
    if (!grid.group.contains(r))
      throw InvalidArgument("matrix group must contain the result tensor span");
  auto member_of = remap::member_index(members, ctx.size());

  // Tensor global address of matrix entry (r, c) splits into independent row
  // and column contributions; precompute them per owned row/column.
  auto full_strides = idx::strides(shape.dims);
  auto row_strides = idx::strides(row_dims);
  auto col_strides = idx::strides(col_dims);
  Dim nl = shape.local_size();
  Dim nd = shape.dist_size();

  std::vector<Dim> row_addr(mat.local_rows());
  for (Dim lr = 0; lr < mat.local_rows(); ++lr) {
    Dim r = mat.global_row(lr);
    Dim addr = 0;
    for (std::size_t k = 0; k < row_dims.size(); ++k)
      addr += ((r / row_strides[k]) % row_dims[k]) * full_strides[row_pos[k]];
    row_addr[lr] = addr;
  }
  std::vector<Dim> col_addr(mat.local_cols());
  for (Dim lc = 0; lc < mat.local_cols(); ++lc) {
    Dim c = mat.global_col(lc);
    Dim addr = 0;
    for (std::size_t k = 0; k < col_dims.size(); ++k)
      addr += ((c / col_strides[k]) % col_dims[k]) * full_strides[col_pos[k]];
    col_addr[lc] = addr;
  }

  std::vector<std::vector<remap::Item>> sends(members.size());
  const auto& loc = mat.local();
  for (Dim lc = 0; lc < mat.local_cols(); ++lc) {
    for (Dim lr = 0; lr < mat.local_rows(); ++lr) {
      Complex v = loc[lr + lc * mat.local_rows()];
      if (v.real() == 0.0 && v.imag() == 0.0) continue;
      Dim addr = row_addr[lr] + col_addr[lc];
      Dim b = addr / nl, off = addr % nl;
      for (Dim cy = 0; cy < dist.cycles; ++cy)
        for (Dim tt = 0; tt < dist.stretch; ++tt) {
          int dest = static_cast<int>(dist.offset + cy * dist.stretch * nd +
                                      b * dist.stretch + tt);
          sends[member_of[dest]].push_back({off, v.real(), v.imag()});
        }
    }
  }

  auto recvd = grid.group.all_to_all_v(sends);
  if (out.in_span()) {
    auto& buf = out.mutable_local_data();
    for (const auto& list : recvd)
      for (const auto& it : list) buf[it.addr] = Complex{it.re, it.im};
  }
  return out;
}

/// Distributed complex matrix product via SUMMA over shared block columns /
/// rows. Operands need a matching inner dimension and blocking and the same
/// grid.
inline BlockCyclicMatrix pgemm(const BlockCyclicMatrix& a, const BlockCyclicMatrix& b) {
  if (a.cols() != b.rows())
    throw InvalidArgument("pgemm dimension mismatch: " + std::to_string(a.cols()) +
                          " vs " + std::to_string(b.rows()));
  if (a.col_block() != b.row_block())
    throw InvalidArgument("pgemm blocking mismatch on the contracted dimension");
  if (!a.grid().same_as(b.grid())) throw InvalidArgument("pgemm operands on different grids");

  const Grid& grid = a.grid();
  BlockCyclicMatrix c(grid, a.rows(), b.cols(), a.row_block(), b.col_block());

  Group row_group = grid.row_group();
  Group col_group = grid.col_group();

  Dim kb_total = (a.cols() + a.col_block() - 1) / a.col_block();
  Dim kb_size = a.col_block();

  for (Dim kb = 0; kb < kb_total; ++kb) {
    Dim width = std::min(kb_size, a.cols() - kb * kb_size);

    // Panel of A: block column kb, owned by grid column kb % P_c.
    int owner_pc = static_cast<int>(kb % grid.pcols);
    std::vector<Complex> a_panel;
    if (grid.my_pcol() == owner_pc) {
      Dim lc0 = (kb / grid.pcols) * a.col_block();
      a_panel.assign(a.local().begin() + lc0 * a.local_rows(),
                     a.local().begin() + (lc0 + width) * a.local_rows());
    }
    a_panel = row_group.broadcast(a_panel, owner_pc);

    // Panel of B: block row kb, owned by grid row kb % P_r.
    int owner_pr = static_cast<int>(kb % grid.prows);
    std::vector<Complex> b_panel;
    if (grid.my_prow() == owner_pr) {
      Dim lr0 = (kb / grid.prows) * b.row_block();
      b_panel.resize(static_cast<std::size_t>(width) * b.local_cols());
      for (Dim lc = 0; lc < b.local_cols(); ++lc)
        for (Dim i = 0; i < width; ++i)
          b_panel[i + lc * width] = b.at_local(lr0 + i, lc);
    }
    b_panel = col_group.broadcast(b_panel, owner_pr);

    if (c.local_rows() > 0 && c.local_cols() > 0 && width > 0) {
      Complex one{1.0, 0.0};
      cblas_zgemm(CblasColMajor, CblasNoTrans, CblasNoTrans,
                  static_cast<int>(c.local_rows()), static_cast<int>(c.local_cols()),
                  static_cast<int>(width), &one, a_panel.data(),
                  static_cast<int>(a.local_rows()), b_panel.data(),
                  static_cast<int>(width), &one, c.local().data(),
                  static_cast<int>(c.local_rows()));
    }
  }
  return c;
}

struct SvdResult {
  BlockCyclicMatrix u;
  std::vector<double> s;  // descending
  BlockCyclicMatrix vh;
};

namespace detail {

inline void local_svd(std::vector<Complex>& a, Dim m, Dim n, std::vector<Complex>& u,
                      std::vector<double>& s, std::vector<Complex>& vh) {
  Dim k = std::min(m, n);
  u.assign(static_cast<std::size_t>(m) * k, Complex{0.0, 0.0});
  s.assign(k, 0.0);
  vh.assign(static_cast<std::size_t>(k) * n, Complex{0.0, 0.0});
  std::vector<Complex> work = a;  // gesdd destroys its input
  int info = LAPACKE_zgesdd(LAPACK_COL_MAJOR, 'S', static_cast<lapack_int>(m),
                            static_cast<lapack_int>(n), work.data(),
                            static_cast<lapack_int>(m), s.data(), u.data(),
                            static_cast<lapack_int>(m), vh.data(),
                            static_cast<lapack_int>(k));
  if (info != 0) {
    // Divide-and-conquer occasionally fails to converge; retry with the
    // QR-iteration driver before giving up.
    work = a;
    std::vector<double> superb(k > 1 ? k - 1 : 1);
    info = LAPACKE_zgesvd(LAPACK_COL_MAJOR, 'S', 'S', static_cast<lapack_int>(m),
                          static_cast<lapack_int>(n), work.data(),
                          static_cast<lapack_int>(m), s.data(), u.data(),
                          static_cast<lapack_int>(m), vh.data(),
                          static_cast<lapack_int>(k), superb.data());
    if (info != 0) throw NumericalError("SVD failed to converge", info);
  }
}

}  // namespace detail

/// Distributed SVD. The matrix is gathered onto the group root, factorised
/// there and the factors are redistributed block-cyclically over the same
/// grid. S is replicated on every group rank, sorted descending.
inline SvdResult psvd(const BlockCyclicMatrix& a) {
  const Grid& grid = a.grid();
  Dim m = a.rows(), n = a.cols(), k = std::min(m, n);

  auto parts = grid.group.gather(a.local(), 0);
  std::vector<Complex> gu, gvh;
  std::vector<double> s;
  if (grid.group.rank() == 0) {
    std::vector<Complex> global(static_cast<std::size_t>(m) * n, Complex{0.0, 0.0});
    for (int g = 0; g < grid.group.size(); ++g) {
      int pr = g / grid.pcols, pc = g % grid.pcols;
      Dim glr = BlockCyclicMatrix::local_count(m, a.row_block(), grid.prows, pr);
      Dim glc = BlockCyclicMatrix::local_count(n, a.col_block(), grid.pcols, pc);
      for (Dim lc = 0; lc < glc; ++lc) {
        Dim cc = (lc / a.col_block() * grid.pcols + pc) * a.col_block() + lc % a.col_block();
        for (Dim lr = 0; lr < glr; ++lr) {
          Dim rr = (lr / a.row_block() * grid.prows + pr) * a.row_block() + lr % a.row_block();
          global[rr + cc * m] = parts[g][lr + lc * glr];
        }
      }
    }
    detail::local_svd(global, m, n, gu, s, gvh);
  }
  s = grid.group.broadcast(s, 0);

  SvdResult out{BlockCyclicMatrix(grid, m, k, a.row_block(), a.col_block()), std::move(s),
                BlockCyclicMatrix(grid, k, n, a.row_block(), a.col_block())};
  out.u.scatter_global(gu);
  out.vh.scatter_global(gvh);
  return out;
}

/// Keeps the chi largest singular values and the matching columns of U /
/// rows of Vh. When chi exceeds the current count, factors and values are
/// zero-padded to exactly chi (fixed bond dimension policy).
inline SvdResult truncate_svd(const BlockCyclicMatrix& u, const std::vector<double>& s,
                              const BlockCyclicMatrix& vh, Dim chi) {
  if (chi < 1) throw InvalidArgument("chi must be positive");
  Dim k = static_cast<Dim>(s.size());
  if (chi == k) return {u, s, vh};
  Dim keep = std::min(chi, k);
  Dim m = u.rows(), n = vh.cols();

  const Grid& grid = u.grid();
  auto gu = u.gather_global();
  auto gvh = vh.gather_global();

  std::vector<double> s2(chi, 0.0);
  std::copy(s.begin(), s.begin() + keep, s2.begin());

  SvdResult out{BlockCyclicMatrix(grid, m, chi, u.row_block(), u.col_block()), std::move(s2),
                BlockCyclicMatrix(grid, chi, n, vh.row_block(), vh.col_block())};
  std::vector<Complex> gu2, gvh2;
  if (grid.group.rank() == 0) {
    gu2.assign(static_cast<std::size_t>(m) * chi, Complex{0.0, 0.0});
    for (Dim c = 0; c < keep; ++c)
      std::copy(gu.begin() + c * m, gu.begin() + (c + 1) * m, gu2.begin() + c * m);
    gvh2.assign(static_cast<std::size_t>(chi) * n, Complex{0.0, 0.0});
    for (Dim c = 0; c < n; ++c)
      for (Dim r = 0; r < keep; ++r) gvh2[r + c * chi] = gvh[r + c * k];
  }
  out.u.scatter_global(gu2);
  out.vh.scatter_global(gvh2);
  return out;
}

/// Scales column c of U by s[c] (left absorption), in place. Local.
inline void absorb_singular_left(BlockCyclicMatrix& u, const std::vector<double>& s,
                                 double power = 1.0) {
  for (Dim lc = 0; lc < u.local_cols(); ++lc) {
    double f = std::pow(s[u.global_col(lc)], power);
    for (Dim lr = 0; lr < u.local_rows(); ++lr) u.at_local(lr, lc) *= f;
  }
}

/// Scales row r of Vh by s[r] (right absorption), in place. Local.
inline void absorb_singular_right(BlockCyclicMatrix& vh, const std::vector<double>& s,
                                  double power = 1.0) {
  for (Dim lr = 0; lr < vh.local_rows(); ++lr) {
    double f = std::pow(s[vh.global_row(lr)], power);
    for (Dim lc = 0; lc < vh.local_cols(); ++lc) vh.at_local(lr, lc) *= f;
  }
}

}  // namespace qtnh::linalg
