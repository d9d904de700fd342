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

// Catch2 assertion macros are not thread-safe, and rank bodies execute on
// threads. Tests therefore collect values back to the main thread (run_collect)
// or assert inside bodies with rt_assert, which surfaces failures as
// exceptions that World::run rethrows on the main thread.

#include <cmath>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include "qtnh/tensor.hpp"

namespace testutil {

using qtnh::Complex;
using qtnh::Rank;
using qtnh::World;

/// Runs the body on every rank and returns rank 0's result on the main
/// thread.
template <class F>
auto run_collect(World& w, F&& f) {
  using R = decltype(f(std::declval<Rank&>()));
  R out{};
  w.run([&](Rank& rk) {
    R r = f(rk);
    if (rk.rank() == 0) out = std::move(r);
  });
  return out;
}

/// In-body assertion; failure aborts the world and fails the test with msg.
inline void rt_assert(bool cond, const std::string& msg) {
  if (!cond) throw std::runtime_error("rank assertion failed: " + msg);
}

/// Asserts the gathered global elements on span ranks; no-op elsewhere.
inline void expect_global(const qtnh::Tensor& t, const std::vector<Complex>& want,
                          const std::string& msg) {
  if (!t.in_span()) return;
  rt_assert(t.to_global_vector() == want, msg);
}

inline double max_abs_diff(const std::vector<Complex>& a, const std::vector<Complex>& b) {
  if (a.size() != b.size()) return 1e300;
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double norm2_of(const std::vector<Complex>& v) {
  double s = 0.0;
  for (auto c : v) s += std::norm(c);
  return s;
}

inline std::string show(const std::vector<Complex>& v, std::size_t limit = 8) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < v.size() && i < limit; ++i)
    os << (i ? ", " : "") << v[i].real() << (v[i].imag() < 0 ? "-" : "+")
       << std::abs(v[i].imag()) << "i";
  if (v.size() > limit) os << ", ...";
  return os.str() + "]";
}

}  // namespace testutil
