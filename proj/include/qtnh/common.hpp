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

#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace qtnh {

inline constexpr const char* kVersion = "0.1.0";

using Complex = std::complex<double>;

/// Base class of every error thrown by the library.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Bad user-supplied argument (out-of-range coordinate, invalid permutation, ...).
struct InvalidArgument : Error {
  explicit InvalidArgument(const std::string& msg) : Error(msg) {}
};

/// The operation needs more ranks than the world provides.
struct ResourceError : Error {
  ResourceError(const std::string& msg, std::int64_t required)
      : Error(msg + " (requires " + std::to_string(required) + " ranks)"),
        required_ranks(required) {}
  explicit ResourceError(const std::string& msg) : Error(msg), required_ranks(0) {}
  std::int64_t required_ranks;
};

/// Collective contract violated: mismatched call kinds, inconsistent counts.
struct ProtocolError : Error {
  explicit ProtocolError(const std::string& msg) : Error(msg) {}
};

/// A numerical kernel failed to converge.
struct NumericalError : Error {
  NumericalError(const std::string& msg, std::int64_t info)
      : Error(msg + " (info=" + std::to_string(info) + ")"), info(info) {}
  std::int64_t info;
};

/// State does not satisfy an operation precondition (e.g. not normalised).
struct PreconditionError : Error {
  explicit PreconditionError(const std::string& msg) : Error(msg) {}
};

/// Zero-norm state where a normalised one is required.
struct DegenerateStateError : Error {
  explicit DegenerateStateError(const std::string& msg) : Error(msg) {}
};

/// Secondary failure raised on ranks aborted because another rank threw.
struct AbortedError : Error {
  explicit AbortedError(const std::string& msg) : Error(msg) {}
};

// ---------------------------------------------------------------------------
// Counter-based random numbers.
//
// Collisions of rank-local RNG state with SPMD replay make stateful generators
// awkward; a keyed hash gives every (seed, k0, k1, k2) cell an independent
// value that any rank can recompute.

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace detail

/// Hash of a seed and up to three stream keys.
inline std::uint64_t hash_counter(std::uint64_t seed, std::uint64_t k0 = 0,
                                  std::uint64_t k1 = 0, std::uint64_t k2 = 0) {
  std::uint64_t h = detail::splitmix64(seed ^ 0x243f6a8885a308d3ULL);
  h = detail::splitmix64(h ^ k0);
  h = detail::splitmix64(h ^ k1);
  h = detail::splitmix64(h ^ k2);
  return h;
}

/// Uniform double in [0, 1) from a 64-bit word.
inline double u64_to_unit(std::uint64_t u) {
  return static_cast<double>(u >> 11) * 0x1.0p-53;
}

/// Small sequential generator used where a stream of draws is natural
/// (sampling, random tensor fills). Deterministic per seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(detail::splitmix64(seed)) {}

  std::uint64_t next_u64() {
    state_ = detail::splitmix64(state_);
    return state_;
  }
  double next_unit() { return u64_to_unit(next_u64()); }

  /// Standard normal via Box-Muller (implementation-defined std distributions
  /// would break byte-for-byte reproducibility of reports).
  double next_normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 1e-300) u1 = next_unit();
    double u2 = next_unit();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  Complex next_complex_normal() {
    double re = next_normal();
    double im = next_normal();
    return {re, im};
  }

 private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace qtnh
