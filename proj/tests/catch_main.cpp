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

#include <cstdlib>

int main(int argc, char* argv[]) {
  // Rank contexts are simulated with threads; keep BLAS single-threaded so
  // they do not oversubscribe each other.
  setenv("OPENBLAS_NUM_THREADS", "1", 0);
  return Catch::Session().run(argc, argv);
}
