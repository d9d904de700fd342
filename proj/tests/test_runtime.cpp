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

#include <atomic>
#include <chrono>
#include <thread>

#include "qtnh/runtime.hpp"

using namespace qtnh;

TEST_CASE("world construction") {
  CHECK_THROWS_AS(World(0), InvalidArgument);
  CHECK_THROWS_AS(World(-3), InvalidArgument);
  CHECK_THROWS_AS(World(2, Backend::external_message_passing), InvalidArgument);
  World w(16);
  CHECK(w.size() == 16);
}

TEST_CASE("single rank world degenerates to identity collectives") {
  World w(1);
  w.run([](Rank& rk) {
    Group g = rk.world_group();
    auto b = g.broadcast(std::vector<Complex>{{1.0, 0.0}}, 0);
    CHECK(b[0] == Complex{1.0, 0.0});
    auto r = g.all_reduce_sum(std::vector<double>{2.5});
    CHECK(r[0] == 2.5);
    auto a2a = g.all_to_all_v(std::vector<std::vector<int>>{{7, 8}});
    CHECK(a2a[0] == std::vector<int>{7, 8});
  });
}

TEST_CASE("group creation and member-order local ranks") {
  World w(6);
  w.run([](Rank& rk) {
    if (rk.rank() == 2 || rk.rank() == 4) {
      Group g = rk.group({2, 4});
      CHECK(g.size() == 2);
      CHECK(g.rank() == (rk.rank() == 2 ? 0 : 1));
      CHECK(g.world_rank(0) == 2);
      CHECK(g.world_rank(1) == 4);
    }
  });
}

TEST_CASE("group validation") {
  World w(4);
  CHECK_THROWS_AS(w.run([](Rank& rk) { rk.group({0, 0, 1, 2}); }), InvalidArgument);
  CHECK_THROWS_AS(w.run([](Rank& rk) { rk.group({0, 1, 2, 9}); }), InvalidArgument);
  CHECK_THROWS_AS(w.run([](Rank& rk) { rk.group({}); }), InvalidArgument);
}

TEST_CASE("disjoint groups never block each other") {
  World w(4);
  w.run([](Rank& rk) {
    if (rk.rank() < 2) {
      Group g = rk.group({0, 1});
      // Delay one side; the other pair has long finished by then.
      if (rk.rank() == 0) std::this_thread::sleep_for(std::chrono::milliseconds(50));
      g.barrier();
    } else {
      Group g = rk.group({2, 3});
      auto v = g.all_reduce_sum(std::vector<double>{1.0});
      CHECK(v[0] == 2.0);
    }
  });
}

TEST_CASE("broadcast gather scatter all_reduce") {
  World w(4);
  w.run([](Rank& rk) {
    Group g = rk.world_group();

    auto b = g.broadcast(rk.rank() == 1 ? std::vector<int>{3, 5} : std::vector<int>{}, 1);
    CHECK(b == std::vector<int>{3, 5});

    auto parts = g.gather(std::vector<int>{rk.rank()}, 0);
    if (rk.rank() == 0) {
      REQUIRE(parts.size() == 4);
      for (int i = 0; i < 4; ++i) CHECK(parts[i] == std::vector<int>{i});
    }

    std::vector<std::vector<int>> chunks;
    if (rk.rank() == 0) chunks = {{0}, {10}, {20}, {30}};
    auto mine = g.scatter(chunks, 0);
    CHECK(mine == std::vector<int>{rk.rank() * 10});

    auto sum = g.all_reduce_sum(std::vector<double>{1.0});
    CHECK(sum[0] == 4.0);
  });
}

TEST_CASE("all_to_all_v moves streams in order") {
  World w(2);
  w.run([](Rank& rk) {
    Group g = rk.world_group();
    std::vector<std::vector<char>> send(2);
    if (rk.rank() == 0) send[1] = {'a', 'b'};
    if (rk.rank() == 1) send[0] = {'c'};
    auto recv = g.all_to_all_v(send);
    if (rk.rank() == 0) {
      CHECK(recv[1] == std::vector<char>{'c'});
      CHECK(recv[0].empty());
    } else {
      CHECK(recv[0] == std::vector<char>{'a', 'b'});
    }
  });
}

TEST_CASE("all_to_all_v ring shift") {
  World w(4);
  w.run([](Rank& rk) {
    Group g = rk.world_group();
    std::vector<std::vector<int>> send(4);
    send[(rk.rank() + 1) % 4] = {rk.rank() * 100, rk.rank() * 100 + 1};
    auto recv = g.all_to_all_v(send);
    int src = (rk.rank() + 3) % 4;
    CHECK(recv[src] == std::vector<int>{src * 100, src * 100 + 1});
    for (int i = 0; i < 4; ++i)
      if (i != src) CHECK(recv[i].empty());
  });
}

TEST_CASE("all_to_all_v conservation under random plans") {
  // No element duplicated or dropped: multiset in == multiset out.
  World w(5);
  for (std::uint64_t trial = 0; trial < 10; ++trial) {
    std::vector<long> sent_sum(5, 0), recv_sum(5, 0);
    std::atomic<long> total_sent{0}, total_recv{0};
    w.run([&, trial](Rank& rk) {
      Group g = rk.world_group();
      std::vector<std::vector<long>> send(5);
      long my_sent = 0;
      for (int j = 0; j < 5; ++j) {
        auto n = hash_counter(trial, rk.rank(), j) % 7;
        for (std::uint64_t e = 0; e < n; ++e) {
          long val = static_cast<long>(hash_counter(trial, rk.rank(), j, e) % 100000);
          send[j].push_back(val);
          my_sent += val;
        }
      }
      auto recv = g.all_to_all_v(send);
      long my_recv = 0;
      for (auto& list : recv)
        for (long v : list) my_recv += v;
      total_sent += my_sent;
      total_recv += my_recv;
    });
    CHECK(total_sent.load() == total_recv.load());
  }
}

TEST_CASE("all_to_all_v count mismatch raises protocol error naming the pair") {
  World w(2);
  try {
    w.run([](Rank& rk) {
      Group g = rk.world_group();
      std::vector<std::vector<int>> send(2);
      if (rk.rank() == 0) send[1] = {1, 2, 3};
      std::vector<std::size_t> expect(2, 0);
      if (rk.rank() == 1) expect[0] = 2;  // actually receives 3
      g.all_to_all_v(send, &expect);
    });
    FAIL("expected ProtocolError");
  } catch (const ProtocolError& e) {
    CHECK(std::string(e.what()).find("(0 -> 1)") != std::string::npos);
  }
}

TEST_CASE("mismatched collective kinds raise protocol error") {
  World w(2);
  CHECK_THROWS_AS(w.run([](Rank& rk) {
                    Group g = rk.world_group();
                    if (rk.rank() == 0)
                      g.barrier();
                    else
                      g.all_reduce_sum(std::vector<double>{1.0});
                  }),
                  ProtocolError);
}

TEST_CASE("simulated backend is deterministic across interleavings") {
  // Same program, jittered scheduling: bit-identical reduction results.
  std::vector<double> results;
  for (int run = 0; run < 3; ++run) {
    World w(8);
    std::vector<double> local(8, 0.0);
    w.run([&, run](Rank& rk) {
      std::this_thread::sleep_for(
          std::chrono::microseconds(hash_counter(run, rk.rank()) % 500));
      Group g = rk.world_group();
      std::vector<double> v{0.1 * (rk.rank() + 1) + 1e-13 * rk.rank()};
      for (int i = 0; i < 10; ++i) v = g.all_reduce_sum(v);
      local[rk.rank()] = v[0];
    });
    for (int r = 1; r < 8; ++r) REQUIRE(local[r] == local[0]);
    results.push_back(local[0]);
  }
  CHECK(results[0] == results[1]);
  CHECK(results[1] == results[2]);
}

TEST_CASE("error on one rank aborts the world without deadlock") {
  World w(3);
  CHECK_THROWS_AS(w.run([](Rank& rk) {
                    Group g = rk.world_group();
                    if (rk.rank() == 2) throw InvalidArgument("boom");
                    g.barrier();  // ranks 0, 1 would block forever otherwise
                  }),
                  InvalidArgument);
}
