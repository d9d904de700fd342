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
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <thread>
#include <typeindex>
#include <vector>

#include "qtnh/common.hpp"

// SPMD rank abstraction with an in-process simulated backend. Each rank is a
// cooperatively scheduled execution context (a thread); collectives are
// rendezvous points. Results are combined in member order, so they are
// bit-identical no matter how the rank threads interleave.

namespace qtnh {

enum class Backend { simulated, external_message_passing };

enum class CollectiveKind : std::uint8_t {
  broadcast,
  gather,
  scatter,
  all_reduce_sum,
  barrier,
  all_to_all_v,
};

class Rank;

namespace detail {

inline const char* kind_name(CollectiveKind k) {
  switch (k) {
    case CollectiveKind::broadcast: return "broadcast";
    case CollectiveKind::gather: return "gather";
    case CollectiveKind::scatter: return "scatter";
    case CollectiveKind::all_reduce_sum: return "all_reduce_sum";
    case CollectiveKind::barrier: return "barrier";
    case CollectiveKind::all_to_all_v: return "all_to_all_v";
  }
  return "?";
}

using Bytes = std::vector<std::byte>;

template <class T>
Bytes pack(const std::vector<T>& v) {
  static_assert(std::is_trivially_copyable_v<T>);
  Bytes out(v.size() * sizeof(T));
  if (!v.empty()) std::memcpy(out.data(), v.data(), out.size());
  return out;
}

template <class T>
std::vector<T> unpack(const Bytes& b) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::vector<T> out(b.size() / sizeof(T));
  if (!out.empty()) std::memcpy(out.data(), b.data(), b.size());
  return out;
}

// One in-flight collective on a group. Contributions are indexed by the
// member's position in the group so that combination order is fixed.
struct Slot {
  CollectiveKind kind{};
  std::type_index type{typeid(void)};
  int root = -1;
  int arrived = 0;
  int consumed = 0;
  bool complete = false;
  std::string error;  // poisoned slot: all members throw
  std::vector<Bytes> contrib;                // per member
  std::vector<std::vector<Bytes>> a2a;       // per member, per destination
};

struct GroupState {
  std::vector<int> members;                  // world ranks, in group order
  std::map<std::uint64_t, Slot> slots;       // keyed by per-group op sequence
};

struct WorldState {
  int size = 1;
  Backend backend = Backend::simulated;

  // One lock covers all rendezvous state. Coarse, but it makes abort wakeups
  // trivial and the backend is not a throughput component.
  std::mutex mtx;
  std::condition_variable cv;
  bool abort = false;

  std::map<std::pair<std::vector<int>, std::uint64_t>, std::shared_ptr<GroupState>>
      registry;

  long timeout_ms = 120000;
};

}  // namespace detail

/// Communicator over an ordered subset of world ranks. Handles are per-rank
/// values; copies share the same collective sequence.
class Group {
 public:
  int size() const { return static_cast<int>(st_->members.size()); }
  int rank() const { return my_index_; }
  const std::vector<int>& members() const { return st_->members; }
  int world_rank(int group_rank) const { return st_->members.at(group_rank); }

  bool contains(int world_rank) const {
    return std::find(st_->members.begin(), st_->members.end(), world_rank) !=
           st_->members.end();
  }

  template <class T>
  std::vector<T> broadcast(std::vector<T> data, int root) const;

  template <class T>
  std::vector<std::vector<T>> gather(const std::vector<T>& data, int root) const;

  template <class T>
  std::vector<T> scatter(const std::vector<std::vector<T>>& chunks, int root) const;

  template <class T>
  std::vector<T> all_reduce_sum(const std::vector<T>& data) const;

  double all_reduce_sum(double x) const {
    return all_reduce_sum(std::vector<double>{x})[0];
  }
  Complex all_reduce_sum(Complex x) const {
    return all_reduce_sum(std::vector<Complex>{x})[0];
  }

  void barrier() const;

  /// Variable all-to-all: send_lists[j] goes to group rank j; the result's
  /// entry [i] is what group rank i sent here, order preserved per stream.
  /// When expected_counts is given, the receive counts are validated against
  /// it and a mismatch raises a ProtocolError naming the (source, dest) pair.
  template <class T>
  std::vector<std::vector<T>> all_to_all_v(
      const std::vector<std::vector<T>>& send_lists,
      const std::vector<std::size_t>* expected_counts = nullptr) const;

 private:
  friend class Rank;
  Group(std::shared_ptr<detail::WorldState> w, std::shared_ptr<detail::GroupState> st,
        int my_index)
      : w_(std::move(w)), st_(std::move(st)), my_index_(my_index),
        next_op_(std::make_shared<std::uint64_t>(0)) {}

  detail::Slot& join(std::unique_lock<std::mutex>& lk, std::uint64_t seq,
                     CollectiveKind kind, std::type_index type, int root) const;
  void await(std::unique_lock<std::mutex>& lk, detail::Slot& slot) const;
  void retire(std::unique_lock<std::mutex>& lk, std::uint64_t seq) const;
  [[noreturn]] void poison(std::unique_lock<std::mutex>& lk, detail::Slot& slot,
                           const std::string& msg) const;

  std::shared_ptr<detail::WorldState> w_;
  std::shared_ptr<detail::GroupState> st_;
  int my_index_;
  std::shared_ptr<std::uint64_t> next_op_;
};

/// Per-thread execution context of one SPMD rank.
class Rank {
 public:
  int rank() const { return rank_; }
  int size() const { return w_->size; }

  /// Opens a group over `members` (ordered, duplicate-free world ranks).
  /// Called collectively by exactly the member ranks; creation does not
  /// synchronise, and non-members are never involved.
  Group group(const std::vector<int>& members) {
    if (members.empty()) throw InvalidArgument("group members must be non-empty");
    std::vector<int> seen;
    int my_index = -1;
    for (std::size_t i = 0; i < members.size(); ++i) {
      int m = members[i];
      if (m < 0 || m >= w_->size)
        throw InvalidArgument("group member " + std::to_string(m) + " out of range");
      if (std::find(seen.begin(), seen.end(), m) != seen.end())
        throw InvalidArgument("duplicate group member " + std::to_string(m));
      seen.push_back(m);
      if (m == rank_) my_index = static_cast<int>(i);
    }
    if (my_index < 0)
      throw InvalidArgument("rank " + std::to_string(rank_) +
                            " cannot open a group it is not a member of");

    std::uint64_t instance = instance_counters_[members]++;
    std::shared_ptr<detail::GroupState> st;
    {
      std::lock_guard<std::mutex> lk(w_->mtx);
      auto& entry = w_->registry[{members, instance}];
      if (!entry) {
        entry = std::make_shared<detail::GroupState>();
        entry->members = members;
      }
      st = entry;
    }
    return Group(w_, st, my_index);
  }

  /// Whole-world group.
  Group world_group() {
    std::vector<int> members(w_->size);
    for (int i = 0; i < w_->size; ++i) members[i] = i;
    return group(members);
  }

 private:
  friend class World;
  Rank(std::shared_ptr<detail::WorldState> w, int rank) : w_(std::move(w)), rank_(rank) {}

  std::shared_ptr<detail::WorldState> w_;
  int rank_;
  std::map<std::vector<int>, std::uint64_t> instance_counters_;
};

/// SPMD world of virtual ranks. `run` executes the program body once per rank
/// on the simulated backend and rethrows the first rank failure.
class World {
 public:
  explicit World(int n_ranks, Backend backend = Backend::simulated) {
    if (n_ranks < 1)
      throw InvalidArgument("world size must be >= 1, got " + std::to_string(n_ranks));
    if (backend == Backend::external_message_passing)
      throw InvalidArgument(
          "external message-passing backend is not built into this binary; "
          "use Backend::simulated");
    w_ = std::make_shared<detail::WorldState>();
    w_->size = n_ranks;
    w_->backend = backend;
    if (const char* t = std::getenv("QTNH_COLLECTIVE_TIMEOUT_MS")) {
      w_->timeout_ms = std::strtol(t, nullptr, 10);
    }
  }

  int size() const { return w_->size; }
  Backend backend() const { return w_->backend; }

  void run(const std::function<void(Rank&)>& body) {
    {
      std::lock_guard<std::mutex> lk(w_->mtx);
      w_->abort = false;
      w_->registry.clear();
    }
    std::vector<std::thread> threads;
    std::vector<std::exception_ptr> errors(w_->size);
    threads.reserve(w_->size);
    for (int r = 0; r < w_->size; ++r) {
      threads.emplace_back([this, &body, &errors, r]() {
        Rank ctx(w_, r);
        try {
          body(ctx);
        } catch (...) {
          errors[r] = std::current_exception();
          std::lock_guard<std::mutex> lk(w_->mtx);
          w_->abort = true;
          w_->cv.notify_all();
        }
      });
    }
    for (auto& t : threads) t.join();
    // Prefer the originating error over secondary AbortedErrors.
    std::exception_ptr first;
    for (auto& e : errors) {
      if (!e) continue;
      if (!first) first = e;
      try {
        std::rethrow_exception(e);
      } catch (const AbortedError&) {
      } catch (...) {
        std::rethrow_exception(e);
      }
    }
    if (first) std::rethrow_exception(first);
  }

 private:
  std::shared_ptr<detail::WorldState> w_;
};

// --- Group implementation ---------------------------------------------------

inline detail::Slot& Group::join(std::unique_lock<std::mutex>& lk, std::uint64_t seq,
                                 CollectiveKind kind, std::type_index type,
                                 int root) const {
  (void)lk;
  auto& slot = st_->slots[seq];
  if (slot.arrived == 0 && slot.consumed == 0 && slot.error.empty()) {
    slot.kind = kind;
    slot.type = type;
    slot.root = root;
    slot.contrib.assign(st_->members.size(), {});
    slot.a2a.assign(st_->members.size(), {});
  } else if (slot.kind != kind || slot.type != type || slot.root != root) {
    std::string msg = std::string("mismatched collective on group: expected ") +
                      detail::kind_name(slot.kind) + ", got " + detail::kind_name(kind);
    slot.error = msg;
    slot.complete = true;
    w_->cv.notify_all();
    throw ProtocolError(msg);
  }
  return slot;
}

inline void Group::await(std::unique_lock<std::mutex>& lk, detail::Slot& slot) const {
  slot.arrived++;
  if (slot.arrived == size()) {
    slot.complete = true;
    w_->cv.notify_all();
  }
  auto deadline = std::chrono::steady_clock::now() +
                  std::chrono::milliseconds(w_->timeout_ms > 0 ? w_->timeout_ms : 0);
  while (!slot.complete && !w_->abort) {
    if (w_->timeout_ms > 0) {
      if (w_->cv.wait_until(lk, deadline) == std::cv_status::timeout &&
          !slot.complete && !w_->abort) {
        slot.error = "collective timed out (possible deadlock)";
        slot.complete = true;
        w_->cv.notify_all();
        break;
      }
    } else {
      w_->cv.wait(lk);
    }
  }
  if (w_->abort && !slot.complete) throw AbortedError("world aborted");
  if (!slot.error.empty()) throw ProtocolError(slot.error);
}

inline void Group::retire(std::unique_lock<std::mutex>& lk, std::uint64_t seq) const {
  (void)lk;
  auto it = st_->slots.find(seq);
  if (it == st_->slots.end()) return;
  it->second.consumed++;
  if (it->second.consumed == size()) st_->slots.erase(it);
}

inline void Group::poison(std::unique_lock<std::mutex>& lk, detail::Slot& slot,
                          const std::string& msg) const {
  (void)lk;
  slot.error = msg;
  slot.complete = true;
  w_->cv.notify_all();
  throw ProtocolError(msg);
}

template <class T>
std::vector<T> Group::broadcast(std::vector<T> data, int root) const {
  if (root < 0 || root >= size()) throw InvalidArgument("broadcast root out of range");
  std::uint64_t seq = (*next_op_)++;
  std::unique_lock<std::mutex> lk(w_->mtx);
  auto& slot = join(lk, seq, CollectiveKind::broadcast, typeid(T), root);
  if (my_index_ == root) slot.contrib[root] = detail::pack(data);
  await(lk, slot);
  std::vector<T> out = (my_index_ == root)
                           ? std::move(data)
                           : detail::unpack<T>(slot.contrib[root]);
  retire(lk, seq);
  return out;
}

template <class T>
std::vector<std::vector<T>> Group::gather(const std::vector<T>& data, int root) const {
  if (root < 0 || root >= size()) throw InvalidArgument("gather root out of range");
  std::uint64_t seq = (*next_op_)++;
  std::unique_lock<std::mutex> lk(w_->mtx);
  auto& slot = join(lk, seq, CollectiveKind::gather, typeid(T), root);
  slot.contrib[my_index_] = detail::pack(data);
  await(lk, slot);
  std::vector<std::vector<T>> out;
  if (my_index_ == root) {
    out.reserve(size());
    for (const auto& b : slot.contrib) out.push_back(detail::unpack<T>(b));
  }
  retire(lk, seq);
  return out;
}

template <class T>
std::vector<T> Group::scatter(const std::vector<std::vector<T>>& chunks,
                              int root) const {
  if (root < 0 || root >= size()) throw InvalidArgument("scatter root out of range");
  std::uint64_t seq = (*next_op_)++;
  std::unique_lock<std::mutex> lk(w_->mtx);
  auto& slot = join(lk, seq, CollectiveKind::scatter, typeid(T), root);
  if (my_index_ == root) {
    if (static_cast<int>(chunks.size()) != size())
      poison(lk, slot, "scatter chunk count != group size");
    for (int i = 0; i < size(); ++i) slot.contrib[i] = detail::pack(chunks[i]);
  }
  await(lk, slot);
  std::vector<T> out = detail::unpack<T>(slot.contrib[my_index_]);
  retire(lk, seq);
  return out;
}

template <class T>
std::vector<T> Group::all_reduce_sum(const std::vector<T>& data) const {
  std::uint64_t seq = (*next_op_)++;
  std::unique_lock<std::mutex> lk(w_->mtx);
  auto& slot = join(lk, seq, CollectiveKind::all_reduce_sum, typeid(T), -1);
  slot.contrib[my_index_] = detail::pack(data);
  await(lk, slot);
  // Every member sums in member order; identical floating-point result on all.
  std::vector<T> out(data.size(), T{});
  for (const auto& b : slot.contrib) {
    auto part = detail::unpack<T>(b);
    if (part.size() != out.size())
      poison(lk, slot, "all_reduce_sum length mismatch across members");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += part[i];
  }
  retire(lk, seq);
  return out;
}

inline void Group::barrier() const {
  std::uint64_t seq = (*next_op_)++;
  std::unique_lock<std::mutex> lk(w_->mtx);
  auto& slot = join(lk, seq, CollectiveKind::barrier, typeid(void), -1);
  await(lk, slot);
  retire(lk, seq);
}

template <class T>
std::vector<std::vector<T>> Group::all_to_all_v(
    const std::vector<std::vector<T>>& send_lists,
    const std::vector<std::size_t>* expected_counts) const {
  if (static_cast<int>(send_lists.size()) != size())
    throw InvalidArgument("all_to_all_v needs one send list per group member");
  std::uint64_t seq = (*next_op_)++;
  std::unique_lock<std::mutex> lk(w_->mtx);
  auto& slot = join(lk, seq, CollectiveKind::all_to_all_v, typeid(T), -1);
  auto& mine = slot.a2a[my_index_];
  mine.resize(size());
  for (int j = 0; j < size(); ++j) mine[j] = detail::pack(send_lists[j]);
  await(lk, slot);
  std::vector<std::vector<T>> out(size());
  for (int i = 0; i < size(); ++i) {
    out[i] = detail::unpack<T>(slot.a2a[i][my_index_]);
    if (expected_counts && out[i].size() != (*expected_counts)[i]) {
      poison(lk, slot,
             "all_to_all_v count mismatch for pair (" +
                 std::to_string(world_rank(i)) + " -> " +
                 std::to_string(world_rank(my_index_)) + "): got " +
                 std::to_string(out[i].size()) + ", expected " +
                 std::to_string((*expected_counts)[i]));
    }
  }
  retire(lk, seq);
  return out;
}

}  // namespace qtnh
