#include <doctest.h>

#include <algorithm>
#include <random>
#include <vector>

#include "moesim/execution_engine.hpp"

using namespace moesim;

namespace {

HardwareProfile io_profile(std::int64_t t_io = 100) {
  HardwareProfile p;
  p.t_cpu_unit_ns = 1;
  p.t_gpu_unit_ns = 1;
  p.t_io_unit_ns = t_io;
  p.t_draft_unit_ns = 1;
  p.expert_bytes = 10;
  p.vram_capacity_bytes = 1000;
  return p;
}

ExpertKey k(int e) { return {0, e}; }

std::vector<ExpertKey> drained_keys(PrefetchQueues& q, int tau) {
  std::vector<ExpertKey> out;
  q.drain(tau, [&](ExpertKey key, int) {
    out.push_back(key);
    return true;
  });
  return out;
}

} // namespace

TEST_CASE("prefetch drains by descending level, FIFO within a level") {
  PrefetchQueues q(4);
  q.enqueue(k(0), 4);
  q.enqueue(k(1), 2);
  q.enqueue(k(2), 4);
  q.enqueue(k(3), 3);
  const auto order = drained_keys(q, 3);
  REQUIRE(order.size() == 3); // the level-2 request stays below tau
  CHECK(order[0] == k(0));
  CHECK(order[1] == k(2));
  CHECK(order[2] == k(3));
  CHECK(q.pending() == 1);
  CHECK(q.level_of(k(1)) == 2);
}

TEST_CASE("re-enqueue coalesces to the higher level") {
  PrefetchQueues q(4);
  q.enqueue(k(7), 2);
  q.enqueue(k(7), 4);
  CHECK(q.pending() == 1);
  CHECK(q.level_of(k(7)) == 4);
  // Lower re-enqueue is a no-op.
  q.enqueue(k(7), 1);
  CHECK(q.level_of(k(7)) == 4);
  const auto order = drained_keys(q, 1);
  REQUIRE(order.size() == 1);
  CHECK(order[0] == k(7));
}

TEST_CASE("score-0 requests are rejected") {
  PrefetchQueues q(4);
  CHECK_THROWS(q.enqueue(k(0), 0));
  CHECK_THROWS(q.enqueue(k(0), 5));
  CHECK_THROWS(PrefetchQueues(0));
}

TEST_CASE("drain stops on visitor refusal and retains the request") {
  PrefetchQueues q(3);
  q.enqueue(k(0), 3);
  q.enqueue(k(1), 3);
  int seen = 0;
  q.drain(1, [&](ExpertKey, int) { return ++seen == 1 ? true : false; });
  CHECK(q.pending() == 1);
  CHECK(q.contains(k(1)));
}

TEST_CASE("scrub drops requests failing the predicate") {
  PrefetchQueues q(3);
  q.enqueue(k(0), 3);
  q.enqueue(k(1), 2);
  q.enqueue(k(2), 2);
  q.scrub([](ExpertKey key, int) { return key.expert != 1; });
  CHECK(q.pending() == 2);
  CHECK_FALSE(q.contains(k(1)));
  const auto order = drained_keys(q, 1);
  CHECK(order == std::vector<ExpertKey>{k(0), k(2)});
}

TEST_CASE("residency pool admits, retags, and reports free space") {
  ResidencyPool pool(4, 10, 30);
  CHECK(pool.frozen_score() == 5);
  CHECK(pool.admit(k(0), 2));
  CHECK(pool.admit(k(1), 4));
  CHECK(pool.admit(k(2), 1));
  CHECK(pool.free_bytes() == 0);
  CHECK_FALSE(pool.admit(k(3), 4)); // full
  CHECK(pool.size() == 3);
  CHECK(pool.score_of(k(0)) == 2);
  // Admitting a resident is a retag, not a second copy.
  CHECK(pool.admit(k(0), 3));
  CHECK(pool.score_of(k(0)) == 3);
  CHECK(pool.total_bytes() == 30);
  CHECK(pool.retag(k(2), 4));
  CHECK(pool.score_of(k(2)) == 4);
  CHECK_FALSE(pool.retag(k(9), 1)); // stale message for a non-resident
  CHECK_THROWS(pool.score_of(k(9)));
  CHECK_THROWS(pool.admit(k(5), 5));
  CHECK_THROWS(pool.retag(k(0), -1));
}

TEST_CASE("evict_below removes exactly the sub-threshold scores") {
  ResidencyPool pool(4, 10, 100);
  pool.admit(k(0), 1);
  pool.admit(k(1), 3);
  pool.admit(k(2), 4);
  pool.freeze(k(2));
  const auto evicted = apply_eviction(pool, 3);
  REQUIRE(evicted.size() == 1);
  CHECK(evicted[0].key == k(0));
  CHECK(evicted[0].kind == IoEvent::Kind::evict);
  CHECK(evicted[0].duration_ns == 0); // bookkeeping only
  CHECK(pool.size() == 2);
  // tau=1 touches nothing when no resident sits at score 0.
  CHECK(apply_eviction(pool, 1).empty());
  CHECK_THROWS(apply_eviction(pool, 0));
  CHECK_THROWS(apply_eviction(pool, 5));
}

TEST_CASE("frozen experts survive maximal eviction; thawed ones do not") {
  ResidencyPool pool(4, 10, 100);
  pool.admit(k(0), 2);
  pool.freeze(k(0));
  pool.freeze(k(0)); // idempotent
  CHECK(pool.score_of(k(0)) == pool.frozen_score());
  CHECK(pool.evict_below(4).empty());
  CHECK(pool.resident(k(0)));
  // Retag messages cannot reach a frozen expert.
  CHECK(pool.retag(k(0), 1));
  CHECK(pool.score_of(k(0)) == pool.frozen_score());
  pool.thaw_and_recycle(k(0));
  CHECK(pool.score_of(k(0)) == 0);
  const auto evicted = pool.evict_below(1);
  REQUIRE(evicted.size() == 1);
  CHECK(evicted[0] == k(0));
  CHECK_THROWS(pool.freeze(k(9)));
  CHECK_THROWS(pool.thaw_and_recycle(k(9)));
}

TEST_CASE("evict_for_room frees only what is needed, lowest scores first") {
  ResidencyPool pool(4, 10, 50);
  pool.admit(k(0), 0);
  pool.admit(k(1), 1);
  pool.admit(k(2), 2);
  pool.admit(k(3), 3);
  pool.admit(k(4), 4);
  // Need room for two experts; scores 0 and 1 go, 2..4 stay.
  const auto evicted = pool.evict_for_room(20, 4);
  REQUIRE(evicted.size() == 2);
  CHECK(evicted[0] == k(0));
  CHECK(evicted[1] == k(1));
  CHECK(pool.free_bytes() == 20);
  // Already enough room: no-op.
  CHECK(pool.evict_for_room(20, 4).empty());
  // tau caps the reclaim: score-2 resident is not below tau=2.
  CHECK(pool.evict_for_room(30, 2).empty());
  // Frozen residents never make room.
  pool.freeze(k(2));
  pool.freeze(k(3));
  pool.freeze(k(4));
  CHECK(pool.evict_for_room(50, 4).empty());
}

TEST_CASE("drain_prefetch respects the IO budget") {
  PrefetchQueues q(4);
  ResidencyPool pool(4, 10, 1000);
  HardwareProfile p = io_profile(100);
  q.enqueue(k(0), 4);
  q.enqueue(k(1), 4);
  q.enqueue(k(2), 3);
  // Budget covers exactly two transfers.
  const auto loads = drain_prefetch(q, 1, 200, p, pool);
  REQUIRE(loads.size() == 2);
  CHECK(loads[0].key == k(0));
  CHECK(loads[0].start_ns == 0);
  CHECK(loads[0].duration_ns == 100);
  CHECK(loads[1].key == k(1));
  CHECK(loads[1].start_ns == 100); // back to back
  CHECK(pool.resident(k(0)));
  CHECK(pool.resident(k(1)));
  CHECK_FALSE(pool.resident(k(2)));
  CHECK(q.contains(k(2))); // retained for a later step
  CHECK(pool.score_of(k(0)) == 4); // admitted at its request level
  CHECK_THROWS(drain_prefetch(q, 1, -1, p, pool));
}

TEST_CASE("drain_prefetch skips residents and stops at VRAM pressure") {
  PrefetchQueues q(4);
  ResidencyPool pool(4, 10, 20);
  HardwareProfile p = io_profile(1);
  pool.admit(k(0), 2);
  q.enqueue(k(0), 4); // stale: already resident
  q.enqueue(k(1), 4);
  q.enqueue(k(2), 3);
  const auto loads = drain_prefetch(q, 1, 1000, p, pool);
  REQUIRE(loads.size() == 1); // k0 skipped silently, k1 loaded, k2 blocked
  CHECK(loads[0].key == k(1));
  CHECK_FALSE(q.contains(k(0))); // stale request consumed
  CHECK(q.contains(k(2)));       // blocked request retained
  CHECK(pool.free_bytes() == 0);
}

TEST_CASE("drain_prefetch honors tau") {
  PrefetchQueues q(4);
  ResidencyPool pool(4, 10, 1000);
  HardwareProfile p = io_profile(1);
  q.enqueue(k(0), 2);
  q.enqueue(k(1), 4);
  const auto loads = drain_prefetch(q, 3, 1000, p, pool);
  REQUIRE(loads.size() == 1);
  CHECK(loads[0].key == k(1));
  CHECK(q.contains(k(0)));
}

TEST_CASE("randomized operations keep every invariant") {
  std::mt19937_64 rng(321);
  for (int trial = 0; trial < 50; ++trial) {
    const int cap = 1 + static_cast<int>(rng() % 5);
    const int n_experts = 16;
    const std::int64_t bytes = 10;
    const std::int64_t capacity = 10 * (1 + static_cast<std::int64_t>(rng() % 8));
    PrefetchQueues q(cap);
    ResidencyPool pool(cap, bytes, capacity);
    HardwareProfile p = io_profile(1 + rng() % 50);
    std::vector<ExpertKey> frozen;

    for (int op = 0; op < 300; ++op) {
      const int e = static_cast<int>(rng() % n_experts);
      switch (rng() % 7) {
        case 0:
          q.enqueue(k(e), 1 + static_cast<int>(rng() % cap));
          break;
        case 1:
          pool.admit(k(e), static_cast<int>(rng() % (cap + 1)));
          break;
        case 2:
          pool.retag(k(e), static_cast<int>(rng() % (cap + 1)));
          break;
        case 3:
          if (pool.resident(k(e)) &&
              pool.score_of(k(e)) != pool.frozen_score()) {
            pool.freeze(k(e));
            frozen.push_back(k(e));
          }
          break;
        case 4: {
          if (!frozen.empty()) {
            pool.thaw_and_recycle(frozen.back());
            frozen.pop_back();
          }
          break;
        }
        case 5: {
          const int tau = 1 + static_cast<int>(rng() % cap);
          pool.evict_below(tau);
          // Post-eviction soundness: no non-frozen resident below tau.
          for (const auto& [key, score] : pool.entries())
            CHECK((score == pool.frozen_score() || score >= tau));
          break;
        }
        case 6: {
          const int tau = 1 + static_cast<int>(rng() % cap);
          const int levels_before = static_cast<int>(q.pending());
          std::int64_t budget = static_cast<std::int64_t>(rng() % 200);
          int last_level = cap + 1;
          q.drain(tau, [&](ExpertKey key, int level) {
            CHECK(level <= last_level); // non-increasing visit order
            last_level = level;
            if (pool.resident(key)) return true;
            if (p.t_io_unit_ns > budget) return false;
            if (!pool.admit(key, level)) return false;
            budget -= p.t_io_unit_ns;
            return true;
          });
          CHECK(static_cast<int>(q.pending()) <= levels_before);
          break;
        }
      }
      // Capacity safety and byte accounting hold after every operation.
      CHECK(pool.total_bytes() <= capacity);
      CHECK(pool.total_bytes() ==
            static_cast<std::int64_t>(pool.size()) * bytes);
      for (ExpertKey fk : frozen) CHECK(pool.resident(fk));
    }
  }
}
