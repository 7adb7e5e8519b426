#ifndef MOESIM_EXECUTION_ENGINE_HPP
#define MOESIM_EXECUTION_ENGINE_HPP

// Actualizes threshold decisions: utility-ordered prefetch queues, a
// score-ordered residency pool with frozen-expert protection, and VRAM
// accounting. Eviction is a bookkeeping drop; the CPU keeps the master
// copy of every expert, so nothing transfers back.

#include <cstdint>
#include <deque>
#include <map>
#include <set>
#include <vector>

#include "moesim/workload_balancer.hpp"

namespace moesim {

struct ExpertKey {
  int layer = 0;
  int expert = 0;
  auto operator<=>(const ExpertKey&) const = default;
};

struct IoEvent {
  enum class Kind { load, evict };
  Kind kind = Kind::load;
  ExpertKey key;
  std::int64_t start_ns = 0;
  std::int64_t duration_ns = 0; // T_io for loads, 0 for evictions
};

// Multi-level FIFO of pending prefetch requests, levels 1..K. A request
// lives in at most one level; re-enqueueing coalesces to the higher level.
class PrefetchQueues {
public:
  explicit PrefetchQueues(int utility_cap);

  // Rejects score 0 (cold experts are never prefetched).
  void enqueue(ExpertKey key, int score);

  bool contains(ExpertKey key) const { return level_of_.contains(key); }
  int level_of(ExpertKey key) const;
  std::size_t pending() const { return level_of_.size(); }
  int cap() const { return static_cast<int>(levels_.size()); }

  // Visits eligible requests in descending level order, FIFO within a
  // level, removing each visited request. The visitor returns false to
  // stop the drain; the current request is then retained.
  template <typename Visitor>
  void drain(int tau, Visitor&& visit);

  // Removes pending requests failing the predicate (key, level) -> bool,
  // preserving FIFO order of the survivors.
  template <typename Pred>
  void scrub(Pred&& keep);

private:
  std::vector<std::deque<ExpertKey>> levels_; // index = level - 1
  std::map<ExpertKey, int> level_of_;
};

// GPU-resident experts keyed by utility score. Frozen experts carry the
// sentinel score K+1 and are immune to eviction and retagging.
class ResidencyPool {
public:
  ResidencyPool(int utility_cap, std::int64_t expert_bytes,
                std::int64_t capacity_bytes);

  int frozen_score() const { return cap_ + 1; }
  std::int64_t total_bytes() const { return total_bytes_; }
  std::int64_t capacity_bytes() const { return capacity_bytes_; }
  std::int64_t free_bytes() const { return capacity_bytes_ - total_bytes_; }
  std::int64_t expert_bytes() const { return expert_bytes_; }
  std::size_t size() const { return score_of_.size(); }

  bool resident(ExpertKey key) const { return score_of_.contains(key); }
  int score_of(ExpertKey key) const;

  // Admits a non-resident expert at the given score. Fails (returns
  // false) when the capacity would be exceeded; admitting a resident
  // expert just retags it.
  bool admit(ExpertKey key, int score);

  // Drops all non-frozen residents with score < tau; returns their keys.
  std::vector<ExpertKey> evict_below(int tau);

  // Lazy reclamation: drops non-frozen residents with score < tau in
  // ascending score order, oldest key first, until free_bytes() >=
  // needed_bytes or nothing below tau remains. Returns the evicted keys.
  std::vector<ExpertKey> evict_for_room(std::int64_t needed_bytes, int tau);

  void freeze(ExpertKey key);            // idempotent; throws if non-resident
  void thaw_and_recycle(ExpertKey key);  // score -> 0, first in line to drop

  // Retags a resident, non-frozen expert. Returns false (stale message)
  // for non-residents; frozen experts are left untouched.
  bool retag(ExpertKey key, int new_score);

  // Residents of one layer as an expert-id set (balancer view).
  std::unordered_set<int> layer_residents(int layer) const;

  // All residents with their score tags, for invariant scans.
  std::vector<std::pair<ExpertKey, int>> entries() const;

private:
  void place(ExpertKey key, int score);
  void displace(ExpertKey key, int score);

  int cap_;
  std::int64_t expert_bytes_;
  std::int64_t capacity_bytes_;
  std::int64_t total_bytes_ = 0;
  std::map<int, std::set<ExpertKey>> by_score_;
  std::map<ExpertKey, int> score_of_;
};

// Drains eligible prefetch requests into the pool. Each load costs
// T_io; the drain stops when the next load would exceed io_budget_ns or
// no longer fits in VRAM. Requests for already-resident experts are
// skipped silently (stale after coalescing across steps). Emitted load
// events carry back-to-back start offsets from start_ns.
std::vector<IoEvent> drain_prefetch(PrefetchQueues& queues, int tau,
                                    std::int64_t io_budget_ns,
                                    const HardwareProfile& profile,
                                    ResidencyPool& pool,
                                    std::int64_t start_ns = 0);

// Eviction wrapper emitting zero-duration bookkeeping events.
std::vector<IoEvent> apply_eviction(ResidencyPool& pool, int tau,
                                    std::int64_t start_ns = 0);

template <typename Visitor>
void PrefetchQueues::drain(int tau, Visitor&& visit) {
  for (int level = cap(); level >= std::max(tau, 1); --level) {
    auto& q = levels_[level - 1];
    while (!q.empty()) {
      ExpertKey key = q.front();
      if (!visit(key, level)) return;
      q.pop_front();
      level_of_.erase(key);
    }
  }
}

template <typename Pred>
void PrefetchQueues::scrub(Pred&& keep) {
  for (int level = 1; level <= cap(); ++level) {
    auto& q = levels_[level - 1];
    for (auto it = q.begin(); it != q.end();) {
      if (keep(*it, level)) {
        ++it;
      } else {
        level_of_.erase(*it);
        it = q.erase(it);
      }
    }
  }
}

} // namespace moesim

#endif
