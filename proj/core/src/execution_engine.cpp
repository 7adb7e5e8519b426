#include "moesim/execution_engine.hpp"

#include <stdexcept>

namespace moesim {

PrefetchQueues::PrefetchQueues(int utility_cap) {
  if (utility_cap < 1)
    throw std::invalid_argument("PrefetchQueues: utility cap must be >= 1");
  levels_.resize(utility_cap);
}

void PrefetchQueues::enqueue(ExpertKey key, int score) {
  if (score < 1 || score > cap())
    throw std::out_of_range("PrefetchQueues: score must be in [1,K]");
  auto it = level_of_.find(key);
  if (it != level_of_.end()) {
    if (it->second >= score) return; // keep the higher level
    auto& q = levels_[it->second - 1];
    std::erase(q, key);
    level_of_.erase(it);
  }
  levels_[score - 1].push_back(key);
  level_of_[key] = score;
}

int PrefetchQueues::level_of(ExpertKey key) const {
  auto it = level_of_.find(key);
  if (it == level_of_.end())
    throw std::out_of_range("PrefetchQueues: request not pending");
  return it->second;
}

ResidencyPool::ResidencyPool(int utility_cap, std::int64_t expert_bytes,
                             std::int64_t capacity_bytes)
    : cap_(utility_cap), expert_bytes_(expert_bytes),
      capacity_bytes_(capacity_bytes) {
  if (utility_cap < 1)
    throw std::invalid_argument("ResidencyPool: utility cap must be >= 1");
  if (expert_bytes <= 0 || capacity_bytes < 0)
    throw std::invalid_argument("ResidencyPool: invalid byte sizes");
}

int ResidencyPool::score_of(ExpertKey key) const {
  auto it = score_of_.find(key);
  if (it == score_of_.end())
    throw std::out_of_range("ResidencyPool: expert not resident");
  return it->second;
}

void ResidencyPool::place(ExpertKey key, int score) {
  by_score_[score].insert(key);
  score_of_[key] = score;
}

void ResidencyPool::displace(ExpertKey key, int score) {
  auto it = by_score_.find(score);
  it->second.erase(key);
  if (it->second.empty()) by_score_.erase(it);
  score_of_.erase(key);
}

bool ResidencyPool::admit(ExpertKey key, int score) {
  if (score < 0 || score > cap_)
    throw std::out_of_range("ResidencyPool: admit score must be in [0,K]");
  auto it = score_of_.find(key);
  if (it != score_of_.end()) {
    retag(key, score);
    return true;
  }
  if (total_bytes_ + expert_bytes_ > capacity_bytes_) return false;
  place(key, score);
  total_bytes_ += expert_bytes_;
  return true;
}

std::vector<ExpertKey> ResidencyPool::evict_below(int tau) {
  std::vector<ExpertKey> evicted;
  auto it = by_score_.begin();
  while (it != by_score_.end() && it->first < tau) {
    if (it->first == frozen_score()) break; // unreachable: frozen > K >= tau
    for (const ExpertKey& key : it->second) {
      evicted.push_back(key);
      score_of_.erase(key);
    }
    it = by_score_.erase(it);
  }
  total_bytes_ -= static_cast<std::int64_t>(evicted.size()) * expert_bytes_;
  return evicted;
}

std::vector<ExpertKey> ResidencyPool::evict_for_room(std::int64_t needed_bytes,
                                                     int tau) {
  std::vector<ExpertKey> evicted;
  auto it = by_score_.begin();
  while (free_bytes() < needed_bytes && it != by_score_.end() &&
         it->first < tau && it->first != frozen_score()) {
    auto& keys = it->second;
    while (free_bytes() < needed_bytes && !keys.empty()) {
      ExpertKey key = *keys.begin();
      keys.erase(keys.begin());
      score_of_.erase(key);
      total_bytes_ -= expert_bytes_;
      evicted.push_back(key);
    }
    it = keys.empty() ? by_score_.erase(it) : std::next(it);
  }
  return evicted;
}

void ResidencyPool::freeze(ExpertKey key) {
  auto it = score_of_.find(key);
  if (it == score_of_.end())
    throw std::logic_error("ResidencyPool: freezing a non-resident expert");
  if (it->second == frozen_score()) return;
  displace(key, it->second);
  place(key, frozen_score());
}

void ResidencyPool::thaw_and_recycle(ExpertKey key) {
  auto it = score_of_.find(key);
  if (it == score_of_.end())
    throw std::logic_error("ResidencyPool: recycling a non-resident expert");
  displace(key, it->second);
  place(key, 0);
}

bool ResidencyPool::retag(ExpertKey key, int new_score) {
  if (new_score < 0 || new_score > cap_)
    throw std::out_of_range("ResidencyPool: retag score must be in [0,K]");
  auto it = score_of_.find(key);
  if (it == score_of_.end()) return false;   // stale message
  if (it->second == frozen_score()) return true; // freeze wins
  if (it->second != new_score) {
    displace(key, it->second);
    place(key, new_score);
  }
  return true;
}

std::unordered_set<int> ResidencyPool::layer_residents(int layer) const {
  std::unordered_set<int> ids;
  for (const auto& [key, score] : score_of_)
    if (key.layer == layer) ids.insert(key.expert);
  return ids;
}

std::vector<std::pair<ExpertKey, int>> ResidencyPool::entries() const {
  return {score_of_.begin(), score_of_.end()};
}

std::vector<IoEvent> drain_prefetch(PrefetchQueues& queues, int tau,
                                    std::int64_t io_budget_ns,
                                    const HardwareProfile& profile,
                                    ResidencyPool& pool,
                                    std::int64_t start_ns) {
  if (io_budget_ns < 0)
    throw std::invalid_argument("drain_prefetch: negative io budget");
  std::vector<IoEvent> events;
  std::int64_t used_ns = 0;
  queues.drain(tau, [&](ExpertKey key, int level) {
    if (pool.resident(key)) return true; // stale request, consume silently
    if (used_ns + profile.t_io_unit_ns > io_budget_ns) return false;
    if (!pool.admit(key, level)) return false; // VRAM full, retain request
    events.push_back({IoEvent::Kind::load, key, start_ns + used_ns,
                      profile.t_io_unit_ns});
    used_ns += profile.t_io_unit_ns;
    return true;
  });
  return events;
}

std::vector<IoEvent> apply_eviction(ResidencyPool& pool, int tau,
                                    std::int64_t start_ns) {
  if (tau < 1 || tau > pool.frozen_score() - 1)
    throw std::out_of_range("apply_eviction: tau must be in [1,K]");
  std::vector<IoEvent> events;
  for (ExpertKey key : pool.evict_below(tau))
    events.push_back({IoEvent::Kind::evict, key, start_ns, 0});
  return events;
}

} // namespace moesim
