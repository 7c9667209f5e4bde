#pragma once

// Integer-only reference for the provisioning tests.

#include <cstdint>
#include <random>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "budgetflow/provision.hpp"

namespace budgetflow::testing {

struct IntInstance {
  std::int64_t budget = 0;
  std::vector<std::int64_t> costs;
  int cap = 5;
  int min_agents = 2;

  ProvisionProblem problem() const {
    ProvisionProblem p;
    p.budget = static_cast<double>(budget);
    for (auto c : costs) p.tier_costs.push_back(static_cast<double>(c));
    p.instance_cap = cap;
    p.min_agents = min_agents;
    return p;
  }
};

inline std::vector<BigInt> oracle_weights(const IntInstance& in) {
  const std::size_t n = in.costs.size();
  std::vector<BigInt> w(n, 0);
  for (std::size_t i = n; i-- > 0;) {
    BigInt v = 1;
    for (std::size_t j = i + 1; j < n; ++j) v += w[j] * (in.budget / in.costs[j]);
    w[i] = v;
  }
  return w;
}

/// For every tier i, the largest sum_{j>i} W_j m_j over multisets of lower
/// tiers whose cost fits the budget (no instance caps). Unbounded knapsack,
/// adding one tier at a time from the cheapest end.
inline std::vector<BigInt> oracle_max_lower_weights(const IntInstance& in,
                                                    const std::vector<BigInt>& w) {
  const std::size_t n = in.costs.size();
  const auto cells = static_cast<std::size_t>(in.budget) + 1;
  std::vector<BigInt> best(cells, 0);
  std::vector<BigInt> out(n, 0);
  for (std::size_t i = n; i-- > 0;) {
    out[i] = best.back();
    const auto c = static_cast<std::size_t>(in.costs[i]);
    for (std::size_t b = c; b < cells; ++b) {
      BigInt cand = best[b - c] + w[i];
      if (cand > best[b]) best[b] = std::move(cand);
    }
  }
  return out;
}

struct OracleResult {
  bool feasible = false;
  std::vector<int> counts;
  BigInt weight = 0;
  std::int64_t cost = 0;
};

/// Enumerates every count vector with 0 <= n_i <= cap.
inline OracleResult oracle_solve(const IntInstance& in) {
  const auto w = oracle_weights(in);
  const std::size_t n = in.costs.size();
  OracleResult best;
  std::vector<int> counts(n, 0);
  while (true) {
    std::int64_t cost = 0;
    int placed = 0;
    BigInt weight = 0;
    for (std::size_t i = 0; i < n; ++i) {
      cost += in.costs[i] * counts[i];
      placed += counts[i];
      weight += w[i] * counts[i];
    }
    if (cost <= in.budget && placed >= in.min_agents) {
      const bool better = !best.feasible || weight > best.weight ||
                          (weight == best.weight &&
                           (cost < best.cost || (cost == best.cost && counts < best.counts)));
      if (better) best = {true, counts, weight, cost};
    }
    std::size_t pos = 0;
    while (pos < n && counts[pos] == in.cap) counts[pos++] = 0;
    if (pos == n) break;
    ++counts[pos];
  }
  return best;
}

inline IntInstance random_instance(std::mt19937_64& rng, int max_tiers = 5, int max_cap = 5) {
  IntInstance in;
  const int tiers = 1 + static_cast<int>(rng() % static_cast<unsigned>(max_tiers));
  in.budget = 100 + static_cast<std::int64_t>(rng() % 9901);  // [100, 1e4]
  for (int i = 0; i < tiers; ++i) in.costs.push_back(10 + static_cast<std::int64_t>(rng() % 1991));
  in.cap = 1 + static_cast<int>(rng() % static_cast<unsigned>(max_cap));
  in.min_agents = 2;
  return in;
}

}  // namespace budgetflow::testing
