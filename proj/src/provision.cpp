#include "budgetflow/provision.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace budgetflow {

namespace {

using Rational = boost::multiprecision::cpp_rational;

// Budget arithmetic on exact rationals built from the double inputs.
struct ExactProblem {
  Rational budget;
  std::vector<Rational> costs;
  std::vector<BigInt> weights;
  std::vector<int> caps;
  int min_agents = 0;
};

ExactProblem make_exact(const ProvisionProblem& p) {
  ExactProblem e;
  e.budget = Rational(p.budget);
  for (double c : p.tier_costs) e.costs.emplace_back(c);
  e.weights = compute_weights(p).weights;
  for (std::size_t i = 0; i < p.tier_costs.size(); ++i) {
    e.caps.push_back(max_count(p, i));
  }
  e.min_agents = p.min_agents;
  return e;
}

struct Candidate {
  std::vector<int> counts;
  BigInt weight;
  Rational cost;
};

// True when `a` should replace `b` as the incumbent.
bool better(const Candidate& a, const Candidate& b) {
  if (a.weight != b.weight) return a.weight > b.weight;
  if (a.cost != b.cost) return a.cost < b.cost;
  return a.counts < b.counts;
}

ProvisionSolution finish(const ProvisionProblem& p, const ExactProblem& e,
                         const Candidate* best) {
  ProvisionSolution s;
  if (best == nullptr) {
    s.feasible = false;
    s.counts.assign(p.tier_costs.size(), 0);
    const double cheapest =
        *std::min_element(p.tier_costs.begin(), p.tier_costs.end());
    s.reason = "no selection of at least " + std::to_string(p.min_agents) +
               " instances fits budget " + std::to_string(p.budget) +
               " (cheapest tier costs " + std::to_string(cheapest) + ")";
    return s;
  }
  s.feasible = true;
  s.counts = best->counts;
  s.total_weight = best->weight;
  s.total_cost = static_cast<double>(best->cost);
  (void)e;
  return s;
}

class BranchAndBound {
 public:
  explicit BranchAndBound(const ExactProblem& e) : e_(e) {
    const std::size_t n = e_.costs.size();
    // Ratio order for the fractional relaxation.
    ratio_order_.resize(n);
    std::iota(ratio_order_.begin(), ratio_order_.end(), 0);
    std::stable_sort(ratio_order_.begin(), ratio_order_.end(),
                     [this](std::size_t a, std::size_t b) {
                       return Rational(e_.weights[a]) * e_.costs[b] >
                              Rational(e_.weights[b]) * e_.costs[a];
                     });
    // Cheapest-first order for the min-agents feasibility test.
    cost_order_.resize(n);
    std::iota(cost_order_.begin(), cost_order_.end(), 0);
    std::stable_sort(cost_order_.begin(), cost_order_.end(),
                     [this](std::size_t a, std::size_t b) {
                       return e_.costs[a] < e_.costs[b];
                     });
    current_.counts.assign(n, 0);
  }

  const Candidate* run() {
    current_.weight = 0;
    current_.cost = 0;
    descend(0, 0);
    return have_best_ ? &best_ : nullptr;
  }

 private:
  // LP relaxation over tiers >= depth with the residual budget.
  Rational relaxation(std::size_t depth, const Rational& residual) const {
    Rational bound = 0;
    Rational left = residual;
    for (std::size_t idx : ratio_order_) {
      if (idx < depth || left <= 0) continue;
      const Rational full = e_.costs[idx] * e_.caps[idx];
      if (full <= left) {
        bound += Rational(e_.weights[idx]) * e_.caps[idx];
        left -= full;
      } else {
        bound += Rational(e_.weights[idx]) * left / e_.costs[idx];
        left = 0;
      }
    }
    return bound;
  }

  // Can tiers >= depth still supply `needed` more instances within residual?
  bool can_reach_min(std::size_t depth, int needed,
                     const Rational& residual) const {
    if (needed <= 0) return true;
    Rational spend = 0;
    for (std::size_t idx : cost_order_) {
      if (idx < depth) continue;
      const int take = std::min(needed, e_.caps[idx]);
      spend += e_.costs[idx] * take;
      needed -= take;
      if (needed == 0) break;
    }
    return needed == 0 && spend <= residual;
  }

  void descend(std::size_t depth, int placed) {
    const Rational residual = e_.budget - current_.cost;
    if (depth == e_.costs.size()) {
      if (placed < e_.min_agents) return;
      if (!have_best_ || better(current_, best_)) {
        best_ = current_;
        have_best_ = true;
      }
      return;
    }
    if (!can_reach_min(depth, e_.min_agents - placed, residual)) return;
    if (have_best_) {
      const Rational bound = Rational(current_.weight) + relaxation(depth, residual);
      // Equal bounds stay alive: a cheaper tie may still be found.
      if (bound < Rational(best_.weight)) return;
      if (bound == Rational(best_.weight) && current_.cost > best_.cost) return;
    }
    int most = e_.caps[depth];
    while (most > 0 && e_.costs[depth] * most > residual) --most;
    for (int n = most; n >= 0; --n) {
      current_.counts[depth] = n;
      current_.weight += e_.weights[depth] * n;
      current_.cost += e_.costs[depth] * n;
      descend(depth + 1, placed + n);
      current_.weight -= e_.weights[depth] * n;
      current_.cost -= e_.costs[depth] * n;
    }
    current_.counts[depth] = 0;
  }

  const ExactProblem& e_;
  std::vector<std::size_t> ratio_order_;
  std::vector<std::size_t> cost_order_;
  Candidate current_;
  Candidate best_;
  bool have_best_ = false;
};

}  // namespace

BigInt affordable_units(double budget, double unit_cost) {
  const Rational q = Rational(budget) / Rational(unit_cost);
  return boost::multiprecision::numerator(q) / boost::multiprecision::denominator(q);
}

void ProvisionProblem::validate() const {
  if (tier_costs.empty()) throw Error("provisioning needs at least one tier");
  if (!(budget > 0.0) || !std::isfinite(budget)) {
    throw Error("budget must be positive and finite");
  }
  for (double c : tier_costs) {
    if (!(c > 0.0) || !std::isfinite(c)) {
      throw Error("tier costs must be positive and finite");
    }
  }
  if (instance_cap < 1) throw Error("instance_cap must be >= 1");
  if (min_agents < 0) throw Error("min_agents must be >= 0");
}

int ProvisionSolution::total_instances() const {
  return std::accumulate(counts.begin(), counts.end(), 0);
}

int max_count(const ProvisionProblem& problem, std::size_t tier_index) {
  const BigInt affordable =
      affordable_units(problem.budget, problem.tier_costs.at(tier_index));
  if (affordable >= problem.instance_cap) return problem.instance_cap;
  return static_cast<int>(affordable);
}

DecisionWeights compute_weights(const ProvisionProblem& problem) {
  problem.validate();
  const std::size_t tiers = problem.tier_costs.size();
  std::vector<BigInt> w(tiers);
  w[tiers - 1] = 1;
  BigInt tail = 0;  // sum_{j>i} W_j * floor(B / c_j)
  for (std::size_t i = tiers - 1; i-- > 0;) {
    tail += w[i + 1] * affordable_units(problem.budget, problem.tier_costs[i + 1]);
    w[i] = 1 + tail;
  }
  return {std::move(w)};
}

ProvisionSolution solve(const ProvisionProblem& problem) {
  problem.validate();
  const ExactProblem exact = make_exact(problem);
  BranchAndBound bnb(exact);
  return finish(problem, exact, bnb.run());
}

ProvisionSolution brute_force_solve(const ProvisionProblem& problem) {
  problem.validate();
  if (problem.tier_costs.size() > 6) {
    throw ProblemTooLarge("brute force limited to 6 tiers");
  }
  for (std::size_t i = 0; i < problem.tier_costs.size(); ++i) {
    if (max_count(problem, i) > 20) {
      throw ProblemTooLarge("brute force limited to 20 instances per tier");
    }
  }
  const ExactProblem e = make_exact(problem);
  const std::size_t tiers = e.costs.size();
  Candidate best;
  bool have_best = false;
  std::vector<int> counts(tiers, 0);
  while (true) {
    Candidate c{counts, 0, 0};
    int placed = 0;
    for (std::size_t i = 0; i < tiers; ++i) {
      c.weight += e.weights[i] * counts[i];
      c.cost += e.costs[i] * counts[i];
      placed += counts[i];
    }
    if (placed >= e.min_agents && c.cost <= e.budget &&
        (!have_best || better(c, best))) {
      best = std::move(c);
      have_best = true;
    }
    // odometer increment
    std::size_t pos = 0;
    while (pos < tiers && counts[pos] == e.caps[pos]) counts[pos++] = 0;
    if (pos == tiers) break;
    ++counts[pos];
  }
  return finish(problem, e, have_best ? &best : nullptr);
}

}  // namespace budgetflow
