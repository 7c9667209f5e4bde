#pragma once

#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "budgetflow/error.hpp"

namespace budgetflow {

using BigInt = boost::multiprecision::cpp_int;

/// Tier-ordered provisioning instance: pick n_i instances of each tier so the
/// weighted count is maximal within budget.
struct ProvisionProblem {
  double budget = 0.0;
  std::vector<double> tier_costs;  // c_1..c_L, tier 1 first
  int instance_cap = 5;            // upper bound on every n_i
  int min_agents = 2;

  void validate() const;
};

struct DecisionWeights {
  std::vector<BigInt> weights;  // W_1..W_L
};

struct ProvisionSolution {
  bool feasible = false;
  std::vector<int> counts;  // n_1..n_L
  BigInt total_weight = 0;
  double total_cost = 0.0;
  std::string reason;  // set when infeasible

  int total_instances() const;
};

class ProblemTooLarge : public Error {
 public:
  using Error::Error;
};

/// W_L = 1 and W_i = 1 + sum_{j>i} W_j * floor(B / c_j), exactly.
DecisionWeights compute_weights(const ProvisionProblem& problem);

/// Exact branch-and-bound. Ties on weight go to the cheaper vector, then the
/// lexicographically smaller one.
ProvisionSolution solve(const ProvisionProblem& problem);

/// Exhaustive enumeration with the same optimum contract as solve(). Refuses
/// problems with more than 6 tiers or more than 20 candidate counts per tier.
ProvisionSolution brute_force_solve(const ProvisionProblem& problem);

/// floor(budget / unit_cost) evaluated exactly on the binary values.
BigInt affordable_units(double budget, double unit_cost);

/// Largest n_i worth considering: min(cap, floor(B / c_i)).
int max_count(const ProvisionProblem& problem, std::size_t tier_index);

}  // namespace budgetflow
