#pragma once

#include "json.hpp"

namespace budgetflow {

/// Weights and constants of the trajectory reward. The savings bonus is
/// linear: g(x) = bonus_slope * x.
struct RewardConfig {
  double w_perf = 1.0;
  double w_cost = 1.0;
  double c_succ = 1.0;
  double c_fail = 1.0;
  double c_overflow = 2.0;
  double bonus_slope = 0.5;

  void validate() const;
  static RewardConfig from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
};

struct Outcome {
  bool success = false;
  double actual_cost = 0.0;
  double budget = 0.0;
};

/// w_perf * R_perf + w_cost * R_cost. Overflow replaces the savings bonus;
/// failed runs never earn the bonus.
double compute_reward(const Outcome& outcome, const RewardConfig& config = {});

}  // namespace budgetflow
