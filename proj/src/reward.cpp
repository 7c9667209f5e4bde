#include "budgetflow/reward.hpp"

#include <cmath>

#include "budgetflow/error.hpp"

namespace budgetflow {

void RewardConfig::validate() const {
  for (double v : {w_perf, w_cost, c_succ, c_fail, c_overflow, bonus_slope}) {
    if (!std::isfinite(v)) throw ConfigError("reward constants must be finite");
  }
  if (w_perf < 0 || w_cost < 0 || bonus_slope < 0) {
    throw ConfigError("reward weights and bonus slope must be >= 0");
  }
  if (c_succ <= 0 || c_fail <= 0 || c_overflow <= 0) {
    throw ConfigError("reward constants c_succ, c_fail, c_overflow must be > 0");
  }
}

RewardConfig RewardConfig::from_json(const nlohmann::json& doc) {
  RewardConfig c;
  c.w_perf = doc.value("w_perf", c.w_perf);
  c.w_cost = doc.value("w_cost", c.w_cost);
  c.c_succ = doc.value("c_succ", c.c_succ);
  c.c_fail = doc.value("c_fail", c.c_fail);
  c.c_overflow = doc.value("c_overflow", c.c_overflow);
  c.bonus_slope = doc.value("bonus_slope", c.bonus_slope);
  c.validate();
  return c;
}

nlohmann::json RewardConfig::to_json() const {
  return {{"w_perf", w_perf},     {"w_cost", w_cost},
          {"c_succ", c_succ},     {"c_fail", c_fail},
          {"c_overflow", c_overflow}, {"bonus_slope", bonus_slope}};
}

double compute_reward(const Outcome& outcome, const RewardConfig& config) {
  if (!(outcome.budget > 0.0)) throw Error("budget must be positive");
  if (!(outcome.actual_cost >= 0.0) || !std::isfinite(outcome.actual_cost)) {
    throw Error("actual cost must be finite and non-negative");
  }
  const double perf = outcome.success ? config.c_succ : -config.c_fail;
  double cost = 0.0;
  if (outcome.actual_cost > outcome.budget) {
    cost = -config.c_overflow;
  } else if (outcome.success) {
    cost = config.bonus_slope * (1.0 - outcome.actual_cost / outcome.budget);
  }
  return config.w_perf * perf + config.w_cost * cost;
}

}  // namespace budgetflow
