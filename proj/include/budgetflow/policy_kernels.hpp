#pragma once

#include <span>
#include <vector>

#include "budgetflow/policy_params.hpp"

namespace budgetflow {

/// Network input: task embedding plus the budget already divided by the
/// model's reference budget.
struct PolicyState {
  std::vector<double> embedding;
  double budget = 0.0;
};

struct PolicySample {
  PolicyState state;
  int action = 0;
  double reward = 0.0;
};

/// One task with the reward every action earned on it.
struct EvalRow {
  PolicyState state;
  std::vector<double> action_rewards;
};

struct BatchLoss {
  double value = 0.0;
  PolicyParams gradient;
};

/// Intermediate values of one forward pass, reused by backprop.
struct Activations {
  std::vector<double> embed_pre, budget_pre;  // pre-ReLU projections
  std::vector<double> joined;                 // ReLU outputs, concatenated
  std::vector<double> core_pre, core_out;
  std::vector<double> logits, log_probs, probs;
};

/// Forward pass; fills `acts`. Logits go through a max-shifted log-softmax.
void forward_pass(const PolicyParams& params, const PolicyState& state,
                  Activations& acts);

/// Shannon entropy (nats) from log-probabilities.
double entropy_from_log_probs(std::span<const double> log_probs);

// Mean loss  -(1/M) sum log pi(a|s) R  -  beta (1/M) sum H(pi(.|s))
// and its exact gradient. The serial version accumulates sample by sample
// and is kept as the reference for the OpenMP version, which reduces a fixed
// number of contiguous chunks in order so its result does not depend on the
// thread count.
BatchLoss batch_loss_serial(const PolicyParams& params,
                            std::span<const PolicySample> batch, double beta);
BatchLoss batch_loss_parallel(const PolicyParams& params,
                              std::span<const PolicySample> batch, double beta);

// Mean over rows of sum_a pi(a|s) R_a.
double expected_reward_serial(const PolicyParams& params,
                              std::span<const EvalRow> rows);
double expected_reward_parallel(const PolicyParams& params,
                                std::span<const EvalRow> rows);

/// Mean policy entropy over states.
double mean_entropy(const PolicyParams& params, std::span<const PolicyState> states);

}  // namespace budgetflow
