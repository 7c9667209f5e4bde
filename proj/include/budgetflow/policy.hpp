#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "budgetflow/dataset.hpp"
#include "budgetflow/embedder.hpp"
#include "budgetflow/policy_kernels.hpp"
#include "budgetflow/policy_params.hpp"
#include "budgetflow/reward.hpp"
#include "json.hpp"

namespace budgetflow {

struct PolicyOutput {
  std::vector<double> probabilities;
  std::vector<double> logits;
};

/// Softmax distribution over topologies for one state.
PolicyOutput forward(const PolicyParams& params, const PolicyState& state);

/// Reward-weighted negative log-likelihood minus the entropy bonus, averaged
/// over the batch, with its gradient.
BatchLoss loss(const PolicyParams& params, std::span<const PolicySample> batch,
               double beta);

/// Adam with bias correction.
class AdamOptimizer {
 public:
  AdamOptimizer(std::size_t size, double learning_rate, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8);
  void step(std::span<double> params, std::span<const double> gradient);
  std::uint64_t steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::vector<double> m_, v_;
  std::uint64_t t_ = 0;
};

struct TrainerConfig {
  double learning_rate = 0.0015;
  double entropy_coeff = 0.001;
  std::size_t batch_size = 20000;
  int epochs = 10;
  std::uint64_t seed = 42;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double budget_ref = 0.0;  // 0: use the largest budget in the dataset
  PolicyShape shape;

  void validate() const;
  static TrainerConfig from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
};

/// Trained network plus what is needed to build its inputs.
struct PolicyModel {
  PolicyParams params;
  double budget_ref = 1.0;
  std::uint64_t seed = 0;
  std::vector<std::string> topologies;  // action names, index order

  PolicyState make_state(const TaskEmbedding& embedding, double budget) const;

  nlohmann::json to_json() const;
  static PolicyModel from_json(const nlohmann::json& doc);
  void save(const std::filesystem::path& path) const;
  static PolicyModel load(const std::filesystem::path& path);
};

struct TrainReport {
  std::vector<double> epoch_scores;  // expected reward after each epoch
  std::vector<double> epoch_losses;  // mean training loss over the epoch
  int best_epoch = 0;                // 1-based
  double best_score = 0.0;
};

struct TrainResult {
  PolicyModel model;
  TrainReport report;
};

/// Per-task table of every topology's reward, used for exact evaluation.
std::vector<EvalRow> build_eval_rows(const ExperienceDataset& dataset,
                                     const RewardConfig& reward,
                                     const Embedder& embedder, double budget_ref);

/// Mini-batch Adam on the loss above; after each epoch the policy is scored
/// on the full dataset and the best-scoring parameters are returned.
TrainResult train(const ExperienceDataset& dataset, const TrainerConfig& config,
                  const RewardConfig& reward, const Embedder& embedder);

/// Average over (task, budget) groups of the expected reward under the
/// policy. Every group must hold all topologies.
double evaluate(const PolicyModel& model, const ExperienceDataset& dataset,
                const RewardConfig& reward, const Embedder& embedder);

enum class SelectMode { Greedy, Sample };

/// Greedy picks the most probable allowed action (lowest index on ties);
/// Sample draws from the distribution renormalised over allowed actions.
/// An empty `allowed` means every action is allowed.
int select_action(std::span<const double> probabilities, SelectMode mode,
                  std::uint64_t seed, std::span<const bool> allowed = {});

int select_topology(const PolicyModel& model, const Embedder& embedder,
                    const std::string& task_text, double budget, SelectMode mode,
                    std::uint64_t seed, std::span<const bool> allowed = {});

}  // namespace budgetflow
