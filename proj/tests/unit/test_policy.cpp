#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "budgetflow/policy.hpp"
#include "budgetflow/topology_kind.hpp"
#include "../support/gradcheck.hpp"
#include "../support/policy_oracle.hpp"

namespace budgetflow {
namespace {

PolicyState text_state(const std::string& text, double budget) {
  return {HashingEmbedder().embed(text).values, budget};
}

TEST(Forward, ZeroParamsGiveUniform) {
  PolicyParams zero;
  const auto out = forward(zero, text_state("anything", 0.5));
  for (double p : out.probabilities) EXPECT_DOUBLE_EQ(p, 0.25);
  EXPECT_EQ(select_action(out.probabilities, SelectMode::Greedy, 0), 0);
}

TEST(Forward, MatchesOracle) {
  const auto params = init_params({}, 3);
  std::mt19937_64 rng(8);
  for (const auto& s : testing::random_batch(rng, 10, 384)) {
    const auto out = forward(params, s.state);
    const auto lp = testing::oracle_log_probs(params, s.state);
    for (std::size_t a = 0; a < 4; ++a) EXPECT_NEAR(out.probabilities[a], std::exp(lp[a]), 1e-12);
  }
}

TEST(Forward, SoftmaxIsShiftInvariant) {
  auto params = init_params({}, 11);
  const auto state = text_state("shift me", 0.3);
  const auto before = forward(params, state);
  for (double& b : params.layer(Layer::Head).bias) b += 1000.0;
  const auto after = forward(params, state);
  for (std::size_t a = 0; a < 4; ++a) {
    EXPECT_NEAR(before.probabilities[a], after.probabilities[a], 1e-12);
  }
}

TEST(Forward, RejectsBadInput) {
  PolicyParams params;
  EXPECT_THROW(forward(params, {std::vector<double>(10, 0.0), 1.0}), Error);
  EXPECT_THROW(forward(params, {std::vector<double>(384, 0.0), std::nan("")}), Error);
}

TEST(InitParams, SeededAndBounded) {
  const auto a = init_params({}, 42);
  EXPECT_EQ(a, init_params({}, 42));
  EXPECT_NE(a, init_params({}, 43));
  const auto head = a.layer(Layer::Head);
  const double limit = std::sqrt(6.0 / (128.0 + 4.0));
  for (double w : head.weight) EXPECT_LE(std::abs(w), limit);
  for (double b : head.bias) EXPECT_EQ(b, 0.0);
}

TEST(Loss, ZeroRewardZeroBetaIsZero) {
  std::mt19937_64 rng(1);
  auto batch = testing::random_batch(rng, 5, 384);
  for (auto& s : batch) s.reward = 0.0;
  const auto r = loss(init_params({}, 1), batch, 0.0);
  EXPECT_EQ(r.value, 0.0);
  for (double g : r.gradient.values()) EXPECT_EQ(g, 0.0);
}

TEST(Loss, UniformPolicyUnitReward) {
  PolicyParams zero;
  std::vector<PolicySample> batch{{text_state("a", 1.0), 2, 1.0}};
  EXPECT_NEAR(loss(zero, batch, 0.0).value, std::log(4.0), 1e-12);
  EXPECT_NEAR(loss(zero, batch, 1.0).value, 0.0, 1e-12);
}

TEST(Loss, MatchesOracleValue) {
  std::mt19937_64 rng(2);
  const auto batch = testing::random_batch(rng, 12, 384);
  const auto params = init_params({}, 5);
  EXPECT_NEAR(loss(params, batch, 0.3).value, testing::oracle_loss(params, batch, 0.3), 1e-12);
}

TEST(Loss, RejectsEmptyBatchAndBadAction) {
  PolicyParams params;
  EXPECT_THROW(loss(params, {}, 0.0), Error);
  std::vector<PolicySample> batch{{text_state("a", 1.0), 4, 1.0}};
  EXPECT_THROW(loss(params, batch, 0.0), Error);
}

struct GradCase {
  const char* name;
  double beta;
  double reward_scale;
};

void PrintTo(const GradCase& c, std::ostream* os) { *os << c.name; }

class GradientTest : public ::testing::TestWithParam<GradCase> {};

TEST_P(GradientTest, MatchesCentralDifferences) {
  const auto c = GetParam();
  std::mt19937_64 rng(77);
  const auto batch = testing::random_batch(rng, 6, 384, c.reward_scale);
  const auto params = init_params({}, 9);
  const auto analytic = loss(params, batch, c.beta).gradient;
  const auto check = testing::check_gradient(params, batch, c.beta, analytic, 20, 123);
  EXPECT_EQ(check.checked, 80);
  EXPECT_EQ(check.failed, 0) << check.detail << "worst " << check.worst;
}

INSTANTIATE_TEST_SUITE_P(Terms, GradientTest,
                         ::testing::Values(GradCase{"reward", 0.0, 1.0},
                                           GradCase{"entropy", 1.0, 0.0},
                                           GradCase{"both", 0.5, 1.0}),
                         [](const auto& info) { return std::string(info.param.name); });

TEST(Adam, FirstStepMovesByLearningRate) {
  std::vector<double> p{1.0, -2.0, 0.5};
  const std::vector<double> g{0.3, -4.0, 1e-3};
  AdamOptimizer adam(3, 0.01);
  adam.step(p, g);
  EXPECT_NEAR(p[0], 1.0 - 0.01, 1e-7);
  EXPECT_NEAR(p[1], -2.0 + 0.01, 1e-7);
  EXPECT_NEAR(p[2], 0.5 - 0.01, 1e-6);
  EXPECT_EQ(adam.steps(), 1u);
}

TEST(Adam, ZeroGradientLeavesParams) {
  std::vector<double> p{1.0, 2.0};
  AdamOptimizer adam(2, 0.1);
  adam.step(p, std::vector<double>{0.0, 0.0});
  EXPECT_EQ(p, (std::vector<double>{1.0, 2.0}));
}

TrainerConfig fast_config(std::uint64_t seed, int epochs = 30, double lr = 0.01,
                          double beta = 0.001) {
  TrainerConfig c;
  c.seed = seed;
  c.epochs = epochs;
  c.learning_rate = lr;
  c.entropy_coeff = beta;
  return c;
}

double mean_prob(const PolicyModel& model, const ExperienceDataset& ds, int action) {
  HashingEmbedder emb;
  double total = 0.0;
  const auto groups = ds.groups();
  for (const auto& [key, idx] : groups) {
    const auto& e = ds.experiences()[idx.front()];
    total += forward(model.params, model.make_state(emb.embed(e.task_text), e.budget))
                 .probabilities[static_cast<std::size_t>(action)];
  }
  return total / static_cast<double>(groups.size());
}

TEST(Train, IdenticalTasksConvergeToDominantAction) {
  ExperienceDataset ds;
  for (int t = 0; t < 20; ++t) {
    for (int k = 0; k < 4; ++k) {
      ds.add({"t" + std::to_string(t), "the same question", 500.0, k, k == 2, 500.0, ""});
    }
  }
  const auto result = train(ds, fast_config(42), {}, HashingEmbedder());
  const auto out = forward(result.model.params,
                           result.model.make_state(HashingEmbedder().embed("the same question"), 500.0));
  EXPECT_EQ(select_action(out.probabilities, SelectMode::Greedy, 0), 2);
  EXPECT_GT(out.probabilities[2], 0.9);
}

TEST(Train, LargeEntropyKeepsPolicyNearUniform) {
  const auto ds = testing::dominant_dataset(50, 1);
  const auto result = train(ds, fast_config(7, 30, 0.01, 10.0), {}, HashingEmbedder());
  const auto rows = build_eval_rows(ds, {}, HashingEmbedder(), result.model.budget_ref);
  std::vector<PolicyState> states;
  for (const auto& r : rows) states.push_back(r.state);
  EXPECT_GT(mean_entropy(result.model.params, states), 1.2);
}

TEST(Train, SameSeedSameWeights) {
  const auto ds = testing::dominant_dataset(10, 3);
  TrainerConfig c = fast_config(5, 3);
  c.batch_size = 7;
  const auto a = train(ds, c, {}, HashingEmbedder());
  const auto b = train(ds, c, {}, HashingEmbedder());
  EXPECT_EQ(a.model.params, b.model.params);
  EXPECT_EQ(a.report.epoch_scores, b.report.epoch_scores);
  c.seed = 6;
  EXPECT_NE(train(ds, c, {}, HashingEmbedder()).model.params, a.model.params);
}

TEST(Train, DominantProbabilityRisesEpochByEpoch) {
  const auto ds = testing::dominant_dataset(20, 0);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::vector<double> trajectory;
    for (int epochs = 1; epochs <= 8; ++epochs) {
      TrainerConfig c = fast_config(seed, epochs, 0.005, 0.0);
      auto r = train(ds, c, {}, HashingEmbedder());
      ASSERT_EQ(static_cast<int>(r.report.epoch_scores.size()), epochs);
      if (r.report.best_epoch != epochs) {
        trajectory.push_back(-1.0);
        continue;
      }
      trajectory.push_back(mean_prob(r.model, ds, 0));
    }
    int drops = 0;
    for (std::size_t i = 1; i < trajectory.size(); ++i) drops += trajectory[i] <= trajectory[i - 1];
    EXPECT_LE(drops, 1) << "seed " << seed;
  }
}

TEST(Train, BestScoreIsMaxOverEpochs) {
  const auto ds = testing::dominant_dataset(15, 2);
  TrainerConfig c = fast_config(3, 12, 0.05);
  c.batch_size = 9;
  const auto r = train(ds, c, {}, HashingEmbedder());
  const auto& s = r.report.epoch_scores;
  const auto best = std::max_element(s.begin(), s.end());
  EXPECT_EQ(r.report.best_score, *best);
  EXPECT_EQ(r.report.best_epoch, static_cast<int>(best - s.begin()) + 1);
  EXPECT_DOUBLE_EQ(evaluate(r.model, ds, {}, HashingEmbedder()), r.report.best_score);
}

TEST(Train, RejectsZeroEpochs) {
  const auto ds = testing::dominant_dataset(2, 0);
  EXPECT_THROW(train(ds, fast_config(1, 0), {}, HashingEmbedder()), ConfigError);
}

PolicyModel zero_model() {
  PolicyModel m;
  m.budget_ref = 1000.0;
  for (auto t : kAllTopologies) m.topologies.emplace_back(topology_name(t));
  return m;
}

TEST(Evaluate, UniformPolicyAveragesRewards) {
  ExperienceDataset ds;
  // rewards +1, -1, -1, -1 under custom constants (no cost term)
  RewardConfig r;
  r.w_cost = 0.0;
  for (int k = 0; k < 4; ++k) ds.add({"t", "text", 100.0, k, k == 0, 10.0, ""});
  EXPECT_DOUBLE_EQ(evaluate(zero_model(), ds, r, HashingEmbedder()), -0.5);
}

TEST(Evaluate, MissingTopologyIsNamed) {
  ExperienceDataset ds;
  for (int k : {0, 1, 3}) ds.add({"t", "text", 100.0, k, true, 10.0, ""});
  try {
    evaluate(zero_model(), ds, {}, HashingEmbedder());
    FAIL();
  } catch (const DatasetError& e) {
    EXPECT_NE(std::string(e.what()).find("feedback"), std::string::npos);
  }
}

TEST(Evaluate, IndependentOfRowOrder) {
  auto model = zero_model();
  model.params = init_params({}, 4);
  const auto ds = testing::dominant_dataset(12, 1, {500.0, 1000.0});
  ExperienceDataset reversed;
  for (auto it = ds.experiences().rbegin(); it != ds.experiences().rend(); ++it) reversed.add(*it);
  EXPECT_NEAR(evaluate(model, ds, {}, HashingEmbedder()),
              evaluate(model, reversed, {}, HashingEmbedder()), 1e-12);
}

TEST(SelectAction, GreedyAndMasks) {
  const std::vector<double> p{0.1, 0.7, 0.1, 0.1};
  EXPECT_EQ(select_action(p, SelectMode::Greedy, 0), 1);
  const bool mask[] = {true, false, true, true};
  EXPECT_EQ(select_action(p, SelectMode::Greedy, 0, mask), 0);
  const bool none[] = {false, false, false, false};
  EXPECT_THROW(select_action(p, SelectMode::Greedy, 0, none), Error);
}

TEST(SelectAction, SamplingIsSeededAndFollowsMass) {
  const std::vector<double> p{0.1, 0.7, 0.1, 0.1};
  int hits = 0;
  for (std::uint64_t s = 0; s < 2000; ++s) {
    const int a = select_action(p, SelectMode::Sample, s);
    EXPECT_EQ(a, select_action(p, SelectMode::Sample, s));
    hits += a == 1;
  }
  EXPECT_NEAR(hits / 2000.0, 0.7, 0.05);
  const bool mask[] = {false, false, true, false};
  EXPECT_EQ(select_action(p, SelectMode::Sample, 9, mask), 2);
}

TEST(PolicyModel, SaveLoadRoundTrip) {
  auto model = zero_model();
  model.params = init_params({}, 77);
  model.seed = 77;
  const auto path = std::filesystem::temp_directory_path() / "budgetflow_policy_rt.json";
  model.save(path);
  const auto back = PolicyModel::load(path);
  EXPECT_EQ(back.params, model.params);
  EXPECT_EQ(back.budget_ref, model.budget_ref);
  EXPECT_EQ(back.topologies, model.topologies);
  std::filesystem::remove(path);
}

TEST(PolicyModel, LoadRejectsWrongShape) {
  auto doc = zero_model().to_json();
  doc["layers"][0]["weight"].erase(0);
  EXPECT_THROW(PolicyModel::from_json(doc), Error);
}

TEST(TrainerConfig, JsonRoundTripAndValidation) {
  TrainerConfig c;
  c.learning_rate = 0.0003;
  c.batch_size = 64;
  const auto back = TrainerConfig::from_json(c.to_json());
  EXPECT_EQ(back.learning_rate, 0.0003);
  EXPECT_EQ(back.batch_size, 64u);
  EXPECT_THROW(TrainerConfig::from_json({{"epochs", 0}}), ConfigError);
  EXPECT_THROW(TrainerConfig::from_json({{"learning_rate", -1.0}}), ConfigError);
}

}  // namespace
}  // namespace budgetflow
