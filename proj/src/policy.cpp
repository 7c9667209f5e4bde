#include "budgetflow/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include "budgetflow/random.hpp"
#include "budgetflow/topology_kind.hpp"

namespace budgetflow {

PolicyOutput forward(const PolicyParams& params, const PolicyState& state) {
  Activations acts;
  forward_pass(params, state, acts);
  return {std::move(acts.probs), std::move(acts.logits)};
}

BatchLoss loss(const PolicyParams& params, std::span<const PolicySample> batch,
               double beta) {
  return batch_loss_parallel(params, batch, beta);
}

AdamOptimizer::AdamOptimizer(std::size_t size, double learning_rate, double beta1,
                             double beta2, double eps)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps),
      m_(size, 0.0), v_(size, 0.0) {}

void AdamOptimizer::step(std::span<double> params, std::span<const double> gradient) {
  if (params.size() != m_.size() || gradient.size() != m_.size()) {
    throw Error("optimizer size mismatch");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = gradient[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g * g;
    const double m_hat = m_[i] / c1;
    const double v_hat = v_[i] / c2;
    params[i] -= lr_ * m_hat / (std::sqrt(v_hat) + eps_);
  }
}

void TrainerConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (!(entropy_coeff >= 0.0)) throw ConfigError("entropy_coeff must be >= 0");
  if (batch_size == 0) throw ConfigError("batch_size must be > 0");
  if (epochs <= 0) throw ConfigError("epochs must be > 0");
  if (budget_ref < 0.0) throw ConfigError("budget_ref must be >= 0");
  if (shape.num_actions != kNumTopologies) {
    throw ConfigError("policy must have one output per topology");
  }
}

TrainerConfig TrainerConfig::from_json(const nlohmann::json& doc) {
  TrainerConfig c;
  c.learning_rate = doc.value("learning_rate", c.learning_rate);
  c.entropy_coeff = doc.value("entropy_coeff", c.entropy_coeff);
  c.batch_size = doc.value("batch_size", c.batch_size);
  c.epochs = doc.value("epochs", c.epochs);
  c.seed = doc.value("seed", c.seed);
  c.adam_beta1 = doc.value("adam_beta1", c.adam_beta1);
  c.adam_beta2 = doc.value("adam_beta2", c.adam_beta2);
  c.adam_eps = doc.value("adam_eps", c.adam_eps);
  c.budget_ref = doc.value("budget_ref", c.budget_ref);
  c.shape.embed_dim = doc.value("embed_dim", c.shape.embed_dim);
  c.validate();
  return c;
}

nlohmann::json TrainerConfig::to_json() const {
  return {{"learning_rate", learning_rate}, {"entropy_coeff", entropy_coeff},
          {"batch_size", batch_size},       {"epochs", epochs},
          {"seed", seed},                   {"adam_beta1", adam_beta1},
          {"adam_beta2", adam_beta2},       {"adam_eps", adam_eps},
          {"budget_ref", budget_ref},       {"embed_dim", shape.embed_dim}};
}

PolicyState PolicyModel::make_state(const TaskEmbedding& embedding, double budget) const {
  if (budget < 0.0) throw Error("budget must be >= 0");
  return {embedding.values, budget / budget_ref};
}

nlohmann::json PolicyModel::to_json() const {
  const auto& shape = params.shape();
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t l = 0; l < kNumLayers; ++l) {
    const auto layer = static_cast<Layer>(l);
    const auto view = params.layer(layer);
    layers.push_back({{"name", layer_name(layer)},
                      {"shape", {view.out, view.in}},
                      {"weight", std::vector<double>(view.weight.begin(), view.weight.end())},
                      {"bias", std::vector<double>(view.bias.begin(), view.bias.end())}});
  }
  return {{"format", "budgetflow-policy"},
          {"version", 1},
          {"config",
           {{"seed", seed},
            {"embed_dim", shape.embed_dim},
            {"feature_dim", shape.feature_dim},
            {"hidden_dim", shape.hidden_dim},
            {"num_actions", shape.num_actions},
            {"budget_ref", budget_ref},
            {"topologies", topologies}}},
          {"layers", layers}};
}

PolicyModel PolicyModel::from_json(const nlohmann::json& doc) {
  try {
    if (doc.value("format", std::string{}) != "budgetflow-policy") {
      throw ConfigError("not a policy weights file");
    }
    const auto& cfg = doc.at("config");
    PolicyShape shape;
    shape.embed_dim = cfg.at("embed_dim").get<std::size_t>();
    shape.feature_dim = cfg.at("feature_dim").get<std::size_t>();
    shape.hidden_dim = cfg.at("hidden_dim").get<std::size_t>();
    shape.num_actions = cfg.at("num_actions").get<std::size_t>();
    PolicyModel model{PolicyParams(shape), cfg.at("budget_ref").get<double>(),
                      cfg.at("seed").get<std::uint64_t>(),
                      cfg.at("topologies").get<std::vector<std::string>>()};
    if (!(model.budget_ref > 0.0)) throw ConfigError("budget_ref must be > 0");
    if (model.topologies.size() != shape.num_actions) {
      throw ConfigError("topology list does not match the output layer");
    }
    const auto& layers = doc.at("layers");
    if (layers.size() != kNumLayers) throw ConfigError("expected 4 layers");
    for (std::size_t l = 0; l < kNumLayers; ++l) {
      const auto layer = static_cast<Layer>(l);
      const auto& item = layers[l];
      auto view = model.params.layer(layer);
      if (item.at("name").get<std::string>() != layer_name(layer) ||
          item.at("shape") != nlohmann::json({view.out, view.in})) {
        throw ConfigError("layer " + std::string(layer_name(layer)) +
                          " has an unexpected name or shape");
      }
      const auto w = item.at("weight").get<std::vector<double>>();
      const auto b = item.at("bias").get<std::vector<double>>();
      if (w.size() != view.weight.size() || b.size() != view.bias.size()) {
        throw ConfigError("layer " + std::string(layer_name(layer)) +
                          " has the wrong number of values");
      }
      std::copy(w.begin(), w.end(), view.weight.begin());
      std::copy(b.begin(), b.end(), view.bias.begin());
    }
    if (!model.params.all_finite()) throw ConfigError("non-finite policy weights");
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("policy weights: ") + e.what());
  }
}

void PolicyModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << to_json().dump() << '\n';
}

PolicyModel PolicyModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open policy weights " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("policy weights " + path.string() + ": " + e.what());
  }
  return from_json(doc);
}

namespace {

class EmbeddingCache {
 public:
  explicit EmbeddingCache(const Embedder& embedder) : embedder_(embedder) {}
  const TaskEmbedding& get(const std::string& text) {
    auto it = cache_.find(text);
    if (it == cache_.end()) it = cache_.emplace(text, embedder_.embed(text)).first;
    return it->second;
  }

 private:
  const Embedder& embedder_;
  std::map<std::string, TaskEmbedding> cache_;
};

double dataset_budget_ref(const ExperienceDataset& dataset, double configured) {
  if (configured > 0.0) return configured;
  double top = 0.0;
  for (const auto& e : dataset.experiences()) top = std::max(top, e.budget);
  return top > 0.0 ? top : 1.0;
}

double reward_of(const Experience& e, const RewardConfig& reward) {
  return compute_reward({e.success, e.actual_cost, e.budget}, reward);
}

}  // namespace

std::vector<EvalRow> build_eval_rows(const ExperienceDataset& dataset,
                                     const RewardConfig& reward,
                                     const Embedder& embedder, double budget_ref) {
  EmbeddingCache cache(embedder);
  std::vector<EvalRow> rows;
  for (const auto& [key, indices] : dataset.groups()) {
    std::vector<double> rewards(kNumTopologies, 0.0);
    std::vector<bool> seen(kNumTopologies, false);
    for (std::size_t i : indices) {
      const auto& e = dataset.experiences()[i];
      rewards[e.topology] = reward_of(e, reward);
      seen[e.topology] = true;
    }
    std::string missing;
    for (std::size_t t = 0; t < kNumTopologies; ++t) {
      if (!seen[t]) {
        if (!missing.empty()) missing += ", ";
        missing += topology_name(static_cast<Topology>(t));
      }
    }
    if (!missing.empty()) {
      throw DatasetError("task " + key.first + " at budget " + std::to_string(key.second) +
                         " is missing topologies: " + missing);
    }
    const auto& text = dataset.experiences()[indices.front()].task_text;
    rows.push_back({{cache.get(text).values, key.second / budget_ref}, std::move(rewards)});
  }
  return rows;
}

double evaluate(const PolicyModel& model, const ExperienceDataset& dataset,
                const RewardConfig& reward, const Embedder& embedder) {
  const auto rows = build_eval_rows(dataset, reward, embedder, model.budget_ref);
  return expected_reward_parallel(model.params, rows);
}

TrainResult train(const ExperienceDataset& dataset, const TrainerConfig& config,
                  const RewardConfig& reward, const Embedder& embedder) {
  config.validate();
  if (dataset.empty()) throw Error("cannot train on an empty dataset");
  if (embedder.dim() != config.shape.embed_dim) {
    throw ConfigError("embedder dimension does not match the policy input");
  }

  const double budget_ref = dataset_budget_ref(dataset, config.budget_ref);
  EmbeddingCache cache(embedder);
  std::vector<PolicySample> samples;
  samples.reserve(dataset.size());
  for (const auto& e : dataset.experiences()) {
    samples.push_back({{cache.get(e.task_text).values, e.budget / budget_ref},
                       e.topology,
                       reward_of(e, reward)});
  }
  const auto rows = build_eval_rows(dataset, reward, embedder, budget_ref);

  std::vector<std::string> names;
  for (auto t : kAllTopologies) names.emplace_back(topology_name(t));

  PolicyModel current{init_params(config.shape, config.seed), budget_ref, config.seed, names};
  PolicyModel best = current;
  TrainReport report;
  report.best_score = -std::numeric_limits<double>::infinity();

  AdamOptimizer adam(current.params.size(), config.learning_rate, config.adam_beta1,
                     config.adam_beta2, config.adam_eps);
  Rng shuffle_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  const std::size_t batch = std::min(config.batch_size, samples.size());
  std::vector<PolicySample> minibatch;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    if (batch < samples.size()) shuffle(order, shuffle_rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      BatchLoss result;
      if (batch == samples.size()) {
        result = loss(current.params, samples, config.entropy_coeff);
      } else {
        minibatch.clear();
        for (std::size_t i = start; i < end; ++i) minibatch.push_back(samples[order[i]]);
        result = loss(current.params, minibatch, config.entropy_coeff);
      }
      epoch_loss += result.value * static_cast<double>(end - start);
      adam.step(current.params.values(), result.gradient.values());
    }
    report.epoch_losses.push_back(epoch_loss / static_cast<double>(samples.size()));

    const double score = expected_reward_parallel(current.params, rows);
    report.epoch_scores.push_back(score);
    if (score > report.best_score) {
      report.best_score = score;
      report.best_epoch = epoch;
      best = current;
    }
  }
  return {std::move(best), std::move(report)};
}

int select_action(std::span<const double> probabilities, SelectMode mode,
                  std::uint64_t seed, std::span<const bool> allowed) {
  const std::size_t k = probabilities.size();
  if (k == 0) throw Error("empty distribution");
  if (!allowed.empty() && allowed.size() != k) throw Error("mask size mismatch");
  auto ok = [&](std::size_t i) { return allowed.empty() || allowed[i]; };

  if (mode == SelectMode::Greedy) {
    int pick = -1;
    for (std::size_t i = 0; i < k; ++i) {
      if (ok(i) && (pick < 0 || probabilities[i] > probabilities[pick])) {
        pick = static_cast<int>(i);
      }
    }
    if (pick < 0) throw Error("no allowed action");
    return pick;
  }

  double mass = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    if (ok(i)) mass += probabilities[i];
  }
  if (!(mass > 0.0)) throw Error("no allowed action");
  Rng rng(seed);
  const double u = uniform01(rng) * mass;
  double acc = 0.0;
  int last = -1;
  for (std::size_t i = 0; i < k; ++i) {
    if (!ok(i)) continue;
    last = static_cast<int>(i);
    acc += probabilities[i];
    if (u < acc) return last;
  }
  return last;
}

int select_topology(const PolicyModel& model, const Embedder& embedder,
                    const std::string& task_text, double budget, SelectMode mode,
                    std::uint64_t seed, std::span<const bool> allowed) {
  const auto state = model.make_state(embedder.embed(task_text), budget);
  const auto out = forward(model.params, state);
  return select_action(out.probabilities, mode, seed, allowed);
}

}  // namespace budgetflow
