#include "budgetflow/policy_kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "budgetflow/error.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace budgetflow {

namespace {

constexpr std::size_t kReductionChunks = 16;

void dense(const DenseView<const double>& layer, std::span<const double> in,
           std::vector<double>& out) {
  out.resize(layer.out);
  for (std::size_t o = 0; o < layer.out; ++o) {
    const double* row = layer.weight.data() + o * layer.in;
    double acc = layer.bias[o];
    for (std::size_t i = 0; i < layer.in; ++i) acc += row[i] * in[i];
    out[o] = acc;
  }
}

void check_action(const PolicyParams& params, int action) {
  if (action < 0 || static_cast<std::size_t>(action) >= params.shape().num_actions) {
    throw Error("action index " + std::to_string(action) + " out of range");
  }
}

// Adds the scaled gradient of one sample's loss into `grad` and returns the
// sample's unscaled loss.
double accumulate_sample(const PolicyParams& params, const PolicySample& sample,
                         double beta, double scale, PolicyParams& grad,
                         Activations& acts, std::vector<double>& d_logits,
                         std::vector<double>& d_core, std::vector<double>& d_joined) {
  forward_pass(params, sample.state, acts);
  const std::size_t k = acts.logits.size();
  const double h = entropy_from_log_probs(acts.log_probs);
  const auto a = static_cast<std::size_t>(sample.action);
  const double loss = -acts.log_probs[a] * sample.reward - beta * h;

  d_logits.resize(k);
  for (std::size_t j = 0; j < k; ++j) {
    const double p = acts.probs[j];
    const double pg = sample.reward * (p - (j == a ? 1.0 : 0.0));
    const double ent = beta * p * (acts.log_probs[j] + h);
    d_logits[j] = scale * (pg + ent);
  }

  // head
  auto head = params.layer(Layer::Head);
  auto g_head = grad.layer(Layer::Head);
  const std::size_t hidden = head.in;
  d_core.assign(hidden, 0.0);
  for (std::size_t j = 0; j < k; ++j) {
    const double dz = d_logits[j];
    if (dz == 0.0) continue;
    const double* w = head.weight.data() + j * hidden;
    double* gw = g_head.weight.data() + j * hidden;
    for (std::size_t i = 0; i < hidden; ++i) {
      gw[i] += dz * acts.core_out[i];
      d_core[i] += w[i] * dz;
    }
    g_head.bias[j] += dz;
  }
  for (std::size_t i = 0; i < hidden; ++i) {
    if (acts.core_pre[i] <= 0.0) d_core[i] = 0.0;
  }

  // core
  auto core = params.layer(Layer::Core);
  auto g_core = grad.layer(Layer::Core);
  d_joined.assign(core.in, 0.0);
  for (std::size_t o = 0; o < core.out; ++o) {
    const double dz = d_core[o];
    if (dz == 0.0) continue;
    const double* w = core.weight.data() + o * core.in;
    double* gw = g_core.weight.data() + o * core.in;
    for (std::size_t i = 0; i < core.in; ++i) {
      gw[i] += dz * acts.joined[i];
      d_joined[i] += w[i] * dz;
    }
    g_core.bias[o] += dz;
  }

  // input projections
  auto g_embed = grad.layer(Layer::EmbedProj);
  const std::size_t feat = g_embed.out;
  const auto& emb = sample.state.embedding;
  for (std::size_t o = 0; o < feat; ++o) {
    if (acts.embed_pre[o] <= 0.0) continue;
    const double dz = d_joined[o];
    if (dz == 0.0) continue;
    double* gw = g_embed.weight.data() + o * g_embed.in;
    for (std::size_t i = 0; i < g_embed.in; ++i) gw[i] += dz * emb[i];
    g_embed.bias[o] += dz;
  }
  auto g_budget = grad.layer(Layer::BudgetProj);
  for (std::size_t o = 0; o < feat; ++o) {
    if (acts.budget_pre[o] <= 0.0) continue;
    const double dz = d_joined[feat + o];
    g_budget.weight[o] += dz * sample.state.budget;
    g_budget.bias[o] += dz;
  }
  return loss;
}

struct Scratch {
  Activations acts;
  std::vector<double> d_logits, d_core, d_joined;
};

double expected_reward_row(const PolicyParams& params, const EvalRow& row,
                           Activations& acts) {
  forward_pass(params, row.state, acts);
  double total = 0.0;
  for (std::size_t j = 0; j < acts.probs.size(); ++j) {
    total += acts.probs[j] * row.action_rewards[j];
  }
  return total;
}

void check_rows(const PolicyParams& params, std::span<const EvalRow> rows) {
  if (rows.empty()) throw Error("no evaluation rows");
  for (const auto& row : rows) {
    if (row.action_rewards.size() != params.shape().num_actions) {
      throw Error("evaluation row has the wrong number of action rewards");
    }
  }
}

}  // namespace

void forward_pass(const PolicyParams& params, const PolicyState& state,
                  Activations& acts) {
  const auto& shape = params.shape();
  if (state.embedding.size() != shape.embed_dim) {
    throw Error("embedding has dimension " + std::to_string(state.embedding.size()) +
                ", network expects " + std::to_string(shape.embed_dim));
  }
  if (!std::isfinite(state.budget)) throw Error("non-finite budget input");
  for (double v : state.embedding) {
    if (!std::isfinite(v)) throw Error("non-finite embedding input");
  }

  dense(params.layer(Layer::EmbedProj), state.embedding, acts.embed_pre);
  const double budget_in[1] = {state.budget};
  dense(params.layer(Layer::BudgetProj), budget_in, acts.budget_pre);

  const std::size_t feat = shape.feature_dim;
  acts.joined.resize(2 * feat);
  for (std::size_t i = 0; i < feat; ++i) {
    acts.joined[i] = std::max(0.0, acts.embed_pre[i]);
    acts.joined[feat + i] = std::max(0.0, acts.budget_pre[i]);
  }
  dense(params.layer(Layer::Core), acts.joined, acts.core_pre);
  acts.core_out.resize(acts.core_pre.size());
  for (std::size_t i = 0; i < acts.core_pre.size(); ++i) {
    acts.core_out[i] = std::max(0.0, acts.core_pre[i]);
  }
  dense(params.layer(Layer::Head), acts.core_out, acts.logits);

  for (double z : acts.logits) {
    if (!std::isfinite(z)) throw Error("non-finite policy parameters");
  }
  const double top = *std::max_element(acts.logits.begin(), acts.logits.end());
  double sum = 0.0;
  for (double z : acts.logits) sum += std::exp(z - top);
  const double log_norm = top + std::log(sum);
  const std::size_t k = acts.logits.size();
  acts.log_probs.resize(k);
  acts.probs.resize(k);
  for (std::size_t j = 0; j < k; ++j) {
    acts.log_probs[j] = acts.logits[j] - log_norm;
    acts.probs[j] = std::exp(acts.log_probs[j]);
  }
}

double entropy_from_log_probs(std::span<const double> log_probs) {
  double h = 0.0;
  for (double lp : log_probs) h -= std::exp(lp) * lp;
  return h;
}

BatchLoss batch_loss_serial(const PolicyParams& params,
                            std::span<const PolicySample> batch, double beta) {
  if (batch.empty()) throw Error("empty batch");
  for (const auto& s : batch) check_action(params, s.action);
  BatchLoss out{0.0, PolicyParams(params.shape())};
  const double scale = 1.0 / static_cast<double>(batch.size());
  Scratch s;
  double total = 0.0;
  for (const auto& sample : batch) {
    total += accumulate_sample(params, sample, beta, scale, out.gradient, s.acts,
                               s.d_logits, s.d_core, s.d_joined);
  }
  out.value = total * scale;
  return out;
}

BatchLoss batch_loss_parallel(const PolicyParams& params,
                              std::span<const PolicySample> batch, double beta) {
  if (batch.empty()) throw Error("empty batch");
  for (const auto& s : batch) check_action(params, s.action);
  const std::size_t n = batch.size();
  const std::size_t chunks = std::min(kReductionChunks, n);
  const double scale = 1.0 / static_cast<double>(n);

  std::vector<PolicyParams> partial(chunks, PolicyParams(params.shape()));
  std::vector<double> partial_loss(chunks, 0.0);

#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t c = 0; c < chunks; ++c) {
    Scratch s;
    const std::size_t begin = c * n / chunks;
    const std::size_t end = (c + 1) * n / chunks;
    double total = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
      total += accumulate_sample(params, batch[i], beta, scale, partial[c], s.acts,
                                 s.d_logits, s.d_core, s.d_joined);
    }
    partial_loss[c] = total;
  }

  BatchLoss out{0.0, std::move(partial[0])};
  double total = partial_loss[0];
  auto acc = out.gradient.values();
  for (std::size_t c = 1; c < chunks; ++c) {
    const auto part = partial[c].values();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += part[i];
    total += partial_loss[c];
  }
  out.value = total * scale;
  return out;
}

double expected_reward_serial(const PolicyParams& params,
                              std::span<const EvalRow> rows) {
  check_rows(params, rows);
  Activations acts;
  double total = 0.0;
  for (const auto& row : rows) total += expected_reward_row(params, row, acts);
  return total / static_cast<double>(rows.size());
}

double expected_reward_parallel(const PolicyParams& params,
                                std::span<const EvalRow> rows) {
  check_rows(params, rows);
  const std::size_t n = rows.size();
  std::vector<double> per_row(n, 0.0);
#pragma omp parallel
  {
    Activations acts;
#pragma omp for schedule(static)
    for (std::size_t i = 0; i < n; ++i) {
      per_row[i] = expected_reward_row(params, rows[i], acts);
    }
  }
  // sequential sum keeps the result identical to the serial kernel
  double total = 0.0;
  for (double v : per_row) total += v;
  return total / static_cast<double>(n);
}

double mean_entropy(const PolicyParams& params, std::span<const PolicyState> states) {
  if (states.empty()) return 0.0;
  Activations acts;
  double total = 0.0;
  for (const auto& s : states) {
    forward_pass(params, s, acts);
    total += entropy_from_log_probs(acts.log_probs);
  }
  return total / static_cast<double>(states.size());
}

}  // namespace budgetflow
