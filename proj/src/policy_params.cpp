#include "budgetflow/policy_params.hpp"

#include <cmath>

#include "budgetflow/random.hpp"

namespace budgetflow {

std::string_view layer_name(Layer layer) {
  switch (layer) {
    case Layer::EmbedProj: return "embed_proj";
    case Layer::BudgetProj: return "budget_proj";
    case Layer::Core: return "core";
    case Layer::Head: return "head";
  }
  return "?";
}

PolicyParams::PolicyParams(const PolicyShape& shape) : shape_(shape) {
  std::size_t total = 0;
  for (std::size_t l = 0; l < kNumLayers; ++l) {
    offsets_[l] = total;
    const auto d = dims(static_cast<Layer>(l));
    total += d.out * d.in + d.out;
  }
  values_.assign(total, 0.0);
}

LayerDims PolicyParams::dims(Layer layer) const {
  switch (layer) {
    case Layer::EmbedProj: return {shape_.feature_dim, shape_.embed_dim};
    case Layer::BudgetProj: return {shape_.feature_dim, 1};
    case Layer::Core: return {shape_.hidden_dim, 2 * shape_.feature_dim};
    case Layer::Head: return {shape_.num_actions, shape_.hidden_dim};
  }
  return {};
}

std::size_t PolicyParams::layer_size(Layer layer) const {
  const auto d = dims(layer);
  return d.out * d.in + d.out;
}

DenseView<double> PolicyParams::layer(Layer layer) {
  const auto d = dims(layer);
  std::span<double> all(values_);
  auto block = all.subspan(offset(layer), d.out * d.in + d.out);
  return {d.out, d.in, block.first(d.out * d.in), block.last(d.out)};
}

DenseView<const double> PolicyParams::layer(Layer layer) const {
  const auto d = dims(layer);
  std::span<const double> all(values_);
  auto block = all.subspan(offset(layer), d.out * d.in + d.out);
  return {d.out, d.in, block.first(d.out * d.in), block.last(d.out)};
}

bool PolicyParams::all_finite() const {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

PolicyParams init_params(const PolicyShape& shape, std::uint64_t seed) {
  PolicyParams params(shape);
  Rng rng(seed);
  for (std::size_t l = 0; l < kNumLayers; ++l) {
    auto view = params.layer(static_cast<Layer>(l));
    const double limit = std::sqrt(6.0 / static_cast<double>(view.in + view.out));
    for (double& w : view.weight) w = (2.0 * uniform01(rng) - 1.0) * limit;
  }
  return params;
}

}  // namespace budgetflow
