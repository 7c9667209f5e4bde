#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace budgetflow {

/// Layer sizes of the topology-selection network.
struct PolicyShape {
  std::size_t embed_dim = 384;
  std::size_t feature_dim = 64;  // width of each input projection
  std::size_t hidden_dim = 128;
  std::size_t num_actions = 4;

  bool operator==(const PolicyShape&) const = default;
};

enum class Layer : std::size_t { EmbedProj = 0, BudgetProj = 1, Core = 2, Head = 3 };
inline constexpr std::size_t kNumLayers = 4;

std::string_view layer_name(Layer layer);

struct LayerDims {
  std::size_t out = 0;
  std::size_t in = 0;
};

template <typename T>
struct DenseView {
  std::size_t out = 0;
  std::size_t in = 0;
  std::span<T> weight;  // row-major [out][in]
  std::span<T> bias;    // [out]
};

/// All network parameters in one flat buffer.
class PolicyParams {
 public:
  PolicyParams() : PolicyParams(PolicyShape{}) {}
  explicit PolicyParams(const PolicyShape& shape);

  const PolicyShape& shape() const { return shape_; }
  LayerDims dims(Layer layer) const;

  DenseView<double> layer(Layer layer);
  DenseView<const double> layer(Layer layer) const;

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::size_t size() const { return values_.size(); }

  /// Offset of the first weight of `layer` in values().
  std::size_t offset(Layer layer) const { return offsets_[static_cast<std::size_t>(layer)]; }
  /// Number of values (weights + biases) in `layer`.
  std::size_t layer_size(Layer layer) const;

  bool all_finite() const;
  bool operator==(const PolicyParams& other) const = default;

 private:
  PolicyShape shape_;
  std::array<std::size_t, kNumLayers> offsets_{};
  std::vector<double> values_;
};

/// Glorot-uniform weights, zero biases, drawn from a mt19937_64 seeded with
/// `seed`.
PolicyParams init_params(const PolicyShape& shape, std::uint64_t seed);

}  // namespace budgetflow
