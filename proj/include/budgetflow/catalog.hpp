#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace budgetflow {

using TokenCount = std::int64_t;

/// A priced LLM offering. Prices are quoted per million tokens, so a cost
/// computed from them is in micro-units of the pricing currency.
struct ModelSpec {
  std::string name;
  int tier = 1;  // 1 = strongest
  double price_in_per_mtok = 0.0;
  double price_out_per_mtok = 0.0;
  std::string backend_id;
};

struct CostEstimate {
  TokenCount t_in = 0;
  TokenCount t_out = 0;
  double unit_cost = 0.0;
};

/// Connection settings for an OpenAI-compatible endpoint.
struct BackendEndpoint {
  std::string base_url;
  std::string api_key_env;
  double requests_per_second = 0.0;  // 0 disables rate limiting
  double timeout_seconds = 60.0;
};

/// Cost of one call: tokens times per-token price, rescaled by 1e6.
/// With per-million prices the two factors cancel, which keeps the result
/// exact for the small decimal prices vendors quote.
CostEstimate estimate_cost(const ModelSpec& model, TokenCount t_in,
                           TokenCount t_out);

/// Upper bound on output length taken from sampled generations.
TokenCount estimate_output_tokens(std::span<const TokenCount> sampled_lengths);

class ModelCatalog {
 public:
  ModelCatalog() = default;
  /// Validates tier coverage and prices; throws ConfigError.
  explicit ModelCatalog(std::vector<ModelSpec> models,
                        std::map<std::string, BackendEndpoint> backends = {});

  static ModelCatalog from_json(const nlohmann::json& doc);
  static ModelCatalog load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  const std::vector<ModelSpec>& models() const { return models_; }
  int num_tiers() const { return num_tiers_; }

  /// First declared model of the tier; it stands in for the whole tier
  /// when provisioning.
  const ModelSpec& tier_representative(int tier) const;
  const ModelSpec* find(const std::string& name) const;
  std::optional<BackendEndpoint> endpoint(const std::string& backend_id) const;

  /// Per-tier unit cost c_1..c_L. `t_out` may be overridden per model name.
  std::vector<double> tier_costs(
      TokenCount t_in, TokenCount t_out,
      const std::map<std::string, TokenCount>& t_out_by_model = {}) const;

  /// Stable FNV-1a digest of the canonical JSON form, as hex.
  std::string hash() const;

 private:
  std::vector<ModelSpec> models_;
  std::map<std::string, BackendEndpoint> backends_;
  int num_tiers_ = 0;
};

}  // namespace budgetflow
