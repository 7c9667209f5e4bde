#include "budgetflow/catalog.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "budgetflow/error.hpp"

namespace budgetflow {

CostEstimate estimate_cost(const ModelSpec& model, TokenCount t_in,
                           TokenCount t_out) {
  if (t_in < 0 || t_out < 0) throw Error("token counts must be non-negative");
  // (t * p_mtok / 1e6) * 1e6 == t * p_mtok
  const double cost = static_cast<double>(t_in) * model.price_in_per_mtok +
                      static_cast<double>(t_out) * model.price_out_per_mtok;
  return {t_in, t_out, cost};
}

TokenCount estimate_output_tokens(std::span<const TokenCount> sampled_lengths) {
  if (sampled_lengths.empty()) throw Error("no samples");
  return *std::max_element(sampled_lengths.begin(), sampled_lengths.end());
}

ModelCatalog::ModelCatalog(std::vector<ModelSpec> models,
                           std::map<std::string, BackendEndpoint> backends)
    : models_(std::move(models)), backends_(std::move(backends)) {
  if (models_.empty()) throw ConfigError("catalog has no models");
  for (const auto& m : models_) {
    if (m.name.empty()) throw ConfigError("catalog model without a name");
    if (m.tier < 1) throw ConfigError("model '" + m.name + "' has tier < 1");
    if (!(m.price_in_per_mtok >= 0.0) || !(m.price_out_per_mtok >= 0.0) ||
        !std::isfinite(m.price_in_per_mtok) ||
        !std::isfinite(m.price_out_per_mtok)) {
      throw ConfigError("model '" + m.name + "' has an invalid price");
    }
    num_tiers_ = std::max(num_tiers_, m.tier);
  }
  for (int tier = 1; tier <= num_tiers_; ++tier) {
    const bool present = std::any_of(models_.begin(), models_.end(),
                                     [tier](const auto& m) { return m.tier == tier; });
    if (!present) {
      throw ConfigError("tier " + std::to_string(tier) + " has no model");
    }
  }
  for (std::size_t i = 0; i < models_.size(); ++i) {
    for (std::size_t j = i + 1; j < models_.size(); ++j) {
      if (models_[i].name == models_[j].name) {
        throw ConfigError("duplicate model '" + models_[i].name + "'");
      }
    }
  }
}

ModelCatalog ModelCatalog::from_json(const nlohmann::json& doc) {
  const nlohmann::json& list = doc.is_array() ? doc : doc.at("models");
  std::vector<ModelSpec> models;
  try {
    for (const auto& item : list) {
      ModelSpec m;
      m.name = item.at("name").get<std::string>();
      m.tier = item.at("tier").get<int>();
      m.price_in_per_mtok = item.at("price_in_per_mtok").get<double>();
      m.price_out_per_mtok = item.at("price_out_per_mtok").get<double>();
      m.backend_id = item.value("backend_id", std::string{});
      models.push_back(std::move(m));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("catalog: ") + e.what());
  }
  std::map<std::string, BackendEndpoint> backends;
  if (doc.is_object() && doc.contains("backends")) {
    for (const auto& [id, cfg] : doc.at("backends").items()) {
      BackendEndpoint ep;
      ep.base_url = cfg.value("base_url", std::string{});
      ep.api_key_env = cfg.value("api_key_env", std::string{});
      ep.requests_per_second = cfg.value("requests_per_second", 0.0);
      ep.timeout_seconds = cfg.value("timeout_seconds", 60.0);
      backends.emplace(id, std::move(ep));
    }
  }
  return ModelCatalog(std::move(models), std::move(backends));
}

ModelCatalog ModelCatalog::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open catalog " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("catalog " + path.string() + ": " + e.what());
  }
  return from_json(doc);
}

nlohmann::json ModelCatalog::to_json() const {
  nlohmann::json models = nlohmann::json::array();
  for (const auto& m : models_) {
    models.push_back({{"name", m.name},
                      {"tier", m.tier},
                      {"price_in_per_mtok", m.price_in_per_mtok},
                      {"price_out_per_mtok", m.price_out_per_mtok},
                      {"backend_id", m.backend_id}});
  }
  nlohmann::json doc{{"models", models}};
  if (!backends_.empty()) {
    nlohmann::json backends = nlohmann::json::object();
    for (const auto& [id, ep] : backends_) {
      backends[id] = {{"base_url", ep.base_url},
                      {"api_key_env", ep.api_key_env},
                      {"requests_per_second", ep.requests_per_second},
                      {"timeout_seconds", ep.timeout_seconds}};
    }
    doc["backends"] = backends;
  }
  return doc;
}

const ModelSpec& ModelCatalog::tier_representative(int tier) const {
  for (const auto& m : models_) {
    if (m.tier == tier) return m;
  }
  throw Error("no model in tier " + std::to_string(tier));
}

const ModelSpec* ModelCatalog::find(const std::string& name) const {
  for (const auto& m : models_) {
    if (m.name == name) return &m;
  }
  return nullptr;
}

std::optional<BackendEndpoint> ModelCatalog::endpoint(
    const std::string& backend_id) const {
  auto it = backends_.find(backend_id);
  if (it == backends_.end()) return std::nullopt;
  return it->second;
}

std::vector<double> ModelCatalog::tier_costs(
    TokenCount t_in, TokenCount t_out,
    const std::map<std::string, TokenCount>& t_out_by_model) const {
  std::vector<double> costs;
  costs.reserve(num_tiers_);
  for (int tier = 1; tier <= num_tiers_; ++tier) {
    const auto& rep = tier_representative(tier);
    auto it = t_out_by_model.find(rep.name);
    const TokenCount out = it == t_out_by_model.end() ? t_out : it->second;
    costs.push_back(estimate_cost(rep, t_in, out).unit_cost);
  }
  return costs;
}

std::string ModelCatalog::hash() const {
  const std::string text = to_json().dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

}  // namespace budgetflow
