#pragma once

#include <memory>
#include <string>
#include <vector>

#include "budgetflow/topology.hpp"
#include "fixtures.hpp"

namespace budgetflow::testing {

inline std::vector<PoolInstance> pool_of(const std::vector<ModelSpec>& models) {
  std::vector<PoolInstance> pool;
  for (const auto& m : models) {
    int ordinal = 1;
    for (const auto& p : pool) ordinal += p.model.name == m.name;
    pool.push_back({m, ordinal});
  }
  return pool;
}

/// One scripted backend serving every model.
struct ScriptedWorld {
  explicit ScriptedWorld(const ScriptedBehavior& script)
      : backend(std::make_shared<ScriptedBackend>(script)) {}
  explicit ScriptedWorld(const std::string& json)
      : ScriptedWorld(ScriptedBehavior::from_json(nlohmann::json::parse(json))) {}

  BackendResolver resolver() const {
    auto b = backend;
    return [b](const ModelSpec&) -> Backend& { return *b; };
  }

  std::shared_ptr<ScriptedBackend> backend;
};

inline RunTrace run_scenario(const std::vector<ModelSpec>& models, Topology topology,
                             double budget, const std::string& script_json,
                             std::optional<std::string> expected = std::nullopt,
                             const ExecutionConfig& config = {}) {
  const auto pool = pool_of(models);
  const auto roles = assign_roles(pool, topology);
  ScriptedWorld world(script_json);
  NumericMatchEvaluator evaluator;
  return execute({"task-1", "What is 2 + 2?", std::move(expected)}, roles, topology, budget,
                 world.resolver(), evaluator, config);
}

/// Cost of a trace recomputed from the recorded usage.
inline double shadow_ledger(const RunTrace& trace, const std::vector<ModelSpec>& models) {
  double total = 0.0;
  for (const auto& c : trace.calls) {
    for (const auto& m : models) {
      if (m.name == c.model) {
        total += static_cast<double>(c.prompt_tokens) * m.price_in_per_mtok +
                 static_cast<double>(c.completion_tokens) * m.price_out_per_mtok;
        break;
      }
    }
  }
  return total;
}

}  // namespace budgetflow::testing
