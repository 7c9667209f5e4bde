#pragma once

#include <functional>
#include <vector>

#include "budgetflow/catalog.hpp"
#include "budgetflow/dataset.hpp"
#include "budgetflow/evaluator.hpp"
#include "budgetflow/provision.hpp"
#include "budgetflow/topology.hpp"

namespace budgetflow {

/// Builds the backend resolver for one run of a task. Called once per
/// (task, budget, topology).
using RunBackends = std::function<BackendResolver(const TaskSpec&)>;

struct CollectRequest {
  std::vector<TaskSpec> tasks;
  std::vector<double> budgets;
  std::vector<ProvisionSolution> pools;  // one per budget
  ExecutionConfig execution;
  DatasetHeader header;
  int jobs = 1;
};

/// Runs every topology on every (task, budget). Failed runs are recorded as
/// unsuccessful with an error note.
ExperienceDataset collect(const CollectRequest& request, const ModelCatalog& catalog,
                          const RunBackends& backends, const Evaluator& evaluator,
                          std::vector<RunTrace>* traces = nullptr);

}  // namespace budgetflow
