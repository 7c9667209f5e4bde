#include "budgetflow/collect.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace budgetflow {

ExperienceDataset collect(const CollectRequest& request, const ModelCatalog& catalog,
                          const RunBackends& backends, const Evaluator& evaluator,
                          std::vector<RunTrace>* traces) {
  if (request.pools.size() != request.budgets.size()) {
    throw Error("need one provisioned pool per budget");
  }
  const std::size_t n_budgets = request.budgets.size();
  const std::size_t n_groups = request.tasks.size() * n_budgets;

  struct Slot {
    Experience experience;
    RunTrace trace;
  };
  std::vector<Slot> slots(n_groups * kNumTopologies);

#pragma omp parallel for schedule(dynamic, 1) num_threads(request.jobs > 0 ? request.jobs : 1)
  for (std::size_t g = 0; g < n_groups; ++g) {
    const TaskSpec& task = request.tasks[g / n_budgets];
    const std::size_t b = g % n_budgets;
    const double budget = request.budgets[b];
    std::vector<PoolInstance> pool;
    std::string pool_error;
    try {
      pool = build_pool(request.pools[b], catalog);
    } catch (const Error& e) {
      pool_error = e.what();
    }
    for (auto topology : kAllTopologies) {
      Slot& slot = slots[g * kNumTopologies + topology_index(topology)];
      Experience& e = slot.experience;
      e.task_id = task.id;
      e.task_text = task.text;
      e.budget = budget;
      e.topology = topology_index(topology);
      slot.trace.task_id = task.id;
      slot.trace.topology = topology;
      slot.trace.budget = budget;
      if (!pool_error.empty()) {
        e.error = pool_error;
        slot.trace.error = pool_error;
        slot.trace.success = false;
        continue;
      }
      try {
        const auto assignment = assign_roles(pool, topology);
        slot.trace = execute(task, assignment, topology, budget, backends(task), evaluator,
                             request.execution);
        e.success = slot.trace.success.value_or(false);
        e.actual_cost = slot.trace.cumulative_cost;
        e.error = slot.trace.error;
      } catch (const Error& err) {
        e.error = err.what();
        slot.trace.error = err.what();
        slot.trace.success = false;
      }
    }
  }

  ExperienceDataset dataset(request.header);
  for (auto& slot : slots) dataset.add(std::move(slot.experience));
  if (traces != nullptr) {
    for (auto& slot : slots) traces->push_back(std::move(slot.trace));
  }
  return dataset;
}

}  // namespace budgetflow
