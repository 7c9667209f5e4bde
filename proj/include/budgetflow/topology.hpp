#pragma once

#include <functional>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "budgetflow/backend.hpp"
#include "budgetflow/catalog.hpp"
#include "budgetflow/evaluator.hpp"
#include "budgetflow/provision.hpp"
#include "budgetflow/topology_kind.hpp"
#include "json.hpp"

namespace budgetflow {

struct TaskSpec {
  std::string id;
  std::string text;
  std::optional<std::string> expected_answer;
};

/// One provisioned copy of a model.
struct PoolInstance {
  ModelSpec model;
  int ordinal = 1;  // 1-based within the model

  std::string id() const { return model.name + "#" + std::to_string(ordinal); }
};

/// Instances in descending decision weight (tier 1 first); within a tier in
/// catalog declaration order.
std::vector<PoolInstance> build_pool(const ProvisionSolution& solution,
                                     const ModelCatalog& catalog);

struct AgentSlot {
  PoolInstance instance;
  Role role = Role::Executor;
};

struct RoleAssignment {
  std::vector<AgentSlot> agents;  // same order as the pool

  std::vector<const AgentSlot*> with_role(Role role) const;
};

class AssignmentError : public Error {
 public:
  using Error::Error;
};

/// Minimum pool size for a topology (2, or 3 for planner-driven).
std::size_t min_pool_size(Topology topology);

/// Linear/Star: all executors. Feedback: first instance critic. Planner-driven:
/// first planner, second critic. Throws AssignmentError when no executor would
/// remain.
RoleAssignment assign_roles(std::span<const PoolInstance> pool, Topology topology);

struct ExecutionConfig {
  TokenCount planner_max_tokens = 384;
  TokenCount executor_max_tokens = 384;
  TokenCount critic_max_tokens = 384;
  int max_feedback_rounds = 3;  // critic audits per feedback run
  int max_replans = 2;
  int max_plan_steps = 8;
  // Pre-call skip: a call is not started when its worst case (precheck
  // input tokens plus max_tokens at the agent's price) exceeds the remaining
  // budget by more than this slack. Infinite disables the check.
  double precheck_slack = std::numeric_limits<double>::infinity();
  TokenCount precheck_input_tokens = 500;
  bool retry_failed_calls = true;

  TokenCount max_tokens(Role role) const;
  static ExecutionConfig from_json(const nlohmann::json& doc);
};

struct CallRecord {
  std::string agent;
  std::string model;
  Role role = Role::Executor;
  std::string step;
  TokenCount prompt_tokens = 0;
  TokenCount completion_tokens = 0;
  double cost = 0.0;

  bool operator==(const CallRecord&) const = default;
};

struct RunTrace {
  std::string task_id;
  Topology topology = Topology::Linear;
  double budget = 0.0;
  std::vector<CallRecord> calls;
  double cumulative_cost = 0.0;
  std::optional<std::string> final_answer;
  std::optional<bool> success;  // nullopt: no reference answer to grade against
  bool oob = false;
  bool terminated_early = false;
  bool precheck_stopped = false;
  int replans = 0;
  int feedback_rounds = 0;
  std::string error;

  bool operator==(const RunTrace&) const = default;
};

/// Resolves the backend that serves a model.
using BackendResolver = std::function<Backend&(const ModelSpec&)>;

/// Runs one task through a topology. Every call's cost is committed to the
/// ledger when it completes; once the ledger exceeds `budget` no further
/// call is started.
RunTrace execute(const TaskSpec& task, const RoleAssignment& assignment,
                 Topology topology, double budget, const BackendResolver& backends,
                 const Evaluator& evaluator, const ExecutionConfig& config = {});

std::size_t count_oob(std::span<const RunTrace> traces);

nlohmann::json trace_to_json(const RunTrace& trace);
RunTrace trace_from_json(const nlohmann::json& doc);
void write_traces(std::span<const RunTrace> traces, std::ostream& out);
std::vector<RunTrace> read_traces(std::istream& in);

}  // namespace budgetflow
