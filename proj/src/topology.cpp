#include "budgetflow/topology.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <regex>
#include <sstream>

namespace budgetflow {

std::optional<Topology> parse_topology(std::string_view name) {
  for (auto t : kAllTopologies) {
    if (name == topology_name(t)) return t;
  }
  if (name == "planner-driven" || name == "planner_driven") return Topology::PlannerDriven;
  return std::nullopt;
}

Topology topology_from_index(int index) {
  if (index < 0 || index >= static_cast<int>(kNumTopologies)) {
    throw Error("topology index " + std::to_string(index) + " out of range");
  }
  return kAllTopologies[static_cast<std::size_t>(index)];
}

std::vector<PoolInstance> build_pool(const ProvisionSolution& solution,
                                     const ModelCatalog& catalog) {
  if (!solution.feasible) throw AssignmentError("provisioning was infeasible");
  if (solution.counts.size() != static_cast<std::size_t>(catalog.num_tiers())) {
    throw AssignmentError("provisioning does not match the catalog tiers");
  }
  std::vector<PoolInstance> pool;
  for (int tier = 1; tier <= catalog.num_tiers(); ++tier) {
    const auto& model = catalog.tier_representative(tier);
    for (int k = 1; k <= solution.counts[tier - 1]; ++k) pool.push_back({model, k});
  }
  return pool;
}

std::vector<const AgentSlot*> RoleAssignment::with_role(Role role) const {
  std::vector<const AgentSlot*> out;
  for (const auto& a : agents) {
    if (a.role == role) out.push_back(&a);
  }
  return out;
}

std::size_t min_pool_size(Topology topology) {
  return topology == Topology::PlannerDriven ? 3 : 2;
}

RoleAssignment assign_roles(std::span<const PoolInstance> pool, Topology topology) {
  const std::size_t need = min_pool_size(topology);
  if (pool.size() < need) {
    throw AssignmentError(std::string(topology_name(topology)) + " topology needs " +
                          std::to_string(need) + " instances, pool has " +
                          std::to_string(pool.size()) + " (short by " +
                          std::to_string(need - pool.size()) + ")");
  }
  RoleAssignment out;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    Role role = Role::Executor;
    if (topology == Topology::Feedback && i == 0) role = Role::Critic;
    if (topology == Topology::PlannerDriven) {
      if (i == 0) role = Role::Planner;
      if (i == 1) role = Role::Critic;
    }
    out.agents.push_back({pool[i], role});
  }
  return out;
}

TokenCount ExecutionConfig::max_tokens(Role role) const {
  switch (role) {
    case Role::Planner: return planner_max_tokens;
    case Role::Executor: return executor_max_tokens;
    case Role::Critic: return critic_max_tokens;
  }
  return executor_max_tokens;
}

ExecutionConfig ExecutionConfig::from_json(const nlohmann::json& doc) {
  ExecutionConfig c;
  if (doc.contains("max_tokens")) {
    const auto& mt = doc.at("max_tokens");
    c.planner_max_tokens = mt.value("planner", c.planner_max_tokens);
    c.executor_max_tokens = mt.value("executor", c.executor_max_tokens);
    c.critic_max_tokens = mt.value("critic", c.critic_max_tokens);
  }
  c.max_feedback_rounds = doc.value("max_feedback_rounds", c.max_feedback_rounds);
  c.max_replans = doc.value("max_replans", c.max_replans);
  c.max_plan_steps = doc.value("max_plan_steps", c.max_plan_steps);
  if (doc.contains("precheck_slack") && !doc.at("precheck_slack").is_null()) {
    c.precheck_slack = doc.at("precheck_slack").get<double>();
  }
  c.precheck_input_tokens = doc.value("precheck_input_tokens", c.precheck_input_tokens);
  if (c.planner_max_tokens <= 0 || c.executor_max_tokens <= 0 || c.critic_max_tokens <= 0) {
    throw ConfigError("max_tokens must be > 0");
  }
  if (c.max_feedback_rounds < 1 || c.max_replans < 0 || c.max_plan_steps < 1) {
    throw ConfigError("invalid execution limits");
  }
  return c;
}

namespace {

constexpr std::string_view kExecutorSystem =
    "You are an executor agent in a multi-agent team. Solve the task step by step "
    "and write the final answer on the last line after '####'.";
constexpr std::string_view kCriticSystem =
    "You are a critic agent. Audit the candidate solution without solving the task "
    "yourself. Reply with ACCEPT on the first line if it is correct; otherwise reply "
    "with REJECT: followed by the problem you found.";
constexpr std::string_view kPlannerSystem =
    "You are a planner agent. Break the task into numbered steps, one per line "
    "(1. ..., 2. ...). Do not carry out the steps yourself.";

struct Verdict {
  bool accepted = false;
  std::string critique;
};

Verdict parse_verdict(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::size_t a = 0;
    while (a < line.size() && std::isspace(static_cast<unsigned char>(line[a]))) ++a;
    if (a == line.size()) continue;
    std::string head = line.substr(a);
    std::string upper = head;
    for (char& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (upper.rfind("ACCEPT", 0) == 0) return {true, ""};
    break;
  }
  // anything other than an explicit ACCEPT is a rejection
  return {false, text};
}

std::vector<std::string> parse_plan(const std::string& text, int max_steps) {
  static const std::regex step(R"(^\s*(\d+)\s*[.):]\s*(.*\S)\s*$)");
  std::vector<std::string> steps;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::smatch m;
    if (std::regex_match(line, m, step)) {
      steps.push_back(m[2].str());
      if (static_cast<int>(steps.size()) == max_steps) break;
    }
  }
  return steps;
}

class Run {
 public:
  Run(const TaskSpec& task, Topology topology, double budget,
      const BackendResolver& backends, const ExecutionConfig& config)
      : backends_(backends), config_(config) {
    trace_.task_id = task.id;
    trace_.topology = topology;
    trace_.budget = budget;
  }

  bool stopped() const { return stopped_; }

  // One agent call; nullopt when the run has been stopped.
  std::optional<std::string> call(const AgentSlot& agent, std::string_view system,
                                  std::string user, std::string step) {
    if (stopped_) return std::nullopt;
    const TokenCount max_tokens = config_.max_tokens(agent.role);
    if (std::isfinite(config_.precheck_slack)) {
      const double worst =
          estimate_cost(agent.instance.model, config_.precheck_input_tokens, max_tokens)
              .unit_cost;
      if (worst > trace_.budget - trace_.cumulative_cost + config_.precheck_slack) {
        trace_.precheck_stopped = true;
        stopped_ = true;
        return std::nullopt;
      }
    }
    CallRequest request{agent.instance.model.name, agent.role, std::string(system),
                        std::move(user), max_tokens, 0.0};
    CallResponse response;
    const int attempts = config_.retry_failed_calls ? 2 : 1;
    for (int i = 1;; ++i) {
      try {
        response = backends_(agent.instance.model).invoke(request);
        break;
      } catch (const Error& e) {
        if (i < attempts) continue;
        trace_.error = std::string(role_name(agent.role)) + " call '" + step + "' on " +
                       agent.instance.id() + " failed: " + e.what();
        stopped_ = true;
        return std::nullopt;
      }
    }
    const double cost = estimate_cost(agent.instance.model, response.prompt_tokens,
                                      response.completion_tokens)
                            .unit_cost;
    trace_.calls.push_back({agent.instance.id(), agent.instance.model.name, agent.role,
                            std::move(step), response.prompt_tokens,
                            response.completion_tokens, cost});
    trace_.cumulative_cost += cost;
    if (agent.role == Role::Executor) latest_executor_output_ = response.text;
    if (trace_.cumulative_cost > trace_.budget) {
      trace_.oob = true;
      trace_.terminated_early = true;
      stopped_ = true;
    }
    return std::move(response.text);
  }

  RunTrace& trace() { return trace_; }
  const std::optional<std::string>& latest_executor_output() const {
    return latest_executor_output_;
  }

 private:
  const BackendResolver& backends_;
  const ExecutionConfig& config_;
  RunTrace trace_;
  bool stopped_ = false;
  std::optional<std::string> latest_executor_output_;
};

std::string task_block(const TaskSpec& task) { return "Task:\n" + task.text; }

// Relay through the executors; returns the last output.
std::optional<std::string> relay(Run& run, const TaskSpec& task,
                                 const std::vector<const AgentSlot*>& executors,
                                 const std::string& label) {
  std::optional<std::string> previous;
  for (std::size_t i = 0; i < executors.size(); ++i) {
    std::string user = task_block(task);
    if (previous) {
      user += "\n\nPrevious agent's output:\n" + *previous +
              "\n\nBuild on it and give an improved solution.";
    }
    auto out = run.call(*executors[i], kExecutorSystem, std::move(user),
                        label + std::to_string(i + 1));
    if (!out) return std::nullopt;
    previous = std::move(out);
  }
  return previous;
}

std::optional<std::string> run_linear(Run& run, const TaskSpec& task,
                                      const RoleAssignment& a) {
  return relay(run, task, a.with_role(Role::Executor), "relay-");
}

std::optional<std::string> run_star(Run& run, const TaskSpec& task, const RoleAssignment& a,
                                    const Evaluator& evaluator) {
  const auto executors = a.with_role(Role::Executor);
  std::vector<std::string> outputs;
  for (std::size_t i = 0; i < executors.size(); ++i) {
    auto out = run.call(*executors[i], kExecutorSystem, task_block(task),
                        "branch-" + std::to_string(i + 1));
    if (!out) return std::nullopt;
    outputs.push_back(std::move(*out));
  }
  // majority over normalised answers; earlier (higher-weight) executor wins ties
  std::vector<std::optional<std::string>> keys;
  std::map<std::string, int> votes;
  for (const auto& o : outputs) {
    keys.push_back(evaluator.normalize(o));
    if (keys.back()) ++votes[*keys.back()];
  }
  int best_votes = 0;
  std::optional<std::size_t> winner;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    if (!keys[i]) continue;
    const int v = votes[*keys[i]];
    if (v > best_votes) {
      best_votes = v;
      winner = i;
    }
  }
  return outputs[winner.value_or(0)];
}

std::optional<std::string> run_feedback(Run& run, const TaskSpec& task,
                                        const RoleAssignment& a,
                                        const ExecutionConfig& config) {
  const auto executors = a.with_role(Role::Executor);
  const AgentSlot& critic = *a.with_role(Role::Critic).front();
  auto candidate = relay(run, task, executors, "generate-");
  if (!candidate) return std::nullopt;
  for (int round = 1; round <= config.max_feedback_rounds; ++round) {
    auto review = run.call(critic, kCriticSystem,
                           task_block(task) + "\n\nCandidate solution:\n" + *candidate,
                           "audit-" + std::to_string(round));
    if (!review) return std::nullopt;
    run.trace().feedback_rounds = round;
    const Verdict verdict = parse_verdict(*review);
    if (verdict.accepted || round == config.max_feedback_rounds) break;
    auto revised = run.call(*executors.back(), kExecutorSystem,
                            task_block(task) + "\n\nYour previous solution:\n" + *candidate +
                                "\n\nCritic feedback:\n" + verdict.critique +
                                "\n\nRevise the solution.",
                            "revise-" + std::to_string(round));
    if (!revised) return std::nullopt;
    candidate = std::move(revised);
  }
  return candidate;
}

std::optional<std::string> run_planner(Run& run, const TaskSpec& task,
                                       const RoleAssignment& a,
                                       const ExecutionConfig& config) {
  const auto executors = a.with_role(Role::Executor);
  const AgentSlot& planner = *a.with_role(Role::Planner).front();
  const AgentSlot& critic = *a.with_role(Role::Critic).front();

  std::string feedback;
  std::optional<std::string> result;
  for (int attempt = 0; attempt <= config.max_replans; ++attempt) {
    std::string user = task_block(task);
    if (!feedback.empty()) user += "\n\n" + feedback + "\n\nProduce a revised numbered plan.";
    auto plan = run.call(planner, kPlannerSystem, std::move(user),
                         attempt == 0 ? "plan" : "replan-" + std::to_string(attempt));
    if (!plan) return std::nullopt;
    run.trace().replans = attempt;
    const bool last_attempt = attempt == config.max_replans;
    auto steps = parse_plan(*plan, config.max_plan_steps);
    if (steps.empty()) {
      if (!last_attempt) {
        feedback = "Your previous reply contained no numbered steps:\n" + *plan;
        continue;
      }
      steps.push_back("Solve the task directly.");
    }

    std::string progress;
    for (std::size_t k = 0; k < steps.size(); ++k) {
      const AgentSlot& exec = *executors[k % executors.size()];
      std::string step_user = task_block(task) + "\n\nPlan:\n" + *plan;
      if (!progress.empty()) step_user += "\n\nResults so far:\n" + progress;
      step_user += "\n\nCarry out step " + std::to_string(k + 1) + ": " + steps[k];
      auto out = run.call(exec, kExecutorSystem, std::move(step_user),
                          "step-" + std::to_string(attempt) + "." + std::to_string(k + 1));
      if (!out) return std::nullopt;
      progress += "Step " + std::to_string(k + 1) + ": " + *out + "\n";
      result = std::move(out);
    }
    if (last_attempt) break;

    auto review = run.call(critic, kCriticSystem,
                           task_block(task) + "\n\nPlan:\n" + *plan +
                               "\n\nAssembled result:\n" + *result,
                           "audit-" + std::to_string(attempt));
    if (!review) return std::nullopt;
    const Verdict verdict = parse_verdict(*review);
    if (verdict.accepted) break;
    feedback = "Previous plan:\n" + *plan + "\n\nCritic feedback:\n" + verdict.critique;
  }
  return result;
}

}  // namespace

RunTrace execute(const TaskSpec& task, const RoleAssignment& assignment,
                 Topology topology, double budget, const BackendResolver& backends,
                 const Evaluator& evaluator, const ExecutionConfig& config) {
  if (!(budget > 0.0)) throw Error("budget must be positive");
  const auto n_exec = assignment.with_role(Role::Executor).size();
  const auto n_critic = assignment.with_role(Role::Critic).size();
  const auto n_planner = assignment.with_role(Role::Planner).size();
  const bool matches =
      n_exec >= 1 &&
      ((topology == Topology::Linear || topology == Topology::Star)
           ? n_critic == 0 && n_planner == 0
       : topology == Topology::Feedback ? n_critic == 1 && n_planner == 0
                                        : n_critic == 1 && n_planner == 1);
  if (!matches) throw AssignmentError("role assignment does not match the topology");

  Run run(task, topology, budget, backends, config);
  std::optional<std::string> answer;
  switch (topology) {
    case Topology::Linear: answer = run_linear(run, task, assignment); break;
    case Topology::Star: answer = run_star(run, task, assignment, evaluator); break;
    case Topology::Feedback: answer = run_feedback(run, task, assignment, config); break;
    case Topology::PlannerDriven: answer = run_planner(run, task, assignment, config); break;
  }

  RunTrace& trace = run.trace();
  if (run.stopped()) {
    trace.final_answer = run.latest_executor_output();
  } else {
    trace.final_answer = std::move(answer);
  }

  if (!trace.error.empty() || !trace.final_answer) {
    trace.success = false;
  } else if (task.expected_answer) {
    try {
      trace.success = evaluator.is_correct(*trace.final_answer, *task.expected_answer);
    } catch (const Error& e) {
      trace.success = false;
      trace.error = std::string("evaluator failed: ") + e.what();
    }
  }
  return std::move(trace);
}

std::size_t count_oob(std::span<const RunTrace> traces) {
  return static_cast<std::size_t>(
      std::count_if(traces.begin(), traces.end(), [](const RunTrace& t) { return t.oob; }));
}

nlohmann::json trace_to_json(const RunTrace& trace) {
  nlohmann::json calls = nlohmann::json::array();
  for (const auto& c : trace.calls) {
    calls.push_back({{"agent", c.agent},
                     {"model", c.model},
                     {"role", role_name(c.role)},
                     {"step", c.step},
                     {"prompt_tokens", c.prompt_tokens},
                     {"completion_tokens", c.completion_tokens},
                     {"cost", c.cost}});
  }
  nlohmann::json j{{"task_id", trace.task_id},
                   {"topology", topology_name(trace.topology)},
                   {"budget", trace.budget},
                   {"calls", calls},
                   {"cumulative_cost", trace.cumulative_cost},
                   {"final_answer", nullptr},
                   {"success", nullptr},
                   {"oob", trace.oob},
                   {"terminated_early", trace.terminated_early},
                   {"precheck_stopped", trace.precheck_stopped},
                   {"replans", trace.replans},
                   {"feedback_rounds", trace.feedback_rounds}};
  if (trace.final_answer) j["final_answer"] = *trace.final_answer;
  if (trace.success) j["success"] = *trace.success;
  if (!trace.error.empty()) j["error"] = trace.error;
  return j;
}

RunTrace trace_from_json(const nlohmann::json& j) {
  try {
    RunTrace t;
    t.task_id = j.at("task_id").get<std::string>();
    const auto topo = parse_topology(j.at("topology").get<std::string>());
    if (!topo) throw Error("unknown topology in trace");
    t.topology = *topo;
    t.budget = j.at("budget").get<double>();
    for (const auto& c : j.at("calls")) {
      const auto role = parse_role(c.at("role").get<std::string>());
      if (!role) throw Error("unknown role in trace");
      t.calls.push_back({c.at("agent").get<std::string>(), c.at("model").get<std::string>(),
                         *role, c.at("step").get<std::string>(),
                         c.at("prompt_tokens").get<TokenCount>(),
                         c.at("completion_tokens").get<TokenCount>(),
                         c.at("cost").get<double>()});
    }
    t.cumulative_cost = j.at("cumulative_cost").get<double>();
    if (!j.at("final_answer").is_null()) t.final_answer = j.at("final_answer").get<std::string>();
    if (!j.at("success").is_null()) t.success = j.at("success").get<bool>();
    t.oob = j.at("oob").get<bool>();
    t.terminated_early = j.value("terminated_early", false);
    t.precheck_stopped = j.value("precheck_stopped", false);
    t.replans = j.value("replans", 0);
    t.feedback_rounds = j.value("feedback_rounds", 0);
    t.error = j.value("error", std::string{});
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed trace: ") + e.what());
  }
}

void write_traces(std::span<const RunTrace> traces, std::ostream& out) {
  for (const auto& t : traces) out << trace_to_json(t).dump() << '\n';
}

std::vector<RunTrace> read_traces(std::istream& in) {
  std::vector<RunTrace> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(trace_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw Error("trace line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace budgetflow
