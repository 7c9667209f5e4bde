#include "budgetflow/app.hpp"

#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "budgetflow/embedder.hpp"
#include "budgetflow/provision.hpp"

namespace budgetflow::app {

namespace fs = std::filesystem;

namespace {

nlohmann::json read_json(const fs::path& path, const std::string& what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + what + " " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(what + " " + path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

std::string fixed(double v, int digits = 1) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

}  // namespace

// ---- configuration -------------------------------------------------------

TaskProfile TaskProfile::from_json(const nlohmann::json& doc) {
  TaskProfile p;
  try {
    p.t_in = doc.value("t_in", p.t_in);
    if (doc.contains("t_out")) {
      const auto& t = doc.at("t_out");
      if (t.is_object()) {
        for (const auto& [model, n] : t.items()) p.t_out_by_model[model] = n.get<TokenCount>();
        p.t_out = 0;
      } else {
        p.t_out = t.get<TokenCount>();
      }
    }
    if (doc.contains("output_samples")) {
      const auto& s = doc.at("output_samples");
      if (s.is_object()) {
        for (const auto& [model, list] : s.items()) {
          const auto v = list.get<std::vector<TokenCount>>();
          p.t_out_by_model[model] = estimate_output_tokens(v);
        }
      } else {
        const auto v = s.get<std::vector<TokenCount>>();
        p.t_out = estimate_output_tokens(v);
      }
    }
    nlohmann::json exec = doc.value("execution", nlohmann::json::object());
    if (doc.contains("max_tokens")) exec["max_tokens"] = doc.at("max_tokens");
    p.execution = ExecutionConfig::from_json(exec);
    p.evaluator = doc.value("evaluator", p.evaluator);
    make_evaluator(p.evaluator);  // validates the kind
    if (doc.contains("mock")) p.mock = ScriptedBehavior::from_json(doc.at("mock"));
    for (const auto& item : doc.value("tasks", nlohmann::json::array())) {
      Task t;
      t.spec.id = item.at("id").get<std::string>();
      t.spec.text = item.at("text").get<std::string>();
      if (item.contains("answer") && !item.at("answer").is_null()) {
        const auto& a = item.at("answer");
        t.spec.expected_answer = a.is_string() ? a.get<std::string>() : a.dump();
      }
      if (item.contains("mock")) t.mock = ScriptedBehavior::from_json(item.at("mock"));
      p.tasks.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("task profile: ") + e.what());
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("task profile: ") + e.what());
  }
  if (p.t_in < 0 || p.t_out < 0) throw ConfigError("token estimates must be >= 0");
  return p;
}

TaskProfile TaskProfile::load(const fs::path& path) {
  return from_json(read_json(path, "task profile"));
}

const ScriptedBehavior* TaskProfile::script_for(const TaskSpec& task) const {
  for (const auto& t : tasks) {
    if (t.spec.id == task.id && t.mock) return &*t.mock;
  }
  return mock ? &*mock : nullptr;
}

RunConfig RunConfig::from_json(const nlohmann::json& doc, const fs::path& base) {
  RunConfig c;
  auto resolve = [&](const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path : base / path;
  };
  try {
    c.catalog_path = resolve(doc.at("catalog").get<std::string>());
    c.profile_path = resolve(doc.at("profile").get<std::string>());
    if (doc.contains("budgets")) c.budgets = doc.at("budgets").get<std::vector<double>>();
    c.seed = doc.value("seed", c.seed);
    c.output_dir = resolve(doc.value("output_dir", std::string{"out"}));
    if (doc.contains("reward")) c.reward = RewardConfig::from_json(doc.at("reward"));
    nlohmann::json trainer = doc.value("trainer", nlohmann::json::object());
    if (!trainer.contains("seed")) trainer["seed"] = c.seed;
    c.trainer = TrainerConfig::from_json(trainer);
    c.instance_cap = doc.value("instance_cap", c.instance_cap);
    c.min_agents = doc.value("min_agents", c.min_agents);
    c.mock = doc.value("mock", c.mock);
    c.jobs = doc.value("jobs", c.jobs);
    c.collection_date = doc.value("collection_date", std::string{});
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  for (double b : c.budgets) {
    if (!(b > 0.0)) throw ConfigError("budgets must be > 0");
  }
  return c;
}

RunConfig RunConfig::load(const fs::path& path) {
  return from_json(read_json(path, "config"), path.parent_path());
}

// ---- reporting -----------------------------------------------------------

ReportSummary summarize(std::span<const RunTrace> traces) {
  ReportSummary s;
  s.runs = traces.size();
  for (auto t : kAllTopologies) s.topology_counts[std::string(topology_name(t))] = 0;
  double total_cost = 0.0;
  for (const auto& t : traces) {
    total_cost += t.cumulative_cost;
    if (t.success) {
      ++s.graded;
      if (*t.success) ++s.successes;
    }
    if (t.oob) ++s.oob;
    ++s.topology_counts[std::string(topology_name(t.topology))];
  }
  if (s.runs > 0) s.avg_cost = total_cost / static_cast<double>(s.runs);
  if (s.graded > 0) {
    s.accuracy_pct = 100.0 * static_cast<double>(s.successes) / static_cast<double>(s.graded);
  }
  return s;
}

void print_summary(const ReportSummary& s, std::ostream& out) {
  out << "Runs: " << s.runs << '\n'
      << "Acc: " << fixed(s.accuracy_pct) << "%\n"
      << "Avg Cost: " << fixed(s.avg_cost) << '\n'
      << "OOB: " << s.oob << '/' << s.runs << '\n'
      << "Topology distribution:\n";
  for (auto t : kAllTopologies) {
    const auto n = s.topology_counts.at(std::string(topology_name(t)));
    const double pct = s.runs == 0 ? 0.0 : 100.0 * static_cast<double>(n) / static_cast<double>(s.runs);
    out << "  " << std::left << std::setw(9) << topology_name(t) << std::right << ' ' << n
        << " (" << fixed(pct) << "%)\n";
  }
}

// ---- commands ------------------------------------------------------------

namespace {

struct Options {
  std::string config;
  std::vector<double> budgets;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  bool mock = false;
  std::string out_dir;
  bool explain = false;
  std::string topology;
  std::string task_text;
  std::string answer;
  std::string weights;
  std::string report_path;
};

struct Context {
  RunConfig config;
  ModelCatalog catalog;
  TaskProfile profile;
  std::vector<double> budgets;
};

Context load_context(const Options& o) {
  if (o.config.empty()) throw ConfigError("--config is required");
  Context ctx;
  ctx.config = RunConfig::load(o.config);
  if (o.seed) {
    ctx.config.seed = *o.seed;
    ctx.config.trainer.seed = *o.seed;
  }
  if (o.jobs) ctx.config.jobs = *o.jobs;
  if (o.mock) ctx.config.mock = true;
  if (!o.out_dir.empty()) ctx.config.output_dir = o.out_dir;
  ctx.catalog = ModelCatalog::load(ctx.config.catalog_path);
  ctx.profile = TaskProfile::load(ctx.config.profile_path);
  ctx.budgets = o.budgets.empty() ? ctx.config.budgets : o.budgets;
  if (ctx.budgets.empty()) throw ConfigError("no budget given (config budgets or --budget)");
  for (double b : ctx.budgets) {
    if (!(b > 0.0)) throw ConfigError("budgets must be > 0");
  }
  return ctx;
}

ProvisionProblem make_problem(const Context& ctx, double budget) {
  ProvisionProblem p;
  p.budget = budget;
  p.tier_costs = ctx.catalog.tier_costs(ctx.profile.t_in, ctx.profile.t_out,
                                        ctx.profile.t_out_by_model);
  p.instance_cap = ctx.config.instance_cap;
  p.min_agents = ctx.config.min_agents;
  return p;
}

nlohmann::json solution_json(double budget, const ProvisionProblem& problem,
                             const ProvisionSolution& s, const ModelCatalog& catalog) {
  nlohmann::json counts = nlohmann::json::object();
  for (int tier = 1; tier <= catalog.num_tiers(); ++tier) {
    counts[catalog.tier_representative(tier).name] = s.counts[tier - 1];
  }
  nlohmann::json weights = nlohmann::json::array();
  for (const auto& w : compute_weights(problem).weights) weights.push_back(w.str());
  nlohmann::json j{{"budget", budget},
                   {"feasible", s.feasible},
                   {"counts", s.counts},
                   {"models", counts},
                   {"tier_costs", problem.tier_costs},
                   {"weights", weights},
                   {"total_weight", s.total_weight.str()},
                   {"total_cost", s.total_cost}};
  if (!s.feasible) j["reason"] = s.reason;
  return j;
}

ProvisionSolution solution_from_json(const nlohmann::json& j) {
  ProvisionSolution s;
  s.feasible = j.at("feasible").get<bool>();
  s.counts = j.at("counts").get<std::vector<int>>();
  s.total_weight = BigInt(j.at("total_weight").get<std::string>());
  s.total_cost = j.at("total_cost").get<double>();
  s.reason = j.value("reason", std::string{});
  return s;
}

fs::path provision_path(const Context& ctx) { return ctx.config.output_dir / "provision.json"; }

class Infeasible : public Error {
 public:
  using Error::Error;
};

int cmd_provision(const Options& o, std::ostream& out) {
  const Context ctx = load_context(o);
  nlohmann::json solutions = nlohmann::json::array();
  bool all_feasible = true;
  for (double budget : ctx.budgets) {
    const auto problem = make_problem(ctx, budget);
    const auto s = solve(problem);
    solutions.push_back(solution_json(budget, problem, s, ctx.catalog));
    out << "budget " << fixed(budget) << ": ";
    if (!s.feasible) {
      all_feasible = false;
      out << "infeasible (" << s.reason << ")\n";
    } else {
      for (int tier = 1; tier <= ctx.catalog.num_tiers(); ++tier) {
        out << (tier > 1 ? ", " : "") << s.counts[tier - 1] << " x "
            << ctx.catalog.tier_representative(tier).name;
      }
      out << " | cost " << fixed(s.total_cost) << " | weight " << s.total_weight << '\n';
    }
    if (o.explain) {
      const auto w = compute_weights(problem).weights;
      for (std::size_t i = 0; i < w.size(); ++i) {
        out << "  tier " << i + 1 << " (" << ctx.catalog.tier_representative(static_cast<int>(i) + 1).name
            << "): unit cost " << fixed(problem.tier_costs[i], 4) << ", W = " << w[i] << '\n';
      }
    }
  }
  const nlohmann::json doc{{"t_in", ctx.profile.t_in},
                           {"catalog_hash", ctx.catalog.hash()},
                           {"solutions", solutions}};
  write_text(provision_path(ctx), doc.dump(2) + "\n");
  return all_feasible ? kOk : kInfeasible;
}

std::vector<ProvisionSolution> load_pools(const Context& ctx) {
  const auto doc = read_json(provision_path(ctx), "provisioning output (run `provision` first)");
  std::vector<ProvisionSolution> pools;
  for (double budget : ctx.budgets) {
    bool found = false;
    for (const auto& j : doc.at("solutions")) {
      if (j.at("budget").get<double>() == budget) {
        pools.push_back(solution_from_json(j));
        found = true;
        break;
      }
    }
    if (!found) {
      throw ConfigError("no provisioning result for budget " + fixed(budget) +
                        "; rerun `provision`");
    }
  }
  return pools;
}

// Backends for a run: scripted in mock mode, otherwise shared HTTP clients.
class BackendFactory {
 public:
  explicit BackendFactory(const Context& ctx) : ctx_(ctx) {
    if (ctx.config.mock) return;
    for (const auto& m : ctx.catalog.models()) {
      if (http_.contains(m.backend_id)) continue;
      const auto ep = ctx.catalog.endpoint(m.backend_id);
      if (!ep) throw ConfigError("catalog has no endpoint for backend '" + m.backend_id + "'");
      http_.emplace(m.backend_id,
                    std::make_shared<HttpBackend>(HttpBackendOptions::from_endpoint(*ep)));
    }
  }

  void check_scripts(const std::vector<TaskSpec>& tasks) const {
    if (!ctx_.config.mock) return;
    for (const auto& t : tasks) {
      const auto* script = ctx_.profile.script_for(t);
      for (Role role : {Role::Executor, Role::Critic, Role::Planner}) {
        if (script == nullptr || !script->covers(role)) {
          throw ConfigError("mock mode: no script for role " + std::string(role_name(role)) +
                            " in task " + t.id);
        }
      }
    }
  }

  BackendResolver for_task(const TaskSpec& task) const {
    if (ctx_.config.mock) {
      auto backend = std::make_shared<ScriptedBackend>(*ctx_.profile.script_for(task));
      return [backend](const ModelSpec&) -> Backend& { return *backend; };
    }
    auto http = http_;
    return [http](const ModelSpec& m) -> Backend& { return *http.at(m.backend_id); };
  }

 private:
  const Context& ctx_;
  std::map<std::string, std::shared_ptr<HttpBackend>> http_;
};

std::vector<TaskSpec> profile_tasks(const TaskProfile& p) {
  std::vector<TaskSpec> out;
  for (const auto& t : p.tasks) out.push_back(t.spec);
  return out;
}

int cmd_collect(const Options& o, std::ostream& out) {
  const Context ctx = load_context(o);
  const auto evaluator = make_evaluator(ctx.profile.evaluator);
  CollectRequest req;
  req.tasks = profile_tasks(ctx.profile);
  req.budgets = ctx.budgets;
  req.pools = load_pools(ctx);
  req.execution = ctx.profile.execution;
  req.header = {1, ctx.catalog.hash(), ctx.config.seed, ctx.config.collection_date};
  req.jobs = ctx.config.jobs;
  BackendFactory factory(ctx);
  factory.check_scripts(req.tasks);
  std::vector<RunTrace> traces;
  const auto dataset = collect(
      req, ctx.catalog, [&](const TaskSpec& t) { return factory.for_task(t); }, *evaluator,
      &traces);
  fs::create_directories(ctx.config.output_dir);
  save_dataset(dataset, ctx.config.output_dir / "dataset.jsonl");
  std::ostringstream tr;
  write_traces(traces, tr);
  write_text(ctx.config.output_dir / "collect_traces.jsonl", tr.str());
  out << "collected " << dataset.size() << " experiences from " << req.tasks.size()
      << " tasks x " << req.budgets.size() << " budgets -> "
      << (ctx.config.output_dir / "dataset.jsonl").string() << '\n';
  return kOk;
}

int cmd_train(const Options& o, std::ostream& out) {
  const Context ctx = load_context(o);
  const auto dataset = load_dataset(ctx.config.output_dir / "dataset.jsonl");
  const HashingEmbedder embedder(ctx.config.trainer.shape.embed_dim);
  const auto result = train(dataset, ctx.config.trainer, ctx.config.reward, embedder);
  result.model.save(ctx.config.output_dir / "policy.json");
  nlohmann::json report{{"epoch_scores", result.report.epoch_scores},
                        {"epoch_losses", result.report.epoch_losses},
                        {"best_epoch", result.report.best_epoch},
                        {"best_score", result.report.best_score},
                        {"trainer", ctx.config.trainer.to_json()},
                        {"reward", ctx.config.reward.to_json()},
                        {"experiences", dataset.size()}};
  write_text(ctx.config.output_dir / "train_report.json", report.dump(2) + "\n");
  for (std::size_t e = 0; e < result.report.epoch_scores.size(); ++e) {
    out << "epoch " << e + 1 << ": loss " << fixed(result.report.epoch_losses[e], 6)
        << ", expected reward " << fixed(result.report.epoch_scores[e], 6) << '\n';
  }
  out << "best epoch " << result.report.best_epoch << " (expected reward "
      << fixed(result.report.best_score, 6) << ") -> "
      << (ctx.config.output_dir / "policy.json").string() << '\n';
  return kOk;
}

RunTrace run_one(const Context& ctx, const BackendFactory& factory,
                 const std::optional<PolicyModel>& policy, std::optional<Topology> forced,
                 const TaskSpec& task, double budget, const Evaluator& evaluator) {
  const auto solution = solve(make_problem(ctx, budget));
  if (!solution.feasible) throw Infeasible("provisioning infeasible: " + solution.reason);
  const auto pool = build_pool(solution, ctx.catalog);
  Topology topology;
  if (forced) {
    topology = *forced;
  } else {
    bool allowed[kNumTopologies];
    for (auto t : kAllTopologies) allowed[topology_index(t)] = pool.size() >= min_pool_size(t);
    const HashingEmbedder embedder(policy->params.shape().embed_dim);
    topology = topology_from_index(select_topology(*policy, embedder, task.text, budget,
                                                   SelectMode::Greedy, ctx.config.seed,
                                                   std::span<const bool>(allowed)));
  }
  const auto assignment = assign_roles(pool, topology);
  return execute(task, assignment, topology, budget, factory.for_task(task), evaluator,
                 ctx.profile.execution);
}

int cmd_run(const Options& o, std::ostream& out) {
  const Context ctx = load_context(o);
  std::optional<Topology> forced;
  if (!o.topology.empty()) {
    forced = parse_topology(o.topology);
    if (!forced) throw ConfigError("unknown topology '" + o.topology + "'");
  }
  std::optional<PolicyModel> policy;
  if (!forced) {
    const fs::path weights = o.weights.empty() ? ctx.config.output_dir / "policy.json"
                                               : fs::path(o.weights);
    if (!fs::exists(weights)) {
      throw ConfigError("policy weights " + weights.string() +
                        " not found; run `train` or pass --topology");
    }
    policy = PolicyModel::load(weights);
    std::vector<std::string> names;
    for (auto t : kAllTopologies) names.emplace_back(topology_name(t));
    if (policy->topologies != names) throw ConfigError("policy was trained on other topologies");
  }
  const auto evaluator = make_evaluator(ctx.profile.evaluator);
  BackendFactory factory(ctx);

  if (!o.task_text.empty()) {
    TaskSpec task{"cli", o.task_text, std::nullopt};
    for (const auto& t : ctx.profile.tasks) {
      if (t.spec.text == o.task_text) task = t.spec;
    }
    if (!o.answer.empty()) task.expected_answer = o.answer;
    factory.check_scripts({task});
    const double budget = ctx.budgets.front();
    const auto trace = run_one(ctx, factory, policy, forced, task, budget, *evaluator);
    write_text(ctx.config.output_dir / "trace.json", trace_to_json(trace).dump(2) + "\n");
    out << "topology: " << topology_name(trace.topology) << '\n'
        << "calls: " << trace.calls.size() << '\n'
        << "cost: " << fixed(trace.cumulative_cost) << " / budget " << fixed(budget) << '\n'
        << "answer: " << trace.final_answer.value_or("(none)") << '\n'
        << "success: " << (trace.success ? (*trace.success ? "yes" : "no") : "ungraded") << '\n'
        << "oob: " << (trace.oob ? "yes" : "no") << '\n';
    if (!trace.error.empty()) out << "error: " << trace.error << '\n';
    return kOk;
  }

  const auto tasks = profile_tasks(ctx.profile);
  factory.check_scripts(tasks);
  std::vector<RunTrace> traces;
  for (double budget : ctx.budgets) {
    for (const auto& task : tasks) {
      traces.push_back(run_one(ctx, factory, policy, forced, task, budget, *evaluator));
    }
  }
  std::ostringstream tr;
  write_traces(traces, tr);
  write_text(ctx.config.output_dir / "traces.jsonl", tr.str());
  print_summary(summarize(traces), out);
  return kOk;
}

int cmd_report(const Options& o, std::ostream& out, std::ostream& err) {
  std::ifstream in(o.report_path, std::ios::binary);
  if (!in) throw ConfigError("cannot open traces " + o.report_path);
  std::vector<RunTrace> traces;
  const auto first = in.peek();
  if (first == '{' && o.report_path.ends_with(".json")) {
    traces.push_back(trace_from_json(nlohmann::json::parse(in)));
  } else {
    traces = read_traces(in);
  }
  if (traces.empty()) err << "warning: no traces in " << o.report_path << '\n';
  print_summary(summarize(traces), out);
  return kOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App cli{"Budget-aware multi-agent provisioning, topology selection and execution"};
  cli.require_subcommand(1);
  Options o;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "run configuration (JSON)");
    sub->add_option("--budget", o.budgets, "budget(s) in cost units; overrides the config");
    sub->add_option("--seed", o.seed, "global seed");
    sub->add_option("--jobs", o.jobs, "worker threads");
    sub->add_flag("--mock", o.mock, "use the scripted backends from the task profile");
    sub->add_option("--out", o.out_dir, "output directory; overrides the config");
  };
  auto* provision = cli.add_subcommand("provision", "solve the provisioning ILP");
  add_common(provision);
  provision->add_flag("--explain", o.explain, "print decision weights");
  auto* collect_cmd = cli.add_subcommand("collect", "build the offline experience dataset");
  add_common(collect_cmd);
  auto* train_cmd = cli.add_subcommand("train", "train the topology policy");
  add_common(train_cmd);
  auto* run = cli.add_subcommand("run", "provision, select a topology and execute");
  add_common(run);
  run->add_option("--task", o.task_text, "task text; omit to run every profile task");
  run->add_option("--answer", o.answer, "reference answer for grading --task");
  run->add_option("--topology", o.topology, "linear|star|feedback|planner (skips the policy)");
  run->add_option("--weights", o.weights, "policy weights file");
  auto* report = cli.add_subcommand("report", "summarise a traces file");
  report->add_option("traces", o.report_path, "JSON-lines traces file")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    cli.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << cli.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    if (e.get_exit_code() == 0) return kOk;
    return kUsage;
  }

  try {
    if (*provision) return cmd_provision(o, out);
    if (*collect_cmd) return cmd_collect(o, out);
    if (*train_cmd) return cmd_train(o, out);
    if (*run) return cmd_run(o, out);
    if (*report) return cmd_report(o, out, err);
  } catch (const Infeasible& e) {
    err << "error: " << e.what() << '\n';
    return kInfeasible;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}

}  // namespace budgetflow::app
