#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "budgetflow/backend.hpp"
#include "budgetflow/catalog.hpp"
#include "budgetflow/collect.hpp"
#include "budgetflow/policy.hpp"
#include "budgetflow/reward.hpp"
#include "budgetflow/topology.hpp"

namespace budgetflow::app {

enum ExitCode : int { kOk = 0, kUsage = 1, kInfeasible = 2 };

/// Task profile: the tasks plus everything needed to cost and run them.
struct TaskProfile {
  TokenCount t_in = 500;
  TokenCount t_out = 500;
  std::map<std::string, TokenCount> t_out_by_model;
  ExecutionConfig execution;
  std::string evaluator = "numeric";
  std::optional<ScriptedBehavior> mock;  // profile-wide script
  struct Task {
    TaskSpec spec;
    std::optional<ScriptedBehavior> mock;  // overrides the profile script
  };
  std::vector<Task> tasks;

  static TaskProfile from_json(const nlohmann::json& doc);
  static TaskProfile load(const std::filesystem::path& path);
  /// Script for a task: its own, else the profile's, else nullptr.
  const ScriptedBehavior* script_for(const TaskSpec& task) const;
};

struct RunConfig {
  std::filesystem::path catalog_path;
  std::filesystem::path profile_path;
  std::vector<double> budgets;
  std::uint64_t seed = 42;
  std::filesystem::path output_dir = "out";
  RewardConfig reward;
  TrainerConfig trainer;
  int instance_cap = 5;
  int min_agents = 2;
  bool mock = false;
  int jobs = 1;
  std::string collection_date;

  /// Relative paths resolve against the config file's directory.
  static RunConfig load(const std::filesystem::path& path);
  static RunConfig from_json(const nlohmann::json& doc, const std::filesystem::path& base);
};

struct ReportSummary {
  std::size_t runs = 0;
  std::size_t graded = 0;
  std::size_t successes = 0;
  double accuracy_pct = 0.0;
  double avg_cost = 0.0;
  std::size_t oob = 0;
  std::map<std::string, std::size_t> topology_counts;
};

ReportSummary summarize(std::span<const RunTrace> traces);
void print_summary(const ReportSummary& summary, std::ostream& out);

/// Entry point shared by the executable and the tests. `args` excludes the
/// program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace budgetflow::app
