#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "budgetflow/app.hpp"
#include "../support/fixtures.hpp"

namespace budgetflow {
namespace {

namespace fs = std::filesystem;

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = app::run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("budgetflow_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    write(dir_ / "catalog.json", testing::two_tier_catalog().to_json().dump());
    profile_ = nlohmann::json::parse(R"({
      "t_in": 500,
      "t_out": {"deepseek-chat": 1000, "gpt-4.1-nano": 500},
      "evaluator": "numeric",
      "mock": {"executor": {"text": "#### 4", "completion_tokens": 50},
               "critic": {"text": "ACCEPT", "completion_tokens": 5},
               "planner": {"text": "1. add", "completion_tokens": 10}},
      "tasks": [{"id": "a", "text": "What is 2 + 2?", "answer": "4"},
                {"id": "b", "text": "What is 1 + 3?", "answer": "4"}]
    })");
    save_profile();
    write(dir_ / "config.json", R"({"catalog": "catalog.json", "profile": "profile.json",
      "budgets": [2000], "mock": true, "trainer": {"epochs": 2}})");
  }
  void TearDown() override { fs::remove_all(dir_); }

  void save_profile() { write(dir_ / "profile.json", profile_.dump()); }
  std::string config() const { return (dir_ / "config.json").string(); }
  fs::path out() const { return dir_ / "out"; }

  fs::path dir_;
  nlohmann::json profile_;
};

TEST_F(CliTest, ProvisionExplain) {
  const auto r = cli({"provision", "--config", config(), "--explain"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("1 x deepseek-chat, 3 x gpt-4.1-nano"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("cost 1985.0"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("W = 9"), std::string::npos);
  const auto doc = nlohmann::json::parse(slurp(out() / "provision.json"));
  EXPECT_EQ(doc["solutions"][0]["counts"], nlohmann::json({1, 3}));
  EXPECT_EQ(doc["solutions"][0]["total_weight"], "12");
}

TEST_F(CliTest, ProvisionInfeasibleExitCode) {
  const auto r = cli({"provision", "--config", config(), "--budget", "300"});
  EXPECT_EQ(r.code, app::kInfeasible);
  EXPECT_NE(r.out.find("infeasible"), std::string::npos);
}

TEST_F(CliTest, CollectWithNoTasks) {
  profile_["tasks"] = nlohmann::json::array();
  save_profile();
  ASSERT_EQ(cli({"provision", "--config", config()}).code, 0);
  const auto r = cli({"collect", "--config", config()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto text = slurp(out() / "dataset.jsonl");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 1);
}

TEST_F(CliTest, CollectNeedsScriptForEveryRole) {
  profile_["mock"].erase("critic");
  save_profile();
  ASSERT_EQ(cli({"provision", "--config", config()}).code, 0);
  const auto r = cli({"collect", "--config", config()});
  EXPECT_EQ(r.code, app::kUsage);
  EXPECT_NE(r.err.find("critic"), std::string::npos) << r.err;
}

TEST_F(CliTest, CollectBeforeProvisionFails) {
  EXPECT_EQ(cli({"collect", "--config", config()}).code, app::kUsage);
}

TEST_F(CliTest, TrainRejectsZeroEpochs) {
  write(dir_ / "config.json", R"({"catalog": "catalog.json", "profile": "profile.json",
    "budgets": [2000], "mock": true, "trainer": {"epochs": 0}})");
  const auto r = cli({"train", "--config", config()});
  EXPECT_EQ(r.code, app::kUsage);
  EXPECT_FALSE(r.err.empty());
}

TEST_F(CliTest, FullPipeline) {
  ASSERT_EQ(cli({"provision", "--config", config()}).code, 0);
  ASSERT_EQ(cli({"collect", "--config", config()}).code, 0);
  const auto t = cli({"train", "--config", config()});
  ASSERT_EQ(t.code, 0) << t.err;
  EXPECT_TRUE(fs::exists(out() / "policy.json"));
  EXPECT_TRUE(fs::exists(out() / "train_report.json"));
  const auto r = cli({"run", "--config", config()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("Runs: 2"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("Acc: 100.0%"), std::string::npos) << r.out;
}

TEST_F(CliTest, RunForcedTopology) {
  const auto r = cli({"run", "--config", config(), "--task", "What is 2 + 2?", "--topology",
                      "feedback"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("topology: feedback"), std::string::npos);
  // deepseek critic audits the relay of three nano executors
  EXPECT_NE(r.out.find("calls: 4"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("success: yes"), std::string::npos);
  const auto trace = nlohmann::json::parse(slurp(out() / "trace.json"));
  EXPECT_EQ(trace["topology"], "feedback");
}

TEST_F(CliTest, RunInfeasibleBudget) {
  const auto r = cli({"run", "--config", config(), "--budget", "300", "--task", "What is 2 + 2?",
                      "--topology", "linear"});
  EXPECT_EQ(r.code, app::kInfeasible);
  EXPECT_NE(r.err.find("infeasible"), std::string::npos);
}

TEST_F(CliTest, RunWithoutWeightsFails) {
  const auto r = cli({"run", "--config", config(), "--task", "What is 2 + 2?"});
  EXPECT_EQ(r.code, app::kUsage);
  EXPECT_NE(r.err.find("--topology"), std::string::npos) << r.err;
}

TEST_F(CliTest, ReportSummary) {
  std::ostringstream lines;
  const double costs[] = {100, 200, 300, 400};
  const bool ok[] = {true, true, true, false};
  const Topology topo[] = {Topology::Linear, Topology::Star, Topology::Star, Topology::Feedback};
  std::vector<RunTrace> traces;
  for (int i = 0; i < 4; ++i) {
    RunTrace t;
    t.task_id = "t" + std::to_string(i);
    t.topology = topo[i];
    t.budget = 350;
    t.cumulative_cost = costs[i];
    t.success = ok[i];
    t.oob = costs[i] > 350;
    traces.push_back(t);
  }
  write_traces(traces, lines);
  write(dir_ / "traces.jsonl", lines.str());
  const auto r = cli({"report", (dir_ / "traces.jsonl").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("Runs: 4"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("Acc: 75.0%"), std::string::npos);
  EXPECT_NE(r.out.find("Avg Cost: 250.0"), std::string::npos);
  EXPECT_NE(r.out.find("OOB: 1/4"), std::string::npos);
  EXPECT_NE(r.out.find("star"), std::string::npos);
}

TEST_F(CliTest, ReportEmptyFile) {
  write(dir_ / "empty.jsonl", "");
  const auto r = cli({"report", (dir_ / "empty.jsonl").string()});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.err.find("warning"), std::string::npos);
  EXPECT_NE(r.out.find("Runs: 0"), std::string::npos);
}

TEST_F(CliTest, UnknownSubcommand) {
  EXPECT_EQ(cli({"frobnicate"}).code, app::kUsage);
  EXPECT_EQ(cli({}).code, app::kUsage);
}

TEST(DemoConfig, LoadsAndProvisions) {
  const auto cfg = app::RunConfig::load(fs::path(BUDGETFLOW_DEMO_DIR) / "config.json");
  EXPECT_EQ(cfg.budgets, (std::vector<double>{500, 2000}));
  const auto profile = app::TaskProfile::load(cfg.profile_path);
  EXPECT_FALSE(profile.tasks.empty());
  for (const auto& t : profile.tasks) EXPECT_NE(profile.script_for(t.spec), nullptr);
}

}  // namespace
}  // namespace budgetflow
