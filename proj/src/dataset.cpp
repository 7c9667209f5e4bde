#include "budgetflow/dataset.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <tuple>

#include "budgetflow/topology_kind.hpp"
#include "json.hpp"

namespace budgetflow {

namespace {

std::string describe(const Experience& e) {
  std::ostringstream os;
  os << "(task " << e.task_id << ", budget " << e.budget << ", topology "
     << e.topology << ")";
  return os.str();
}

nlohmann::json to_json(const Experience& e) {
  nlohmann::json j{{"task_id", e.task_id},   {"task_text", e.task_text},
                   {"budget", e.budget},     {"topology", e.topology},
                   {"success", e.success},   {"actual_cost", e.actual_cost}};
  if (!e.error.empty()) j["error"] = e.error;
  return j;
}

}  // namespace

void ExperienceDataset::add(Experience e) {
  if (e.topology < 0 || e.topology >= static_cast<int>(kNumTopologies)) {
    throw DatasetError("topology index out of range in " + describe(e));
  }
  if (!(e.actual_cost >= 0.0) || !std::isfinite(e.actual_cost)) {
    throw DatasetError("invalid actual_cost in " + describe(e));
  }
  if (!(e.budget > 0.0) || !std::isfinite(e.budget)) {
    throw DatasetError("invalid budget in " + describe(e));
  }
  auto key = std::make_tuple(e.task_id, e.budget, e.topology);
  if (index_.contains(key)) throw DatasetError("duplicate experience " + describe(e));
  index_.emplace(std::move(key), experiences_.size());
  experiences_.push_back(std::move(e));
}

std::vector<std::pair<ExperienceDataset::GroupKey, std::vector<std::size_t>>>
ExperienceDataset::groups() const {
  std::vector<std::pair<GroupKey, std::vector<std::size_t>>> out;
  std::map<GroupKey, std::size_t> where;
  for (std::size_t i = 0; i < experiences_.size(); ++i) {
    GroupKey key{experiences_[i].task_id, experiences_[i].budget};
    auto [it, fresh] = where.emplace(key, out.size());
    if (fresh) out.push_back({key, {}});
    out[it->second].second.push_back(i);
  }
  return out;
}

void save_dataset(const ExperienceDataset& dataset, std::ostream& out) {
  const auto& h = dataset.header();
  nlohmann::json header{{"version", h.version},
                        {"catalog_hash", h.catalog_hash},
                        {"seed", h.seed}};
  if (!h.collected_at.empty()) header["collected_at"] = h.collected_at;
  out << header.dump() << '\n';
  for (const auto& e : dataset.experiences()) out << to_json(e).dump() << '\n';
}

void save_dataset(const ExperienceDataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DatasetError("cannot write " + path.string());
  save_dataset(dataset, out);
}

ExperienceDataset load_dataset(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  ExperienceDataset dataset;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DatasetError("line " + std::to_string(line_no) + ": " + e.what());
    }
    try {
      if (!have_header) {
        DatasetHeader h;
        h.version = j.at("version").get<int>();
        if (h.version != 1) {
          throw DatasetError("line " + std::to_string(line_no) +
                             ": unsupported dataset version " + std::to_string(h.version));
        }
        h.catalog_hash = j.value("catalog_hash", std::string{});
        h.seed = j.value("seed", std::uint64_t{0});
        h.collected_at = j.value("collected_at", std::string{});
        dataset = ExperienceDataset(std::move(h));
        have_header = true;
        continue;
      }
      Experience e;
      e.task_id = j.at("task_id").get<std::string>();
      e.task_text = j.at("task_text").get<std::string>();
      e.budget = j.at("budget").get<double>();
      e.topology = j.at("topology").get<int>();
      e.success = j.at("success").get<bool>();
      e.actual_cost = j.at("actual_cost").get<double>();
      e.error = j.value("error", std::string{});
      dataset.add(std::move(e));
    } catch (const nlohmann::json::exception& e) {
      throw DatasetError("line " + std::to_string(line_no) + ": " + e.what());
    } catch (const DatasetError& e) {
      const std::string msg = e.what();
      if (msg.rfind("line ", 0) == 0) throw;
      throw DatasetError("line " + std::to_string(line_no) + ": " + msg);
    }
  }
  if (!have_header) throw DatasetError("dataset has no header line");
  return dataset;
}

ExperienceDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open " + path.string());
  return load_dataset(in);
}

}  // namespace budgetflow
