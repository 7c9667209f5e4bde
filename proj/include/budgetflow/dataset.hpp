#pragma once

#include <filesystem>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "budgetflow/error.hpp"

namespace budgetflow {

/// One logged run: task, budget, chosen topology and what happened.
struct Experience {
  std::string task_id;
  std::string task_text;
  double budget = 0.0;
  int topology = 0;
  bool success = false;
  double actual_cost = 0.0;
  std::string error;  // annotation when the run itself failed

  bool operator==(const Experience&) const = default;
};

struct DatasetHeader {
  int version = 1;
  std::string catalog_hash;
  std::uint64_t seed = 0;
  std::string collected_at;  // optional; omitted from the file when empty

  bool operator==(const DatasetHeader&) const = default;
};

class DatasetError : public Error {
 public:
  using Error::Error;
};

/// Experiences in insertion order. Each (task_id, budget, topology) triple
/// appears at most once.
class ExperienceDataset {
 public:
  using GroupKey = std::pair<std::string, double>;

  ExperienceDataset() = default;
  explicit ExperienceDataset(DatasetHeader header) : header_(std::move(header)) {}

  /// Throws DatasetError on a duplicate triple or invalid fields.
  void add(Experience e);

  const DatasetHeader& header() const { return header_; }
  DatasetHeader& header() { return header_; }
  const std::vector<Experience>& experiences() const { return experiences_; }
  std::size_t size() const { return experiences_.size(); }
  bool empty() const { return experiences_.empty(); }

  /// Indices into experiences() per (task_id, budget), in first-seen order.
  std::vector<std::pair<GroupKey, std::vector<std::size_t>>> groups() const;

  bool operator==(const ExperienceDataset& other) const {
    return header_ == other.header_ && experiences_ == other.experiences_;
  }

 private:
  DatasetHeader header_;
  std::vector<Experience> experiences_;
  std::map<std::tuple<std::string, double, int>, std::size_t> index_;
};

/// JSON-lines: a header object followed by one experience per line.
void save_dataset(const ExperienceDataset& dataset, std::ostream& out);
void save_dataset(const ExperienceDataset& dataset, const std::filesystem::path& path);
ExperienceDataset load_dataset(std::istream& in);
ExperienceDataset load_dataset(const std::filesystem::path& path);

}  // namespace budgetflow
