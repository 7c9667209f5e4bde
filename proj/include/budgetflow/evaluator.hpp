#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "budgetflow/error.hpp"

namespace budgetflow {

class EvaluatorError : public Error {
 public:
  using Error::Error;
};

/// Grades agent output against a reference answer.
class Evaluator {
 public:
  virtual ~Evaluator() = default;
  /// Canonical answer key used for grading and for majority votes; nullopt
  /// when no answer can be extracted.
  virtual std::optional<std::string> normalize(std::string_view output) const = 0;
  virtual bool is_correct(std::string_view output, std::string_view expected) const = 0;
  virtual std::string_view kind() const = 0;
};

/// Final number in the output; text after the last "####" marker wins when
/// present. Thousands separators are ignored.
class NumericMatchEvaluator final : public Evaluator {
 public:
  std::optional<std::string> normalize(std::string_view output) const override;
  bool is_correct(std::string_view output, std::string_view expected) const override;
  std::string_view kind() const override { return "numeric"; }

  static std::optional<double> extract_number(std::string_view output);
};

/// Whitespace-trimmed literal match (after the last "####" if present).
class StringMatchEvaluator final : public Evaluator {
 public:
  std::optional<std::string> normalize(std::string_view output) const override;
  bool is_correct(std::string_view output, std::string_view expected) const override;
  std::string_view kind() const override { return "string"; }
};

/// "numeric" or "string"; throws ConfigError otherwise.
std::unique_ptr<Evaluator> make_evaluator(std::string_view kind);

}  // namespace budgetflow
