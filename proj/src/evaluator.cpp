#include "budgetflow/evaluator.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <regex>

namespace budgetflow {

namespace {

std::string_view after_marker(std::string_view text) {
  const auto pos = text.rfind("####");
  return pos == std::string_view::npos ? text : text.substr(pos + 4);
}

std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

std::string canonical(double v) {
  if (v == 0.0) v = 0.0;  // drop negative zero
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.15g", v);
  return buf;
}

}  // namespace

std::optional<double> NumericMatchEvaluator::extract_number(std::string_view output) {
  static const std::regex number(R"(-?\$?\d[\d,]*(?:\.\d+)?|-?\.\d+)");
  const bool marked = output.rfind("####") != std::string_view::npos;
  const std::string text(after_marker(output));
  std::optional<std::string> found;
  for (std::sregex_iterator it(text.begin(), text.end(), number), end; it != end; ++it) {
    found = it->str();
    if (marked) break;  // first number after the marker
  }
  if (!found) return std::nullopt;
  std::string digits;
  for (char c : *found) {
    if (c != ',' && c != '$') digits += c;
  }
  try {
    return std::stod(digits);
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

std::optional<std::string> NumericMatchEvaluator::normalize(std::string_view output) const {
  const auto v = extract_number(output);
  if (!v) return std::nullopt;
  return canonical(*v);
}

bool NumericMatchEvaluator::is_correct(std::string_view output,
                                       std::string_view expected) const {
  const auto want = extract_number(expected);
  if (!want) {
    throw EvaluatorError("reference answer '" + std::string(expected) + "' is not numeric");
  }
  const auto got = extract_number(output);
  if (!got) return false;
  return std::abs(*got - *want) <= 1e-9 * std::max(1.0, std::abs(*want));
}

std::optional<std::string> StringMatchEvaluator::normalize(std::string_view output) const {
  auto s = trim(after_marker(output));
  if (s.empty()) return std::nullopt;
  return s;
}

bool StringMatchEvaluator::is_correct(std::string_view output,
                                      std::string_view expected) const {
  const auto got = normalize(output);
  return got.has_value() && *got == trim(expected);
}

std::unique_ptr<Evaluator> make_evaluator(std::string_view kind) {
  if (kind == "numeric") return std::make_unique<NumericMatchEvaluator>();
  if (kind == "string") return std::make_unique<StringMatchEvaluator>();
  throw ConfigError("unknown evaluator '" + std::string(kind) + "'");
}

}  // namespace budgetflow
