#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "budgetflow/catalog.hpp"
#include "budgetflow/error.hpp"
#include "budgetflow/random.hpp"
#include "json.hpp"

namespace budgetflow {

enum class Role { Planner, Executor, Critic };

std::string_view role_name(Role role);
std::optional<Role> parse_role(std::string_view name);

struct CallRequest {
  std::string model;
  Role role = Role::Executor;
  std::string system_prompt;
  std::string user_content;
  TokenCount max_tokens = 384;
  double temperature = 0.0;
};

struct CallResponse {
  std::string text;
  TokenCount prompt_tokens = 0;
  TokenCount completion_tokens = 0;

  bool operator==(const CallResponse&) const = default;
};

class BackendError : public Error {
 public:
  enum class Kind { Transport, Timeout, HttpStatus, Malformed, MissingUsage, ScriptExhausted, Config };
  BackendError(Kind kind, const std::string& what, int http_status = 0)
      : Error(what), kind_(kind), http_status_(http_status) {}
  Kind kind() const { return kind_; }
  int http_status() const { return http_status_; }
  /// Transport failures, timeouts, 429 and 5xx.
  bool retryable() const;

 private:
  Kind kind_;
  int http_status_;
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual CallResponse invoke(const CallRequest& request) = 0;
};

// ---- scripted mock -------------------------------------------------------

struct ScriptedResponse {
  std::string text;
  TokenCount prompt_tokens = 500;
  TokenCount completion_tokens = 0;
};

/// How one role answers. Token counts come from the script, never from the
/// text.
struct RoleScript {
  enum class Exhausted { RepeatLast, Fail };
  std::vector<ScriptedResponse> responses;  // consumed one per call
  Exhausted on_exhausted = Exhausted::RepeatLast;
  // seeded generator: picks text from `choices` uniformly
  std::vector<std::string> choices;
  std::uint64_t generator_seed = 0;
  TokenCount generator_prompt_tokens = 500;
  TokenCount generator_completion_tokens = 0;

  bool is_generator() const { return !choices.empty(); }
  static RoleScript from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
};

struct ScriptedBehavior {
  std::map<Role, RoleScript> roles;
  std::optional<RoleScript> fallback;  // used for roles without their own rule

  bool covers(Role role) const { return fallback.has_value() || roles.contains(role); }
  /// {"default": rule, "executor": rule, "critic": rule, "planner": rule}
  static ScriptedBehavior from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;

  static ScriptedBehavior always(std::string text, TokenCount prompt_tokens,
                                 TokenCount completion_tokens);
};

/// Deterministic replay of a ScriptedBehavior. Each role keeps its own step
/// counter; completion tokens are clamped to the request's max_tokens.
class ScriptedBackend final : public Backend {
 public:
  explicit ScriptedBackend(ScriptedBehavior script);
  CallResponse invoke(const CallRequest& request) override;
  std::size_t calls(Role role) const;

 private:
  ScriptedBehavior script_;
  std::map<Role, std::size_t> steps_;
  std::map<Role, Rng> generators_;
  mutable std::mutex mutex_;
};

// ---- HTTP ----------------------------------------------------------------

/// Token bucket; acquire() blocks until a request may be sent.
class RateLimiter {
 public:
  explicit RateLimiter(double requests_per_second, double burst = 1.0);
  void acquire();

 private:
  using Clock = std::chrono::steady_clock;
  double rate_;
  double capacity_;
  double tokens_;
  Clock::time_point last_;
  std::mutex mutex_;
};

struct HttpBackendOptions {
  std::string base_url;  // POSTs go to <base_url>/chat/completions
  std::string api_key;
  double timeout_seconds = 60.0;
  double retry_backoff_seconds = 1.0;  // first retry waits this long
  int max_retries = 1;
  double requests_per_second = 0.0;

  /// Fills from a catalog endpoint; the key is read from its api_key_env.
  static HttpBackendOptions from_endpoint(const BackendEndpoint& endpoint);
};

/// OpenAI-compatible chat-completions client. Safe for concurrent use.
class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(HttpBackendOptions options);
  CallResponse invoke(const CallRequest& request) override;

  std::uint64_t requests_sent() const { return requests_.load(); }
  std::uint64_t failures() const { return failures_.load(); }

  static nlohmann::json request_body(const CallRequest& request);
  /// Throws BackendError (Malformed / MissingUsage).
  static CallResponse parse_response(const std::string& body);

 private:
  CallResponse attempt(const CallRequest& request);

  HttpBackendOptions options_;
  std::unique_ptr<RateLimiter> limiter_;
  std::atomic<std::uint64_t> requests_{0};
  std::atomic<std::uint64_t> failures_{0};
};

}  // namespace budgetflow
