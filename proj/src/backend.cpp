#include "budgetflow/backend.hpp"

#include <cstdlib>
#include <thread>

#include "http_url.hpp"
#include "httplib.h"

namespace budgetflow {

std::string_view role_name(Role role) {
  switch (role) {
    case Role::Planner: return "planner";
    case Role::Executor: return "executor";
    case Role::Critic: return "critic";
  }
  return "?";
}

std::optional<Role> parse_role(std::string_view name) {
  if (name == "planner") return Role::Planner;
  if (name == "executor") return Role::Executor;
  if (name == "critic") return Role::Critic;
  return std::nullopt;
}

bool BackendError::retryable() const {
  switch (kind_) {
    case Kind::Transport:
    case Kind::Timeout:
      return true;
    case Kind::HttpStatus:
      return http_status_ == 429 || http_status_ >= 500;
    default:
      return false;
  }
}

// ---- scripted mock -------------------------------------------------------

namespace {

ScriptedResponse response_from_json(const nlohmann::json& j, TokenCount default_prompt) {
  ScriptedResponse r;
  r.text = j.value("text", std::string{});
  r.prompt_tokens = j.value("prompt_tokens", default_prompt);
  r.completion_tokens = j.value("completion_tokens", TokenCount{0});
  if (r.prompt_tokens < 0 || r.completion_tokens < 0) {
    throw ConfigError("mock script token counts must be >= 0");
  }
  return r;
}

nlohmann::json response_to_json(const ScriptedResponse& r) {
  return {{"text", r.text},
          {"prompt_tokens", r.prompt_tokens},
          {"completion_tokens", r.completion_tokens}};
}

}  // namespace

RoleScript RoleScript::from_json(const nlohmann::json& doc) {
  RoleScript s;
  try {
    const TokenCount prompt = doc.value("prompt_tokens", TokenCount{500});
    if (doc.contains("responses")) {
      for (const auto& item : doc.at("responses")) {
        s.responses.push_back(response_from_json(item, prompt));
      }
      const auto then = doc.value("then", std::string{"repeat_last"});
      if (then == "error") {
        s.on_exhausted = Exhausted::Fail;
      } else if (then != "repeat_last") {
        throw ConfigError("mock script 'then' must be repeat_last or error");
      }
      if (s.responses.empty()) throw ConfigError("mock script has no responses");
    } else if (doc.contains("generate")) {
      const auto& g = doc.at("generate");
      s.choices = g.at("choices").get<std::vector<std::string>>();
      s.generator_seed = g.value("seed", std::uint64_t{0});
      s.generator_prompt_tokens = prompt;
      s.generator_completion_tokens = doc.value("completion_tokens", TokenCount{0});
      if (s.choices.empty()) throw ConfigError("mock generator has no choices");
    } else {
      s.responses.push_back(response_from_json(doc, prompt));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("mock script: ") + e.what());
  }
  return s;
}

nlohmann::json RoleScript::to_json() const {
  if (is_generator()) {
    return {{"generate", {{"choices", choices}, {"seed", generator_seed}}},
            {"prompt_tokens", generator_prompt_tokens},
            {"completion_tokens", generator_completion_tokens}};
  }
  nlohmann::json list = nlohmann::json::array();
  for (const auto& r : responses) list.push_back(response_to_json(r));
  return {{"responses", list},
          {"then", on_exhausted == Exhausted::Fail ? "error" : "repeat_last"}};
}

ScriptedBehavior ScriptedBehavior::from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("mock script must be an object");
  ScriptedBehavior b;
  for (const auto& [key, value] : doc.items()) {
    if (key == "default") {
      b.fallback = RoleScript::from_json(value);
    } else if (auto role = parse_role(key)) {
      b.roles[*role] = RoleScript::from_json(value);
    } else {
      throw ConfigError("mock script has unknown role '" + key + "'");
    }
  }
  return b;
}

nlohmann::json ScriptedBehavior::to_json() const {
  nlohmann::json doc = nlohmann::json::object();
  if (fallback) doc["default"] = fallback->to_json();
  for (const auto& [role, script] : roles) doc[std::string(role_name(role))] = script.to_json();
  return doc;
}

ScriptedBehavior ScriptedBehavior::always(std::string text, TokenCount prompt_tokens,
                                          TokenCount completion_tokens) {
  ScriptedBehavior b;
  RoleScript s;
  s.responses.push_back({std::move(text), prompt_tokens, completion_tokens});
  b.fallback = std::move(s);
  return b;
}

ScriptedBackend::ScriptedBackend(ScriptedBehavior script) : script_(std::move(script)) {
  auto seed_role = [this](Role role, const RoleScript& s) {
    if (s.is_generator()) generators_.emplace(role, Rng(s.generator_seed));
  };
  for (const auto& [role, s] : script_.roles) seed_role(role, s);
  if (script_.fallback) {
    for (Role role : {Role::Planner, Role::Executor, Role::Critic}) {
      if (!script_.roles.contains(role)) seed_role(role, *script_.fallback);
    }
  }
}

CallResponse ScriptedBackend::invoke(const CallRequest& request) {
  std::lock_guard lock(mutex_);
  auto it = script_.roles.find(request.role);
  const RoleScript* s = it != script_.roles.end() ? &it->second
                        : script_.fallback        ? &*script_.fallback
                                                  : nullptr;
  if (s == nullptr) {
    throw BackendError(BackendError::Kind::Config,
                       "no mock script for role " + std::string(role_name(request.role)));
  }
  const std::size_t step = steps_[request.role]++;
  ScriptedResponse r;
  if (s->is_generator()) {
    auto& rng = generators_.at(request.role);
    r.text = s->choices[uniform_index(rng, s->choices.size())];
    r.prompt_tokens = s->generator_prompt_tokens;
    r.completion_tokens = s->generator_completion_tokens;
  } else if (step < s->responses.size()) {
    r = s->responses[step];
  } else if (s->on_exhausted == RoleScript::Exhausted::RepeatLast) {
    r = s->responses.back();
  } else {
    throw BackendError(BackendError::Kind::ScriptExhausted,
                       "mock script for role " + std::string(role_name(request.role)) +
                           " exhausted after " + std::to_string(s->responses.size()) +
                           " responses");
  }
  return {r.text, r.prompt_tokens, std::min(r.completion_tokens, request.max_tokens)};
}

std::size_t ScriptedBackend::calls(Role role) const {
  std::lock_guard lock(mutex_);
  auto it = steps_.find(role);
  return it == steps_.end() ? 0 : it->second;
}

// ---- HTTP ----------------------------------------------------------------

RateLimiter::RateLimiter(double requests_per_second, double burst)
    : rate_(requests_per_second), capacity_(burst), tokens_(burst), last_(Clock::now()) {}

void RateLimiter::acquire() {
  if (rate_ <= 0.0) return;
  std::unique_lock lock(mutex_);
  while (true) {
    const auto now = Clock::now();
    tokens_ = std::min(capacity_,
                       tokens_ + std::chrono::duration<double>(now - last_).count() * rate_);
    last_ = now;
    if (tokens_ >= 1.0) {
      tokens_ -= 1.0;
      return;
    }
    const double wait = (1.0 - tokens_) / rate_;
    lock.unlock();
    std::this_thread::sleep_for(std::chrono::duration<double>(wait));
    lock.lock();
  }
}

HttpBackendOptions HttpBackendOptions::from_endpoint(const BackendEndpoint& endpoint) {
  HttpBackendOptions o;
  o.base_url = endpoint.base_url;
  o.timeout_seconds = endpoint.timeout_seconds;
  o.requests_per_second = endpoint.requests_per_second;
  if (!endpoint.api_key_env.empty()) {
    const char* key = std::getenv(endpoint.api_key_env.c_str());
    if (key == nullptr) {
      throw ConfigError("environment variable " + endpoint.api_key_env + " is not set");
    }
    o.api_key = key;
  }
  return o;
}

HttpBackend::HttpBackend(HttpBackendOptions options) : options_(std::move(options)) {
  if (options_.base_url.empty()) throw ConfigError("HTTP backend needs a base_url");
  if (options_.requests_per_second > 0.0) {
    limiter_ = std::make_unique<RateLimiter>(options_.requests_per_second);
  }
}

nlohmann::json HttpBackend::request_body(const CallRequest& request) {
  nlohmann::json messages = nlohmann::json::array();
  if (!request.system_prompt.empty()) {
    messages.push_back({{"role", "system"}, {"content", request.system_prompt}});
  }
  messages.push_back({{"role", "user"}, {"content", request.user_content}});
  return {{"model", request.model},
          {"messages", messages},
          {"temperature", request.temperature},
          {"max_tokens", request.max_tokens}};
}

CallResponse HttpBackend::parse_response(const std::string& body) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw BackendError(BackendError::Kind::Malformed,
                       std::string("response is not JSON: ") + e.what());
  }
  CallResponse out;
  try {
    const auto& content = doc.at("choices").at(0).at("message").at("content");
    out.text = content.is_null() ? std::string{} : content.get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw BackendError(BackendError::Kind::Malformed,
                       std::string("response has no message content: ") + e.what());
  }
  try {
    const auto& usage = doc.at("usage");
    out.prompt_tokens = usage.at("prompt_tokens").get<TokenCount>();
    out.completion_tokens = usage.at("completion_tokens").get<TokenCount>();
  } catch (const nlohmann::json::exception& e) {
    throw BackendError(BackendError::Kind::MissingUsage,
                       std::string("response lacks usage token counts: ") + e.what());
  }
  if (out.prompt_tokens < 0 || out.completion_tokens < 0) {
    throw BackendError(BackendError::Kind::Malformed, "negative usage token counts");
  }
  return out;
}

CallResponse HttpBackend::attempt(const CallRequest& request) {
  if (limiter_) limiter_->acquire();
  const auto url = detail::split_url(options_.base_url);
  httplib::Client client(url.origin);
  const auto secs = static_cast<time_t>(options_.timeout_seconds);
  const auto usecs = static_cast<time_t>(
      (options_.timeout_seconds - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  if (!options_.api_key.empty()) headers.emplace("Authorization", "Bearer " + options_.api_key);

  ++requests_;
  auto res = client.Post(url.path + "/chat/completions", headers,
                         request_body(request).dump(), "application/json");
  if (!res) {
    const auto err = res.error();
    const auto kind = err == httplib::Error::Read || err == httplib::Error::Write ||
                              err == httplib::Error::ConnectionTimeout
                          ? BackendError::Kind::Timeout
                          : BackendError::Kind::Transport;
    throw BackendError(kind, "request to " + options_.base_url +
                                 " failed: " + httplib::to_string(err));
  }
  if (res->status < 200 || res->status >= 300) {
    throw BackendError(BackendError::Kind::HttpStatus,
                       "HTTP " + std::to_string(res->status) + " from " + options_.base_url,
                       res->status);
  }
  return parse_response(res->body);
}

CallResponse HttpBackend::invoke(const CallRequest& request) {
  double backoff = options_.retry_backoff_seconds;
  for (int tries = 0;; ++tries) {
    try {
      return attempt(request);
    } catch (const BackendError& e) {
      ++failures_;
      if (!e.retryable() || tries >= options_.max_retries) throw;
    }
    std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
    backoff *= 2.0;
  }
}

}  // namespace budgetflow
