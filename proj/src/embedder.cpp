#include "budgetflow/embedder.hpp"

#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdlib>

#include "http_url.hpp"
#include "httplib.h"
#include "json.hpp"

namespace budgetflow {

namespace {

std::uint64_t fnv1a(std::string_view s, std::uint64_t seed = 0xcbf29ce484222325ULL) {
  std::uint64_t h = seed;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  // splitmix64 finaliser
  h ^= h >> 30;
  h *= 0xbf58476d1ce4e5b9ULL;
  h ^= h >> 27;
  h *= 0x94d049bb133111ebULL;
  h ^= h >> 31;
  return h;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j == i) break;
    std::string raw(text.substr(i, j - i));
    for (char& c : raw) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    // strip surrounding punctuation unless nothing would remain
    std::size_t a = 0, b = raw.size();
    while (a < b && std::ispunct(static_cast<unsigned char>(raw[a]))) ++a;
    while (b > a && std::ispunct(static_cast<unsigned char>(raw[b - 1]))) --b;
    tokens.push_back(a < b ? raw.substr(a, b - a) : raw);
    i = j;
  }
  return tokens;
}

}  // namespace

void l2_normalize(std::vector<double>& values) {
  double sq = 0.0;
  for (double v : values) sq += v * v;
  if (sq == 0.0) return;
  const double inv = 1.0 / std::sqrt(sq);
  for (double& v : values) v *= inv;
}

HashingEmbedder::HashingEmbedder(std::size_t dim) : dim_(dim) {
  if (dim_ == 0) throw Error("embedding dimension must be positive");
}

TaskEmbedding HashingEmbedder::embed(std::string_view text) const {
  TaskEmbedding out{std::vector<double>(dim_, 0.0)};
  const auto tokens = tokenize(text);
  if (tokens.empty()) return out;
  auto add = [&](std::string_view feature) {
    const std::uint64_t h = fnv1a(feature);
    const double sign = (h >> 63) ? -1.0 : 1.0;
    out.values[h % dim_] += sign;
  };
  for (std::size_t k = 0; k < tokens.size(); ++k) {
    add(tokens[k]);
    if (k + 1 < tokens.size()) add(tokens[k] + ' ' + tokens[k + 1]);
  }
  double sq = 0.0;
  for (double v : out.values) sq += v * v;
  if (sq == 0.0) {
    // every feature cancelled out; fall back to one bucket for the whole text
    out.values[fnv1a(text, 0x84222325cbf29ce4ULL) % dim_] = 1.0;
  }
  l2_normalize(out.values);
  return out;
}

RemoteEmbedder::RemoteEmbedder(Options options) : options_(std::move(options)) {
  if (options_.endpoint.empty()) {
    throw ConfigError("remote embedder endpoint is not configured");
  }
  if (options_.dim == 0) throw ConfigError("embedding dimension must be positive");
}

RemoteEmbedder RemoteEmbedder::from_env(std::size_t dim) {
  Options o;
  if (const char* url = std::getenv("BUDGETFLOW_EMBED_URL")) o.endpoint = url;
  if (const char* tok = std::getenv("BUDGETFLOW_EMBED_TOKEN")) o.auth_token = tok;
  o.dim = dim;
  return RemoteEmbedder(std::move(o));
}

TaskEmbedding RemoteEmbedder::embed(std::string_view text) const {
  const auto url = detail::split_url(options_.endpoint);
  httplib::Client client(url.origin);
  const auto secs = static_cast<time_t>(options_.timeout_seconds);
  client.set_connection_timeout(secs, 0);
  client.set_read_timeout(secs, 0);
  httplib::Headers headers;
  if (!options_.auth_token.empty()) {
    headers.emplace("Authorization", "Bearer " + options_.auth_token);
  }
  const nlohmann::json body{{"input", std::string(text)}};
  auto res = client.Post(url.path.empty() ? "/" : url.path, headers, body.dump(),
                         "application/json");
  if (!res) {
    throw EmbedError(EmbedError::Kind::Network,
                     "embedding request failed: " + httplib::to_string(res.error()));
  }
  if (res->status < 200 || res->status >= 300) {
    throw EmbedError(EmbedError::Kind::Network,
                     "embedding service returned HTTP " + std::to_string(res->status));
  }
  std::vector<double> values;
  try {
    const auto doc = nlohmann::json::parse(res->body);
    values = doc.at("embedding").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw EmbedError(EmbedError::Kind::Malformed,
                     std::string("malformed embedding response: ") + e.what());
  }
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw EmbedError(EmbedError::Kind::Malformed, "non-finite embedding value");
    }
  }
  if (values.empty() ||
      (options_.strict_dimension && values.size() != options_.dim)) {
    throw EmbedError(EmbedError::Kind::Dimension,
                     "embedding has " + std::to_string(values.size()) +
                         " values, expected " + std::to_string(options_.dim));
  }
  values.resize(options_.dim, 0.0);
  l2_normalize(values);
  return {std::move(values)};
}

}  // namespace budgetflow
