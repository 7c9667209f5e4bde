#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "budgetflow/error.hpp"

namespace budgetflow {

inline constexpr std::size_t kDefaultEmbeddingDim = 384;

struct TaskEmbedding {
  std::vector<double> values;
};

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual TaskEmbedding embed(std::string_view text) const = 0;
  virtual std::size_t dim() const = 0;
};

/// Signed feature hashing of word unigrams and bigrams, L2-normalised.
/// Whitespace-only text maps to the zero vector.
class HashingEmbedder final : public Embedder {
 public:
  explicit HashingEmbedder(std::size_t dim = kDefaultEmbeddingDim);
  TaskEmbedding embed(std::string_view text) const override;
  std::size_t dim() const override { return dim_; }

 private:
  std::size_t dim_;
};

class EmbedError : public Error {
 public:
  enum class Kind { Network, Malformed, Dimension };
  EmbedError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Client for an HTTP embedding service: POST {"input": text} and read
/// {"embedding": [...]}. Not internally synchronised; use one per thread.
class RemoteEmbedder final : public Embedder {
 public:
  struct Options {
    std::string endpoint;  // e.g. http://localhost:8080/embed
    std::string auth_token;
    std::size_t dim = kDefaultEmbeddingDim;
    bool strict_dimension = false;  // reject instead of truncate/pad
    double timeout_seconds = 30.0;
  };

  explicit RemoteEmbedder(Options options);
  /// Reads BUDGETFLOW_EMBED_URL and BUDGETFLOW_EMBED_TOKEN.
  static RemoteEmbedder from_env(std::size_t dim = kDefaultEmbeddingDim);

  TaskEmbedding embed(std::string_view text) const override;
  std::size_t dim() const override { return options_.dim; }

 private:
  Options options_;
};

/// Scales to unit L2 norm; the zero vector is left alone.
void l2_normalize(std::vector<double>& values);

}  // namespace budgetflow
