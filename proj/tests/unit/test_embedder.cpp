#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "budgetflow/embedder.hpp"
#include "json.hpp"
#include "../support/local_server.hpp"

namespace budgetflow {
namespace {

double norm(const std::vector<double>& v) {
  return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0) / (norm(a) * norm(b));
}

TEST(HashingEmbedder, EmptyAndWhitespaceGiveZeroVector) {
  HashingEmbedder e;
  for (const char* text : {"", "   ", "\t\n "}) {
    const auto v = e.embed(text).values;
    ASSERT_EQ(v.size(), 384u);
    EXPECT_EQ(norm(v), 0.0);
  }
}

TEST(HashingEmbedder, DeterministicAcrossInstances) {
  const std::string text = "Natalia sold clips to 48 of her friends in April.";
  EXPECT_EQ(HashingEmbedder().embed(text).values, HashingEmbedder().embed(text).values);
}

TEST(HashingEmbedder, UnitNorm) {
  HashingEmbedder e;
  for (const char* text : {"a", "add two numbers", "What is 17 * 23 ?", "x x x x"}) {
    EXPECT_NEAR(norm(e.embed(text).values), 1.0, 1e-9) << text;
  }
}

TEST(HashingEmbedder, DistinctSentencesAreNotParallel) {
  HashingEmbedder e;
  std::vector<std::vector<double>> vs;
  for (int i = 0; i < 100; ++i) {
    vs.push_back(e.embed("task number " + std::to_string(i) + " asks for " +
                         std::to_string(i * 7 + 3) + " apples")
                     .values);
  }
  for (std::size_t i = 0; i < vs.size(); ++i) {
    for (std::size_t j = i + 1; j < vs.size(); ++j) {
      EXPECT_LT(cosine(vs[i], vs[j]), 1.0 - 1e-9) << i << " vs " << j;
    }
  }
}

TEST(HashingEmbedder, CustomDimension) {
  HashingEmbedder e(16);
  EXPECT_EQ(e.dim(), 16u);
  EXPECT_EQ(e.embed("hello world").values.size(), 16u);
  EXPECT_THROW(HashingEmbedder(0), Error);
}

TEST(L2Normalize, LeavesZeroAlone) {
  std::vector<double> z(4, 0.0);
  l2_normalize(z);
  EXPECT_EQ(z, std::vector<double>(4, 0.0));
  std::vector<double> v{3.0, 4.0};
  l2_normalize(v);
  EXPECT_DOUBLE_EQ(v[0], 0.6);
  EXPECT_DOUBLE_EQ(v[1], 0.8);
}

class RemoteEmbedderTest : public ::testing::Test {
 protected:
  void SetUp() override {
    server_.server().Post("/embed", [this](const httplib::Request& req, httplib::Response& res) {
      last_auth_ = req.get_header_value("Authorization");
      last_input_ = nlohmann::json::parse(req.body).at("input").get<std::string>();
      res.status = status_;
      res.set_content(reply_, "application/json");
    });
    server_.start();
  }

  RemoteEmbedder client(std::size_t dim = 4, bool strict = false) {
    RemoteEmbedder::Options o;
    o.endpoint = server_.origin() + "/embed";
    o.auth_token = "tok";
    o.dim = dim;
    o.strict_dimension = strict;
    o.timeout_seconds = 5;
    return RemoteEmbedder(o);
  }

  testing::LocalServer server_;
  std::string reply_;
  int status_ = 200;
  std::string last_auth_;
  std::string last_input_;
};

TEST_F(RemoteEmbedderTest, ParsesAndNormalises) {
  reply_ = R"({"embedding":[3,0,4,0]})";
  const auto v = client().embed("hi there").values;
  EXPECT_EQ(last_input_, "hi there");
  EXPECT_EQ(last_auth_, "Bearer tok");
  ASSERT_EQ(v.size(), 4u);
  EXPECT_DOUBLE_EQ(v[0], 0.6);
  EXPECT_DOUBLE_EQ(v[2], 0.8);
}

TEST_F(RemoteEmbedderTest, PadsShortVectorsUnlessStrict) {
  reply_ = R"({"embedding":[1,1]})";
  EXPECT_EQ(client().embed("x").values.size(), 4u);
  try {
    client(4, true).embed("x");
    FAIL();
  } catch (const EmbedError& e) {
    EXPECT_EQ(e.kind(), EmbedError::Kind::Dimension);
  }
}

TEST_F(RemoteEmbedderTest, MalformedBody) {
  reply_ = R"({"vector":[1]})";
  try {
    client().embed("x");
    FAIL();
  } catch (const EmbedError& e) {
    EXPECT_EQ(e.kind(), EmbedError::Kind::Malformed);
  }
}

TEST_F(RemoteEmbedderTest, EmptyVector) {
  reply_ = R"({"embedding":[]})";
  try {
    client().embed("x");
    FAIL();
  } catch (const EmbedError& e) {
    EXPECT_EQ(e.kind(), EmbedError::Kind::Dimension);
  }
}

TEST_F(RemoteEmbedderTest, HttpErrorStatus) {
  status_ = 503;
  reply_ = "{}";
  try {
    client().embed("x");
    FAIL();
  } catch (const EmbedError& e) {
    EXPECT_EQ(e.kind(), EmbedError::Kind::Network);
  }
}

TEST(RemoteEmbedder, UnreachableHostIsNetworkError) {
  RemoteEmbedder::Options o;
  o.endpoint = "http://127.0.0.1:1/embed";
  o.timeout_seconds = 1;
  try {
    RemoteEmbedder(o).embed("x");
    FAIL();
  } catch (const EmbedError& e) {
    EXPECT_EQ(e.kind(), EmbedError::Kind::Network);
  }
}

TEST(RemoteEmbedder, MissingEndpointIsConfigError) {
  EXPECT_THROW(RemoteEmbedder(RemoteEmbedder::Options{}), ConfigError);
}

}  // namespace
}  // namespace budgetflow
