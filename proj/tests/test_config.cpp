#include <gtest/gtest.h>

#include "morphnli/config.hpp"

using namespace morphnli;

namespace {

const char* kInference = R"(
# inference run
mode = "inference"
seed = 7

[paths]
input = "data/pairs.tsv"
workdir = "/tmp/work"

[input.columns]
preset = "sick"

[providers.student]
kind = "mock"
script = 'mocks/student.json'

[providers.nli]
kind = "rules"
)";

std::string expect_config_error(const std::string& src) {
  try {
    run_config_from_toml(src, "/cfg");
  } catch (const ConfigError& e) {
    return e.what();
  }
  ADD_FAILURE() << "no ConfigError for:\n" << src;
  return {};
}

}  // namespace

TEST(Toml, ScalarsArraysAndComments) {
  auto t = parse_toml(R"(
a = "x # not a comment"   # comment
b = 1_000
[s.t]
c = -2.5
d = true
e = [0.0, 0.5, 1]
f = "tab\there"
)");
  EXPECT_EQ(std::get<std::string>(t.at("a").v), "x # not a comment");
  EXPECT_EQ(std::get<double>(t.at("b").v), 1000.0);
  EXPECT_TRUE(t.at("b").integral);
  EXPECT_EQ(std::get<double>(t.at("s.t.c").v), -2.5);
  EXPECT_FALSE(t.at("s.t.c").integral);
  EXPECT_TRUE(std::get<bool>(t.at("s.t.d").v));
  EXPECT_EQ(std::get<std::vector<ConfigValue::Scalar>>(t.at("s.t.e").v).size(), 3u);
  EXPECT_EQ(std::get<std::string>(t.at("s.t.f").v), "tab\there");
}

TEST(Toml, ErrorsCarryLineNumbers) {
  try {
    parse_toml("a = 1\n\nb = \"open\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_toml("a = 1\na = 2\n"), ConfigError);
  EXPECT_THROW(parse_toml("a = nope\n"), ConfigError);
  EXPECT_THROW(parse_toml("[sec\n"), ConfigError);
}

TEST(RunConfig, InferenceDefaults) {
  auto c = run_config_from_toml(kInference, "/cfg");
  EXPECT_EQ(c.mode, RunMode::Inference);
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.input, "/cfg/data/pairs.tsv");
  EXPECT_EQ(c.workdir, "/tmp/work");
  EXPECT_EQ(c.cache_path, "/tmp/work/cache.jsonl");
  EXPECT_EQ(c.input_options.columns.premise, "sentence_A");
  EXPECT_EQ(c.icl_k, 12u);
  EXPECT_EQ(c.pool_size, 40u);
  EXPECT_EQ(c.max_steps, 7u);
  EXPECT_EQ(c.max_in_flight, 8u);
  EXPECT_FALSE(c.voice_normalization);
  EXPECT_EQ(c.provider("student").script, "/cfg/mocks/student.json");
  EXPECT_EQ(c.provider("nli").kind, "rules");
}

TEST(RunConfig, RolesRequiredByMode) {
  auto msg = expect_config_error("mode = \"inference\"\n[providers.nli]\nkind = \"rules\"\n");
  EXPECT_NE(msg.find("student"), std::string::npos);
  msg = expect_config_error(std::string(kInference) + "[voice]\nenabled = true\n");
  EXPECT_NE(msg.find("voice"), std::string::npos);
  msg = expect_config_error(
      "mode = \"generate\"\n[icl]\npool = \"pool.jsonl\"\n[providers.teacher]\nkind = \"mock\"\n"
      "[providers.nli]\nkind = \"rules\"\n");
  EXPECT_NE(msg.find("embedder"), std::string::npos);
}

TEST(RunConfig, GenerateNeedsPool) {
  auto msg = expect_config_error(
      "mode = \"generate\"\n[providers.teacher]\nkind = \"mock\"\n[providers.embedder]\nkind = \"hash\"\n"
      "[providers.nli]\nkind = \"rules\"\n");
  EXPECT_NE(msg.find("pool"), std::string::npos);
}

TEST(RunConfig, KMustNotExceedPoolSize) {
  expect_config_error(std::string(kInference) + "[icl]\nk = 41\n");
  expect_config_error(std::string(kInference) + "[icl]\nk = 0\n");
  auto c = run_config_from_toml(std::string(kInference) + "[icl]\nk = 40\n", "/cfg");
  EXPECT_EQ(c.icl_k, 40u);
}

TEST(RunConfig, RejectsUnknownKeysAndBadTypes) {
  auto msg = expect_config_error(std::string(kInference) + "[morph]\nmax_stepz = 3\n");
  EXPECT_NE(msg.find("max_stepz"), std::string::npos);
  expect_config_error(std::string(kInference) + "[morph]\nmax_steps = \"3\"\n");
  expect_config_error(std::string(kInference) + "[morph]\nmax_steps = 2.5\n");
  expect_config_error(std::string(kInference) + "[filters]\nshort_rule = \"sometimes\"\n");
  expect_config_error(std::string(kInference) + "[eval]\ncosine_edges = [0.5, 0.2]\n");
  expect_config_error("mode = \"train-ish\"\n");
}

TEST(RunConfig, Switches) {
  auto c = run_config_from_toml(std::string(kInference) +
                                    "[icl]\nembedding = \"mean\"\n[filters]\nshort_rule = \"either\"\n"
                                    "[morph]\nmax_steps = 9\nretries = 3\n[run]\nfailure_threshold = 0.25\n",
                                "/cfg");
  EXPECT_EQ(c.icl_embedding, QueryEmbedding::Mean);
  EXPECT_EQ(c.short_rule, ShortRule::BelowMax);
  EXPECT_EQ(c.max_steps, 9u);
  EXPECT_EQ(c.morph_retries, 3);
  EXPECT_DOUBLE_EQ(c.failure_threshold, 0.25);
}
