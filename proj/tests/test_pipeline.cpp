#include <chrono>
#include <filesystem>

#include <gtest/gtest.h>

#include "e2e_support.hpp"
#include "morphnli/pipeline.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace morphnli;
using morphnli::testing::synthetic_kept;
namespace mt = morphnli::testing;

namespace {

class PipelineTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("morphnli_pl_" + std::to_string(::getpid()) + "_" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write(const std::string& name, const json& j) {
    auto p = dir_ / name;
    std::ofstream(p) << j.dump();
    return p;
  }

  RunConfig base_config() {
    RunConfig c;
    c.workdir = dir_ / "work";
    c.cache_path = dir_ / "cache.jsonl";
    c.morph_retries = 2;
    ProviderConfig nli;
    nli.kind = "rules";
    nli.model_id = "rules";
    c.providers["nli"] = nli;
    return c;
  }

  static ProviderConfig mock(const fs::path& script) {
    ProviderConfig p;
    p.kind = "mock";
    p.model_id = "mock";
    p.script = script.string();
    return p;
  }

  static PairRecord pair(const std::string& id, const std::string& p, const std::string& h,
                         std::optional<NliLabel> gold = std::nullopt) {
    PairRecord r;
    r.id = id;
    r.premise = p;
    r.hypothesis = h;
    r.gold = gold;
    return r;
  }

  fs::path dir_;
};

}  // namespace

// ---------------------------------------------------------------- voice

TEST_F(PipelineTest, VoiceIdentityMockLeavesPairsUnchanged) {
  auto cfg = base_config();
  cfg.voice_normalization = true;
  cfg.providers["voice"] = mock(write("voice.json", {{"fallback", "echo"}}));
  Pipeline p(cfg, make_services(cfg));
  std::vector<PairRecord> pairs = {pair("a", "A man sleeps", "A person sleeps"), pair("b", "Kids play.", "Kids run.")};
  auto out = p.run_voice_normalization(pairs);
  ASSERT_EQ(out.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(json(out[i]), json(pairs[i]));
}

TEST_F(PipelineTest, VoiceRewritesPassiveAndAuditsEverySentence) {
  auto cfg = base_config();
  cfg.voice_normalization = true;
  cfg.providers["voice"] = mock(write(
      "voice.json",
      {{"fallback", "echo"},
       {"rules", json::array({{{"contains", "The ball was kicked by the boy"}, {"responses", {"The boy kicked the ball"}}}})}}));
  Pipeline p(cfg, make_services(cfg));
  std::vector<PairRecord> pairs = {pair("a", "The ball was kicked by the boy", "The boy kicked the ball"),
                                   pair("b", "A dog runs", "A dog sleeps"), pair("c", "x y", "y x")};
  auto out = p.run_voice_normalization(pairs);
  EXPECT_EQ(out[0].premise, "The boy kicked the ball");
  auto audit = read_jsonl<json>(p.artifact("voice_audit.jsonl"));
  EXPECT_EQ(audit.size(), 2 * pairs.size());
  EXPECT_EQ(audit[0]["original"], "The ball was kicked by the boy");
  EXPECT_EQ(audit[0]["normalized"], "The boy kicked the ball");
}

TEST_F(PipelineTest, VoiceProviderErrorPassesThroughWithFlag) {
  auto cfg = base_config();
  cfg.voice_normalization = true;
  cfg.providers["voice"] =
      mock(write("voice.json", {{"fallback", "echo"}, {"rules", json::array({{{"contains", "broken"}, {"responses", {"!401"}}}})}}));
  Pipeline p(cfg, make_services(cfg));
  auto out = p.run_voice_normalization({pair("a", "A broken vase", "A vase")});
  EXPECT_EQ(out[0].premise, "A broken vase");
  auto audit = read_jsonl<json>(p.artifact("voice_audit.jsonl"));
  EXPECT_FALSE(audit[0]["error"].is_null());
  EXPECT_TRUE(audit[1]["error"].is_null());
  EXPECT_EQ(p.warnings().size(), 1u);
}

// ---------------------------------------------------------------- morph generation

TEST_F(PipelineTest, AppendixOutputGivesThreeOpChain) {
  auto cfg = base_config();
  cfg.providers["student"] = mock(write("s.json", {{"rules", json::array({{{"responses", {mt::kDogWaterOutput}}}})}}));
  Pipeline p(cfg, make_services(cfg));
  auto o = p.run_morph_generation({pair("d", mt::kDogWaterPremise, mt::kDogWaterHypothesis)}, MorphRole::Student);
  ASSERT_TRUE(o[0].ok());
  EXPECT_EQ(o[0].chain->steps.size(), 3u);
  EXPECT_EQ(o[0].attempts.size(), 1u);
}

TEST_F(PipelineTest, GarbageTwiceThenValidSucceedsOnThirdAttempt) {
  std::string valid = "Morphism:\n\n-Replacements:\n(replace, guitar, piano)\nA man plays a piano\n\n-Removals:\n\n-Insertions:\n";
  auto cfg = base_config();
  cfg.providers["student"] = mock(write("s.json", {{"rules", json::array({{{"responses", {"garbage", "more garbage", valid}}}})}}));
  Pipeline p(cfg, make_services(cfg));
  auto o = p.run_morph_generation({pair("g", "A man plays a guitar", "A man plays a piano")}, MorphRole::Student);
  ASSERT_TRUE(o[0].ok());
  ASSERT_EQ(o[0].attempts.size(), 3u);
  EXPECT_DOUBLE_EQ(o[0].attempts[0].temperature, 0.0);
  EXPECT_DOUBLE_EQ(o[0].attempts[1].temperature, 0.2);
  EXPECT_DOUBLE_EQ(o[0].attempts[2].temperature, 0.4);
  EXPECT_FALSE(o[0].attempts[0].errors.empty());
  EXPECT_TRUE(o[0].attempts[2].errors.empty());
}

TEST_F(PipelineTest, AlwaysInvalidGivesFailureWithTranscript) {
  auto cfg = base_config();
  cfg.providers["student"] = mock(write("s.json", {{"rules", json::array({{{"responses", {"no morphism here"}}}})}}));
  Pipeline p(cfg, make_services(cfg));
  auto o = p.run_morph_generation({pair("x", "A man plays a guitar", "A man plays a piano")}, MorphRole::Student);
  EXPECT_FALSE(o[0].ok());
  ASSERT_EQ(o[0].attempts.size(), 3u);
  for (auto& a : o[0].attempts) {
    EXPECT_EQ(a.output, "no morphism here");
    EXPECT_FALSE(a.errors.empty());
  }
  auto stored = read_jsonl<MorphOutcome>(p.artifact("morph.jsonl"));
  EXPECT_EQ(stored[0].attempts.size(), 3u);
}

TEST_F(PipelineTest, ChainOverStepCapIsRejected) {
  std::string two = "Morphism:\n-Replacements:\n(replace, guitar, piano)\nA man plays a piano\n-Removals:\n(remove, plays)\nA man a piano\n";
  auto cfg = base_config();
  cfg.morph_retries = 0;
  cfg.max_steps = 1;
  cfg.providers["student"] = mock(write("s.json", {{"rules", json::array({{{"responses", {two}}}})}}));
  Pipeline p(cfg, make_services(cfg));
  auto o = p.run_morph_generation({pair("x", "A man plays a guitar", "A man a piano")}, MorphRole::Student);
  EXPECT_FALSE(o[0].ok());
  ASSERT_EQ(o[0].attempts.size(), 1u);
  ASSERT_FALSE(o[0].attempts[0].errors.empty());
  EXPECT_NE(o[0].attempts[0].errors.back().find("too_many_steps"), std::string::npos) << o[0].attempts[0].errors.back();
}

TEST(RetryTemperature, CappedAtOne) {
  EXPECT_DOUBLE_EQ(retry_temperature(0.0, 0), 0.0);
  EXPECT_DOUBLE_EQ(retry_temperature(0.7, 1), 0.9);
  EXPECT_DOUBLE_EQ(retry_temperature(0.7, 2), 1.0);
  EXPECT_DOUBLE_EQ(retry_temperature(0.0, 9), 1.0);
}

TEST_F(PipelineTest, TeacherPromptCarriesSelectedExamples) {
  auto cfg = base_config();
  cfg.mode = RunMode::GenerateTrainingData;
  cfg.pool_path = mt::source_path("data/icl_pool.jsonl");
  cfg.providers["teacher"] = mock(write("t.json", {{"fallback", "synthesize"}}));
  ProviderConfig emb;
  emb.kind = "hash";
  emb.model_id = "hash";
  cfg.providers["embedder"] = emb;
  Pipeline p(cfg, make_services(cfg));
  auto o = p.run_morph_generation({pair("t", "A man is playing a flute", "A man is playing a drum")}, MorphRole::Teacher);
  ASSERT_TRUE(o[0].ok());
  EXPECT_EQ(o[0].chain->steps.size(), 1u);
  // 40 pool items plus the query embedded once each.
  EXPECT_EQ(p.services().embedder->calls(), 41u);
}

TEST_F(PipelineTest, TeacherRejectsKAbovePool) {
  auto cfg = base_config();
  cfg.pool_path = write("pool.jsonl", json(AnnotatedExample{pair("e", "a b", "a c"), synthesize_chain("a b", "a c"), {}}));
  cfg.icl_k = 2;
  cfg.providers["teacher"] = mock(write("t.json", {{"fallback", "synthesize"}}));
  ProviderConfig emb;
  emb.kind = "hash";
  emb.model_id = "hash";
  cfg.providers["embedder"] = emb;
  Pipeline p(cfg, make_services(cfg));
  EXPECT_THROW(p.run_morph_generation({pair("t", "x y", "x z")}, MorphRole::Teacher), ConfigError);
}

// ---------------------------------------------------------------- labeling

TEST_F(PipelineTest, FigureOnePairNeutralVersusVanillaContradiction) {
  auto chain = mt::biker_chain();
  auto cfg = base_config();
  cfg.providers["nli"].script =
      write("nli.json", json::array({{{"premise", chain.premise}, {"hypothesis", chain.hypothesis}, {"label", "contradiction"}}}))
          .string();
  cfg.providers["student"] = mock(write("s.json", {{"rules", json::array({{{"responses", {canonical_render(chain)}}}})}}));
  Pipeline p(cfg, make_services(cfg));
  auto morphs = p.run_morph_generation({pair("fig1", chain.premise, chain.hypothesis, NliLabel::Neutral)}, MorphRole::Student);
  auto labels = p.run_labeling(morphs, true);
  ASSERT_EQ(labels[0].status, LabelStatus::Ok);
  EXPECT_EQ(labels[0].labeled->step_labels,
            (std::vector<NliLabel>{NliLabel::Entailment, NliLabel::Entailment, NliLabel::Entailment, NliLabel::Neutral}));
  EXPECT_EQ(labels[0].predicted, NliLabel::Neutral);
  EXPECT_EQ(labels[0].vanilla_label, NliLabel::Contradiction);
}

TEST_F(PipelineTest, MorphFailureFallsBackToVanilla) {
  auto cfg = base_config();
  cfg.morph_retries = 0;
  cfg.providers["student"] = mock(write("s.json", {{"fallback", "error"}}));
  Pipeline p(cfg, make_services(cfg));
  auto morphs = p.run_morph_generation({pair("v", "A man is not asleep", "A man is asleep")}, MorphRole::Student);
  auto labels = p.run_labeling(morphs, true);
  EXPECT_EQ(labels[0].status, LabelStatus::MorphFailed);
  EXPECT_EQ(labels[0].predicted, NliLabel::Contradiction);
  EXPECT_FALSE(labels[0].labeled.has_value());
}

// ---------------------------------------------------------------- training mode

TEST_F(PipelineTest, GenerateFiltersAndExports) {
  auto cfg = load_run_config(mt::source_path("tests/fixtures/e2e/generate.toml"));
  cfg.workdir = dir_ / "work";
  cfg.cache_path = dir_ / "cache.jsonl";
  cfg.export_dir = dir_ / "export";
  Pipeline p(cfg, make_services(cfg));
  auto s = p.generate();
  EXPECT_EQ(s.total, 20u);
  auto kept = read_jsonl<LabelRecord>(p.artifact("filter.jsonl"));
  auto rejected = read_jsonl<RejectedRecord>(p.artifact("filter.rejected.jsonl"));
  EXPECT_EQ(kept.size() + rejected.size(), 20u);
  for (auto& r : kept) EXPECT_EQ(r.labeled->aggregate, *r.pair.gold);

  // Re-running the filter on its own kept set keeps everything.
  auto before = e2e::slurp(p.artifact("filter.jsonl"));
  FilterReport rep;
  auto again = p.run_filter(kept, &rep);
  EXPECT_EQ(rep.kept, kept.size());
  EXPECT_EQ(e2e::slurp(p.artifact("filter.jsonl")), before);

  auto fs_summary = p.export_kept();
  EXPECT_EQ(fs_summary.train + fs_summary.validation, kept.size());
  EXPECT_EQ(fs_summary.train, train_count(kept.size()));
}

// ---------------------------------------------------------------- export


TEST(TrainCount, RatioRoundsDown) {
  EXPECT_EQ(train_count(3027), 2127u);
  EXPECT_EQ(train_count(100), 70u);
  EXPECT_EQ(train_count(0), 0u);
  EXPECT_EQ(train_count(1), 0u);
}

TEST_F(PipelineTest, ExportHundredSplitsSeventyThirty) {
  auto kept = synthetic_kept(100);
  auto s = export_finetune(kept, dir_ / "ft", 13);
  EXPECT_EQ(s.skipped, 0u);
  EXPECT_EQ(s.train, 70u);
  EXPECT_EQ(s.validation, 30u);
  EXPECT_EQ(read_jsonl<json>(s.train_path).size(), 70u);
  EXPECT_EQ(read_jsonl<json>(s.validation_path).size(), 30u);
}

TEST_F(PipelineTest, ExportIsSeededAndReparses) {
  auto kept = synthetic_kept(50);
  auto a = export_finetune(kept, dir_ / "a", 5);
  auto b = export_finetune(kept, dir_ / "b", 5);
  auto c = export_finetune(kept, dir_ / "c", 6);
  EXPECT_EQ(e2e::slurp(a.train_path), e2e::slurp(b.train_path));
  EXPECT_NE(e2e::slurp(a.train_path), e2e::slurp(c.train_path));
  std::map<std::string, MorphChain> by_prompt;
  for (auto& [pair, chain] : kept) by_prompt[render_student_prompt(pair)] = chain;
  std::size_t checked = 0;
  for (auto* path : {&a.train_path, &a.validation_path}) {
    for (auto& row : read_jsonl<json>(*path)) {
      const auto& msgs = row.at("messages");
      ASSERT_EQ(msgs.size(), 2u);
      EXPECT_EQ(msgs[0]["role"], "user");
      EXPECT_EQ(msgs[1]["role"], "assistant");
      const auto& chain = by_prompt.at(msgs[0]["content"].get<std::string>());
      auto parsed = parse_morphism_output(msgs[1]["content"].get<std::string>(), chain.premise, chain.hypothesis);
      ASSERT_TRUE(parsed.ok());
      EXPECT_EQ(*parsed.parsed, chain);
      ++checked;
    }
  }
  EXPECT_EQ(checked, 50u);
}

// ---------------------------------------------------------------- end to end

TEST_F(PipelineTest, GoldenInferenceRun) {
  auto start = std::chrono::steady_clock::now();
  auto r = e2e::run(dir_ / "work", dir_ / "cache.jsonl");
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), 10.0);
  EXPECT_EQ(r.summary.total, 20u);
  EXPECT_GT(r.calls, 0u);
  for (auto& name : e2e::artifacts()) {
    EXPECT_TRUE(mt::matches_golden("e2e/" + name, e2e::slurp(dir_ / "work" / name))) << name;
  }
  auto labels = read_jsonl<LabelRecord>(dir_ / "work/label.jsonl");
  ASSERT_EQ(labels.size(), 20u);
  EXPECT_EQ(labels[0].pair.id, "p01");
  EXPECT_EQ(labels[0].predicted, NliLabel::Neutral);
  EXPECT_EQ(labels[0].vanilla_label, NliLabel::Contradiction);
}

TEST_F(PipelineTest, WarmCacheMakesNoProviderCalls) {
  auto cold = e2e::run(dir_ / "cold", dir_ / "cache.jsonl");
  EXPECT_GT(cold.calls, 0u);
  auto warm = e2e::run(dir_ / "warm", dir_ / "cache.jsonl");
  EXPECT_EQ(warm.calls, 0u);
  for (auto& name : e2e::artifacts()) {
    EXPECT_EQ(e2e::slurp(dir_ / "warm" / name), e2e::slurp(dir_ / "cold" / name)) << name;
  }
}

TEST_F(PipelineTest, StagesReenterFromArtifacts) {
  auto cfg = e2e::config(dir_ / "work", dir_ / "cache.jsonl");
  {
    Pipeline p(cfg, make_services(cfg));
    p.infer();
  }
  auto label_before = e2e::slurp(dir_ / "work/label.jsonl");
  auto eval_before = e2e::slurp(dir_ / "work/eval_report.json");
  Pipeline p(cfg, make_services(cfg));
  auto morphs = read_jsonl<MorphOutcome>(dir_ / "work/morph.jsonl");
  p.run_labeling(morphs, true);
  EXPECT_EQ(e2e::slurp(dir_ / "work/label.jsonl"), label_before);
  p.reevaluate();
  EXPECT_EQ(e2e::slurp(dir_ / "work/eval_report.json"), eval_before);
  EXPECT_EQ(p.services().calls(), 0u);
}

TEST_F(PipelineTest, VoiceDisabledLeavesNoVoiceArtifact) {
  auto cfg = e2e::config(dir_ / "work", dir_ / "cache.jsonl");
  cfg.voice_normalization = false;
  Pipeline p(cfg, make_services(cfg));
  auto s = p.infer();
  EXPECT_FALSE(fs::exists(dir_ / "work/voice.jsonl"));
  EXPECT_FALSE(fs::exists(dir_ / "work/voice_audit.jsonl"));
  EXPECT_EQ(s.total, 20u);
  EXPECT_EQ(read_jsonl<LabelRecord>(dir_ / "work/label.jsonl").size(), 20u);
}
