#include <gtest/gtest.h>

#include <functional>

#include "morphnli/labeling.hpp"
#include "morphnli/mock_providers.hpp"
#include "test_support.hpp"

using namespace morphnli;

namespace {

constexpr NliLabel E = NliLabel::Entailment;
constexpr NliLabel N = NliLabel::Neutral;
constexpr NliLabel C = NliLabel::Contradiction;

// Scans right to left keeping the last non-entailment seen.
NliLabel brute_aggregate(const std::vector<NliLabel>& xs) {
  NliLabel r = E;
  for (std::size_t i = xs.size(); i-- > 0;) {
    if (xs[i] != E) r = xs[i];
  }
  return r;
}

json biker_table() {
  auto c = morphnli::testing::biker_chain();
  return json::array({{{"premise", c.premise}, {"hypothesis", c.hypothesis}, {"label", "contradiction"}}});
}

}  // namespace

TEST(Aggregate, PaperExamples) {
  EXPECT_EQ(aggregate_labels({E, E, E, N}), N);
  EXPECT_EQ(aggregate_labels({E, E, E}), E);
  EXPECT_EQ(aggregate_labels({C, N, E}), C);
  EXPECT_THROW(aggregate_labels({}), LabelingError);
}

TEST(Aggregate, ExhaustiveLengthFour) {
  const NliLabel all[] = {E, N, C};
  int n = 0;
  for (NliLabel a : all)
    for (NliLabel b : all)
      for (NliLabel c : all)
        for (NliLabel d : all) {
          std::vector<NliLabel> xs = {a, b, c, d};
          EXPECT_EQ(aggregate_labels(xs), brute_aggregate(xs));
          ++n;
        }
  EXPECT_EQ(n, 81);
}

TEST(Aggregate, AppendingEntailmentAndPrefixStability) {
  std::mt19937_64 rng(8);
  const NliLabel all[] = {E, N, C};
  for (int t = 0; t < 500; ++t) {
    std::vector<NliLabel> xs(1 + rng() % 6);
    for (auto& x : xs) x = all[rng() % 3];
    auto ys = xs;
    ys.push_back(E);
    EXPECT_EQ(aggregate_labels(ys), aggregate_labels(xs));
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (xs[i] == E) continue;
      std::vector<NliLabel> prefix(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(i) + 1);
      EXPECT_EQ(aggregate_labels(xs), aggregate_labels(prefix));
      break;
    }
    bool all_e = std::all_of(xs.begin(), xs.end(), [](NliLabel l) { return l == E; });
    EXPECT_EQ(aggregate_labels(xs) == E, all_e);
  }
}

TEST(LabelChain, BikerStepsEndNeutral) {
  auto nli_backend = std::make_shared<RuleBasedNli>(biker_table());
  NliClient nli(nli_backend, "rules");
  auto chain = morphnli::testing::biker_chain();
  ASSERT_TRUE(validate_chain(chain).ok());
  auto l = label_chain(chain, classifier_of(nli), true);
  EXPECT_EQ(l.step_labels, (std::vector<NliLabel>{E, E, E, N}));
  EXPECT_EQ(l.aggregate, N);
  EXPECT_EQ(l.vanilla_label, C);
  EXPECT_EQ(nli_backend->calls(), 5u);
}

TEST(LabelChain, ExactlyOneCallPerStep) {
  auto backend = std::make_shared<RuleBasedNli>();
  NliClient nli(backend, "rules");
  auto chain = morphnli::testing::beard_chain();
  auto l = label_chain(chain, classifier_of(nli));
  EXPECT_EQ(backend->calls(), 3u);
  EXPECT_EQ(l.step_labels.size(), 3u);
  EXPECT_FALSE(l.vanilla_label);
}

TEST(LabelChain, LazyChainFallsBackToDirectLabel) {
  MorphChain lazy{"A dog runs", {}, "A dog does not run"};
  RuleBasedNli backend;
  auto l = label_chain(lazy, [&](const std::string& p, const std::string& h) { return backend.decide(p, h); });
  EXPECT_TRUE(l.step_labels.empty());
  EXPECT_EQ(l.vanilla_label, C);
  EXPECT_EQ(l.aggregate, C);
}

TEST(LabelChain, ErrorsCarryStepIndex) {
  int calls = 0;
  Classifier flaky = [&](const std::string&, const std::string&) -> NliLabel {
    if (++calls == 2) throw ProviderError(ProviderErrc::Transport, "down");
    return E;
  };
  try {
    label_chain(morphnli::testing::beard_chain(), flaky);
    FAIL();
  } catch (const LabelingError& e) {
    EXPECT_EQ(e.step(), 2u);
    EXPECT_NE(std::string(e.what()).find("TransportError"), std::string::npos);
  }
}

TEST(LabelChain, CustomAggregator) {
  RuleBasedNli backend;
  auto last = [](const std::vector<NliLabel>& xs) { return xs.back(); };
  auto l = label_chain(morphnli::testing::biker_chain(),
                       [&](const std::string& p, const std::string& h) { return backend.decide(p, h); }, false, last);
  EXPECT_EQ(l.aggregate, N);
}

TEST(LabeledChainJson, ExtendsChainSchema) {
  LabeledChain l{morphnli::testing::beard_chain(), {N, E, N}, N, C};
  json j = l;
  EXPECT_TRUE(j.contains("premise"));
  EXPECT_TRUE(j.contains("steps"));
  EXPECT_EQ(j["step_labels"], json({"neutral", "entailment", "neutral"}));
  EXPECT_EQ(j["vanilla_label"], "contradiction");
  auto back = j.get<LabeledChain>();
  EXPECT_EQ(back.chain.steps, l.chain.steps);
  EXPECT_EQ(back.step_labels, l.step_labels);
  EXPECT_EQ(back.vanilla_label, l.vanilla_label);
  l.vanilla_label.reset();
  EXPECT_TRUE(json(l)["vanilla_label"].is_null());
}
