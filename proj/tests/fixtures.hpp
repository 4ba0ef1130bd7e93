#pragma once

// Fixtures and generators shared by the unit tests and the acceptance binary.

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "morphnli/eval_harness.hpp"
#include "morphnli/filters.hpp"
#include "morphnli/icl_selector.hpp"
#include "morphnli/morph_model.hpp"
#include "morphnli/records.hpp"

namespace morphnli::testing {

inline const std::vector<std::string>& vocabulary() {
  static const std::vector<std::string> words = {
      "a",     "the",    "man",   "woman", "dog",    "cat",     "runs",  "sits",   "on",
      "in",    "red",    "green", "big",   "small",  "park",    "road",  "is",     "with",
      "ball",  "plays",  "two",   "kids",  "near",   "water",   "brown", "white",  "quietly",
      "fast",  "jumps",  "over",  "grass", "bench",  "holding", "an",    "umbrella", "old",
      "young", "street", "at",    "night", "sunny",  "beach",   "of",    "and",    "not"};
  return words;
}

inline std::string random_sentence(std::mt19937_64& rng, std::size_t min_len, std::size_t max_len) {
  const auto& v = vocabulary();
  std::size_t len = min_len + rng() % (max_len - min_len + 1);
  std::vector<std::string> ws;
  for (std::size_t i = 0; i < len; ++i) ws.push_back(v[rng() % v.size()]);
  return text::join(ws);
}

/// Applies a handful of random word-level edits to `s` (fuzzed hypothesis).
inline std::string fuzz_words(std::mt19937_64& rng, const std::string& s) {
  const auto& v = vocabulary();
  auto ws = text::split_tokens(s);
  std::size_t edits = 1 + rng() % 5;
  for (std::size_t e = 0; e < edits; ++e) {
    int what = static_cast<int>(rng() % 3);
    if (what == 0 && !ws.empty()) {
      ws[rng() % ws.size()] = v[rng() % v.size()];
    } else if (what == 1 && ws.size() > 1) {
      ws.erase(ws.begin() + static_cast<std::ptrdiff_t>(rng() % ws.size()));
    } else {
      ws.insert(ws.begin() + static_cast<std::ptrdiff_t>(rng() % (ws.size() + 1)), v[rng() % v.size()]);
    }
  }
  return text::join(ws);
}

/// A random pair; about a third of premises carry a final period.
inline std::pair<std::string, std::string> random_pair(std::mt19937_64& rng) {
  std::string p = random_sentence(rng, 3, 12);
  std::string h = rng() % 4 == 0 ? random_sentence(rng, 3, 12) : fuzz_words(rng, p);
  if (rng() % 3 == 0) p += ".";
  if (rng() % 5 == 0) h += ".";
  return {p, h};
}

/// The annotated ICL example (beard / microphone / couch).
inline MorphChain beard_chain() {
  MorphChain c;
  c.premise = "A man with a white beard speaks into a microphone wearing a long-sleeved gray button down shirt.";
  c.hypothesis = "A man with a white beard is sitting quietly on a couch.";
  c.steps = {
      {EditOp::replace("speaks into a microphone", "is sitting quietly"),
       "A man with a white beard is sitting quietly wearing a long-sleeved gray button down shirt."},
      {EditOp::remove("wearing a long-sleeved gray button down shirt"), "A man with a white beard is sitting quietly."},
      {EditOp::insert("on a couch"), "A man with a white beard is sitting quietly on a couch."},
  };
  return c;
}

inline const char* kDogWaterPremise = "A white man is walking a dog through brown water with difficulty";
inline const char* kDogWaterHypothesis = "A dog with a brown and white coat is trotting through shallow water";

/// LLM output text for the dog / water pair.
inline const char* kDogWaterOutput =
    "Morphism:\n"
    "\n"
    "-Replacements:\n"
    "(replace, A white man is walking a dog, A dog with a brown and white coat is trotting)\n"
    "A dog with a brown and white coat is trotting through brown water with difficulty.\n"
    "(replace, brown water, shallow water)\n"
    "A dog with a brown and white coat is trotting through shallow water with difficulty.\n"
    "\n"
    "-Removals:\n"
    "(remove, with difficulty)\n"
    "A dog with a brown and white coat is trotting through shallow water.\n"
    "\n"
    "-Insertions:\n";

/// Biker / wheelie chain: steps entail until the final insertion (neutral).
inline MorphChain biker_chain() {
  MorphChain c;
  c.premise = "A biker in a red jacket is doing a wheelie on a dirt road.";
  c.hypothesis = "A biker is doing a wheelie for his crew.";
  c.steps = {
      {EditOp::replace("on a dirt road", "on a road"), "A biker in a red jacket is doing a wheelie on a road."},
      {EditOp::remove("in a red jacket"), "A biker is doing a wheelie on a road."},
      {EditOp::remove("on a road"), "A biker is doing a wheelie."},
      {EditOp::insert("for his crew"), "A biker is doing a wheelie for his crew."},
  };
  return c;
}

/// An intermediate drops "on green grass" and falls below both endpoints.
inline MorphChain short_grass_chain() {
  MorphChain c;
  c.premise = "Two dogs are running on green grass";
  c.hypothesis = "Two dogs are playing outside";
  c.steps = {
      {EditOp::replace("running", "playing"), "Two dogs are playing on green grass"},
      {EditOp::remove("on green grass"), "Two dogs are playing"},
      {EditOp::insert("outside"), "Two dogs are playing outside"},
  };
  return c;
}


struct FilterCase {
  MorphChain chain;
  NliLabel gold;
  NliLabel aggregate;
};

/// 100 chains: 26 lazy, 32 short, 42 clean; every aggregate equals gold.
inline std::vector<FilterCase> filter_corpus() {
  std::vector<FilterCase> out;
  std::mt19937_64 rng(2024);
  const NliLabel labels[] = {NliLabel::Entailment, NliLabel::Neutral, NliLabel::Contradiction};
  for (int i = 0; i < 100; ++i) {
    NliLabel gold = labels[i % 3];
    MorphChain c;
    if (i < 26) {
      c = MorphChain{random_sentence(rng, 4, 9), {}, random_sentence(rng, 4, 9)};
    } else if (i < 58) {
      // Drop a trailing phrase then add a longer one: the middle sentence is
      // shorter than both ends.
      std::string core = random_sentence(rng, 3, 5);
      std::string tail = random_sentence(rng, 2, 3);
      std::string added = random_sentence(rng, 3, 4);
      c.premise = core + " " + tail;
      c.hypothesis = core + " " + added;
      c.steps = {{EditOp::remove(tail), core}, {EditOp::insert(added), c.hypothesis}};
    } else {
      std::string core = random_sentence(rng, 3, 5);
      std::string a = random_sentence(rng, 2, 3);
      std::string b = random_sentence(rng, 2, 3);
      c.premise = core + " " + a;
      c.hypothesis = core + " " + a + " " + b;
      c.steps = {{EditOp::insert(b), c.hypothesis}};
    }
    out.push_back({c, gold, gold});
  }
  return out;
}


// 100 pairs: vanilla right on 62, morph right on 63.
inline std::vector<EvalRow> table_fixture() {
  std::vector<EvalRow> rows;
  for (int i = 0; i < 100; ++i) {
    EvalRow r;
    r.id = "t" + std::to_string(i);
    r.premise = "premise " + std::to_string(i);
    r.hypothesis = "hypothesis " + std::to_string(i);
    NliLabel gold = kAllLabels[static_cast<std::size_t>(i % 3)];
    NliLabel wrong = kAllLabels[static_cast<std::size_t>((i + 1) % 3)];
    r.gold = gold;
    r.vanilla = i < 62 ? gold : wrong;
    r.morph = (i < 60 || (i >= 62 && i < 65)) ? gold : wrong;
    rows.push_back(r);
  }
  return rows;
}

// a1 == a2 and a3 == a4; a1 vs a3 has kappa 0.01, so the six-pair mean is 0.34.
inline ScoreMatrix kappa_fixture() {
  ScoreMatrix m;
  int item = 0;
  auto add = [&](int x, int y, int count) {
    for (int c = 0; c < count; ++c, ++item) {
      std::string id = "i" + std::to_string(item);
      m.set(id, "a1", x);
      m.set(id, "a2", x);
      m.set(id, "a3", y);
      m.set(id, "a4", y);
    }
  };
  add(0, 0, 2);
  add(0, 2, 6);
  add(2, 0, 6);
  add(2, 2, 19);
  return m;
}

inline std::vector<AnnotatedExample> mock_pool(std::size_t n, EmbedClient& emb) {
  std::vector<AnnotatedExample> pool;
  std::mt19937_64 rng(17);
  for (std::size_t i = 0; i < n; ++i) {
    auto [p, h] = random_pair(rng);
    AnnotatedExample e;
    e.chain = synthesize_chain(p, h);
    e.pair.id = "p" + std::to_string(i);
    e.pair.premise = p;
    e.pair.hypothesis = h;
    pool.push_back(e);
  }
  embed_pool(pool, emb);
  return pool;
}

// Repeatedly takes the highest remaining similarity, lowest index first.
inline std::vector<std::size_t> brute_top_k(const std::vector<AnnotatedExample>& pool, const std::vector<double>& q,
                                     std::size_t k) {
  std::vector<double> sims;
  for (auto& e : pool) {
    double dot = 0, a = 0, b = 0;
    for (std::size_t i = 0; i < q.size(); ++i) {
      dot += e.embedding[i] * q[i];
      a += e.embedding[i] * e.embedding[i];
      b += q[i] * q[i];
    }
    sims.push_back(dot / std::sqrt(a * b));
  }
  std::vector<bool> used(pool.size(), false);
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < k; ++r) {
    std::size_t best = pool.size();
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (!used[i] && (best == pool.size() || sims[i] > sims[best])) best = i;
    }
    used[best] = true;
    out.push_back(best);
  }
  return out;
}

inline std::vector<std::pair<PairRecord, MorphChain>> synthetic_kept(std::size_t n) {
  std::mt19937_64 rng(11);
  std::vector<std::pair<PairRecord, MorphChain>> out;
  while (out.size() < n) {
    auto [p, h] = random_pair(rng);
    auto chain = synthesize_chain(p, h);
    PairRecord r;
    r.id = "k" + std::to_string(out.size());
    r.premise = p;
    r.hypothesis = h;
    out.emplace_back(r, chain);
  }
  return out;
}

}  // namespace morphnli::testing
