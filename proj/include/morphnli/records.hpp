#pragma once

// Dataset rows and annotated pool examples shared across stages.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "morphnli/morph_model.hpp"

namespace morphnli {

enum class Split { Train, Validation, Test };

inline constexpr std::string_view to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
  }
  return "test";
}

inline std::optional<Split> split_from_string(std::string_view s) {
  std::string l = text::to_lower(s);
  if (l == "train") return Split::Train;
  if (l == "validation" || l == "val" || l == "dev") return Split::Validation;
  if (l == "test") return Split::Test;
  return std::nullopt;
}

struct PairRecord {
  std::string id;
  std::string premise;
  std::string hypothesis;
  std::optional<NliLabel> gold;
  std::string domain_tag;
  Split split = Split::Test;
};

inline void to_json(json& j, const PairRecord& r) {
  j = json{{"id", r.id}, {"premise", r.premise}, {"hypothesis", r.hypothesis}};
  j["gold_label"] = r.gold ? json(*r.gold) : json(nullptr);
  j["domain"] = r.domain_tag;
  j["split"] = std::string(to_string(r.split));
}

inline void from_json(const json& j, PairRecord& r) {
  r.id = j.value("id", "");
  j.at("premise").get_to(r.premise);
  j.at("hypothesis").get_to(r.hypothesis);
  r.gold.reset();
  if (j.contains("gold_label") && !j["gold_label"].is_null()) r.gold = j["gold_label"].get<NliLabel>();
  r.domain_tag = j.value("domain", "");
  auto sp = split_from_string(j.value("split", "test"));
  if (!sp) throw std::invalid_argument("unknown split: " + j.value("split", ""));
  r.split = *sp;
}

/// A pool entry for in-context examples: the pair, its annotated chain and a
/// cached embedding (empty until computed).
struct AnnotatedExample {
  PairRecord pair;
  MorphChain chain;
  std::vector<double> embedding;
};

inline void to_json(json& j, const AnnotatedExample& e) {
  j = json{{"id", e.pair.id}, {"chain", e.chain}};
  if (e.pair.gold) j["gold_label"] = *e.pair.gold;
  if (!e.embedding.empty()) j["embedding"] = e.embedding;
}

inline void from_json(const json& j, AnnotatedExample& e) {
  j.at("chain").get_to(e.chain);
  e.pair = PairRecord{};
  e.pair.id = j.value("id", "");
  e.pair.premise = e.chain.premise;
  e.pair.hypothesis = e.chain.hypothesis;
  if (j.contains("gold_label") && !j["gold_label"].is_null()) e.pair.gold = j["gold_label"].get<NliLabel>();
  e.embedding.clear();
  if (j.contains("embedding")) j["embedding"].get_to(e.embedding);
}

}  // namespace morphnli
