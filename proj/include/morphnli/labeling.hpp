#pragma once

// Per-step NLI labels and first-non-entailment aggregation.

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "morphnli/morph_model.hpp"
#include "morphnli/providers.hpp"

namespace morphnli {

class LabelingError : public std::runtime_error {
 public:
  LabelingError(std::size_t step, const std::string& message)
      : std::runtime_error(step ? "step " + std::to_string(step) + ": " + message : message), step_(step) {}
  /// 1-based step; 0 for the direct premise/hypothesis call or empty input.
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// Entailment if every label is entailment, else the left-most other label.
inline NliLabel aggregate_labels(const std::vector<NliLabel>& labels) {
  if (labels.empty()) throw LabelingError(0, "EmptyInput: no labels to aggregate");
  for (NliLabel l : labels) {
    if (l != NliLabel::Entailment) return l;
  }
  return NliLabel::Entailment;
}

using Aggregator = std::function<NliLabel(const std::vector<NliLabel>&)>;

struct LabeledChain {
  MorphChain chain;
  std::vector<NliLabel> step_labels;
  NliLabel aggregate = NliLabel::Neutral;
  std::optional<NliLabel> vanilla_label;
};

inline void to_json(json& j, const LabeledChain& l) {
  j = l.chain;
  j["step_labels"] = l.step_labels;
  j["aggregate"] = l.aggregate;
  j["vanilla_label"] = l.vanilla_label ? json(*l.vanilla_label) : json(nullptr);
}

inline void from_json(const json& j, LabeledChain& l) {
  j.get_to(l.chain);
  l.step_labels = j.value("step_labels", std::vector<NliLabel>{});
  j.at("aggregate").get_to(l.aggregate);
  l.vanilla_label.reset();
  if (j.contains("vanilla_label") && !j["vanilla_label"].is_null()) l.vanilla_label = j["vanilla_label"].get<NliLabel>();
}

using Classifier = std::function<NliLabel(const std::string& premise, const std::string& hypothesis)>;

inline Classifier classifier_of(NliClient& nli) {
  return [&nli](const std::string& p, const std::string& h) { return nli.classify(p, h).label; };
}

/// One classification per step (sentence i-1 -> sentence i). Zero-step
/// chains are labelled by the direct premise/hypothesis call. With
/// `with_vanilla` the direct call is made for every chain.
inline LabeledChain label_chain(const MorphChain& chain, const Classifier& classify, bool with_vanilla = false,
                                const Aggregator& aggregate = aggregate_labels) {
  LabeledChain out;
  out.chain = chain;
  for (std::size_t i = 1; i <= chain.steps.size(); ++i) {
    try {
      out.step_labels.push_back(classify(chain.sentence(i - 1), chain.sentence(i)));
    } catch (const std::exception& e) {
      throw LabelingError(i, e.what());
    }
  }
  if (with_vanilla || chain.steps.empty()) {
    try {
      out.vanilla_label = classify(chain.premise, chain.hypothesis);
    } catch (const std::exception& e) {
      throw LabelingError(0, e.what());
    }
  }
  out.aggregate = chain.steps.empty() ? *out.vanilla_label : aggregate(out.step_labels);
  return out;
}

}  // namespace morphnli
