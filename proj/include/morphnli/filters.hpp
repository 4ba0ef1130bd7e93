#pragma once

// Quality filters for synthetic chains: lazy, short and label-mismatch.

#include <algorithm>
#include <cstdint>
#include <string>
#include <tuple>
#include <vector>

#include "morphnli/morph_model.hpp"

namespace morphnli {

enum class FilterReason : std::uint8_t { Lazy = 1, Short = 2, LabelMismatch = 4 };

inline constexpr std::string_view to_string(FilterReason r) {
  switch (r) {
    case FilterReason::Lazy: return "lazy";
    case FilterReason::Short: return "short";
    case FilterReason::LabelMismatch: return "label_mismatch";
  }
  return "lazy";
}

struct FilterVerdict {
  std::uint8_t reasons = 0;

  bool kept() const { return reasons == 0; }
  bool has(FilterReason r) const { return reasons & static_cast<std::uint8_t>(r); }
  void add(FilterReason r) { reasons |= static_cast<std::uint8_t>(r); }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (auto r : {FilterReason::Lazy, FilterReason::Short, FilterReason::LabelMismatch}) {
      if (has(r)) out.emplace_back(to_string(r));
    }
    return out;
  }
};

/// BelowMin: an intermediate is short when it has fewer tokens than both
/// endpoints. BelowMax: fewer than either endpoint.
enum class ShortRule { BelowMin, BelowMax };

inline bool is_short_chain(const MorphChain& chain, ShortRule rule = ShortRule::BelowMin) {
  std::size_t p = text::token_count(chain.premise);
  std::size_t h = text::token_count(chain.hypothesis);
  std::size_t bound = rule == ShortRule::BelowMin ? std::min(p, h) : std::max(p, h);
  // The last step sentence is the hypothesis itself.
  for (std::size_t i = 0; i + 1 < chain.steps.size(); ++i) {
    if (text::token_count(chain.steps[i].sentence) < bound) return true;
  }
  return false;
}

inline FilterVerdict classify_chain_quality(const MorphChain& chain, NliLabel gold, NliLabel aggregate,
                                            ShortRule rule = ShortRule::BelowMin) {
  FilterVerdict v;
  if (chain.steps.empty()) v.add(FilterReason::Lazy);
  if (is_short_chain(chain, rule)) v.add(FilterReason::Short);
  if (aggregate != gold) v.add(FilterReason::LabelMismatch);
  return v;
}

struct FilterReport {
  std::size_t total = 0;
  std::size_t kept = 0;
  std::size_t lazy = 0;
  std::size_t short_count = 0;
  std::size_t mismatch = 0;

  void count(const FilterVerdict& v) {
    ++total;
    if (v.kept()) ++kept;
    if (v.has(FilterReason::Lazy)) ++lazy;
    if (v.has(FilterReason::Short)) ++short_count;
    if (v.has(FilterReason::LabelMismatch)) ++mismatch;
  }

  FilterReport& operator+=(const FilterReport& o) {
    total += o.total;
    kept += o.kept;
    lazy += o.lazy;
    short_count += o.short_count;
    mismatch += o.mismatch;
    return *this;
  }

  friend bool operator==(const FilterReport&, const FilterReport&) = default;
};

inline void to_json(json& j, const FilterReport& r) {
  j = json{{"total", r.total}, {"kept", r.kept}, {"lazy", r.lazy}, {"short", r.short_count}, {"label_mismatch", r.mismatch}};
}

template <class R>
struct FilterOutcome {
  std::vector<R> kept;
  std::vector<std::pair<R, FilterVerdict>> rejected;
  FilterReport report;
};

/// `view(record)` yields (chain, gold, aggregate). Order is preserved in
/// both partitions.
template <class R, class View>
FilterOutcome<R> apply_filters(const std::vector<R>& records, View view, ShortRule rule = ShortRule::BelowMin) {
  FilterOutcome<R> out;
  for (const auto& r : records) {
    const auto& [chain, gold, aggregate] = view(r);
    FilterVerdict v = classify_chain_quality(chain, gold, aggregate, rule);
    out.report.count(v);
    if (v.kept()) {
      out.kept.push_back(r);
    } else {
      out.rejected.emplace_back(r, v);
    }
  }
  return out;
}

}  // namespace morphnli
