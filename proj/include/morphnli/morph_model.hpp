#pragma once

// Edit-operation model for premise -> hypothesis morphing: labels, atomic
// edits, chains of edits, blind application, validation and a deterministic
// word-level synthesizer used as an oracle and as a fallback morpher.

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "morphnli/text.hpp"

namespace morphnli {

using json = nlohmann::json;

// ---------------------------------------------------------------- labels

enum class NliLabel { Entailment, Neutral, Contradiction };

inline constexpr std::array<NliLabel, 3> kAllLabels = {NliLabel::Entailment, NliLabel::Neutral,
                                                       NliLabel::Contradiction};

inline constexpr std::string_view to_string(NliLabel l) {
  switch (l) {
    case NliLabel::Entailment: return "entailment";
    case NliLabel::Neutral: return "neutral";
    case NliLabel::Contradiction: return "contradiction";
  }
  return "neutral";
}

inline constexpr std::size_t label_index(NliLabel l) { return static_cast<std::size_t>(l); }

/// Exact match on the serialization strings.
inline std::optional<NliLabel> label_from_string(std::string_view s) {
  for (NliLabel l : kAllLabels) {
    if (to_string(l) == s) return l;
  }
  return std::nullopt;
}

inline void to_json(json& j, NliLabel l) { j = std::string(to_string(l)); }
inline void from_json(const json& j, NliLabel& l) {
  auto parsed = label_from_string(j.get<std::string>());
  if (!parsed) throw std::invalid_argument("unknown NLI label: " + j.get<std::string>());
  l = *parsed;
}

// ---------------------------------------------------------------- errors

enum class MorphErrc { InvalidOp, OldTextNotFound, AmbiguousInsert, InvalidInput, InvalidChain };

inline constexpr std::string_view to_string(MorphErrc e) {
  switch (e) {
    case MorphErrc::InvalidOp: return "InvalidOp";
    case MorphErrc::OldTextNotFound: return "OldTextNotFound";
    case MorphErrc::AmbiguousInsert: return "AmbiguousInsert";
    case MorphErrc::InvalidInput: return "InvalidInput";
    case MorphErrc::InvalidChain: return "InvalidChain";
  }
  return "InvalidOp";
}

class MorphError : public std::runtime_error {
 public:
  MorphError(MorphErrc code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}
  MorphErrc code() const noexcept { return code_; }

 private:
  MorphErrc code_;
};

// ---------------------------------------------------------------- ops

enum class OpKind { Replace, Remove, Insert };

inline constexpr std::string_view to_string(OpKind k) {
  switch (k) {
    case OpKind::Replace: return "replace";
    case OpKind::Remove: return "remove";
    case OpKind::Insert: return "insert";
  }
  return "replace";
}

inline std::optional<OpKind> op_kind_from_string(std::string_view s) {
  for (OpKind k : {OpKind::Replace, OpKind::Remove, OpKind::Insert}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

/// Phase rank: all replacements, then removals, then insertions.
inline constexpr int phase_rank(OpKind k) { return static_cast<int>(k); }

struct EditOp {
  OpKind kind = OpKind::Replace;
  std::string old_text;
  std::string new_text;
  // Preceding-context words for Insert placement. An empty anchor means
  // "insert at sentence start"; no anchor means "before final punctuation".
  std::optional<std::string> anchor;

  static EditOp replace(std::string_view old_text, std::string_view new_text) {
    return {OpKind::Replace, text::collapse_whitespace(old_text), text::collapse_whitespace(new_text),
            std::nullopt};
  }
  static EditOp remove(std::string_view old_text) {
    return {OpKind::Remove, text::collapse_whitespace(old_text), {}, std::nullopt};
  }
  static EditOp insert(std::string_view new_text, std::optional<std::string> anchor = std::nullopt) {
    if (anchor) anchor = text::collapse_whitespace(*anchor);
    return {OpKind::Insert, {}, text::collapse_whitespace(new_text), std::move(anchor)};
  }

  bool valid() const {
    switch (kind) {
      case OpKind::Replace: return !old_text.empty() && !new_text.empty();
      case OpKind::Remove: return !old_text.empty() && new_text.empty();
      case OpKind::Insert: return old_text.empty() && !new_text.empty();
    }
    return false;
  }

  // The anchor is a placement hint that the textual script format cannot
  // carry, so it does not take part in equality.
  friend bool operator==(const EditOp& a, const EditOp& b) {
    return a.kind == b.kind && a.old_text == b.old_text && a.new_text == b.new_text;
  }
};

struct MorphStep {
  EditOp op;
  std::string sentence;

  friend bool operator==(const MorphStep&, const MorphStep&) = default;
};

inline constexpr std::size_t kDefaultMaxSteps = 7;

struct MorphChain {
  std::string premise;
  std::vector<MorphStep> steps;
  std::string hypothesis;

  bool lazy() const { return steps.empty(); }

  bool phase_order_ok() const {
    for (std::size_t i = 1; i < steps.size(); ++i) {
      if (phase_rank(steps[i].op.kind) < phase_rank(steps[i - 1].op.kind)) return false;
    }
    return true;
  }

  /// Sentence i of the chain: 0 is the premise, i >= 1 is steps[i-1].
  const std::string& sentence(std::size_t i) const { return i == 0 ? premise : steps[i - 1].sentence; }

  friend bool operator==(const MorphChain&, const MorphChain&) = default;
};

// ---------------------------------------------------------------- text ops

/// Comparison form: whitespace collapsed, trimmed, one terminal mark dropped.
inline std::string normalize_text(std::string_view s) {
  std::string out = text::collapse_whitespace(s);
  if (!out.empty() && text::is_terminal_punct(out.back())) {
    out.pop_back();
    out = std::string(text::trim(out));
  }
  return out;
}

namespace detail {

// Replaces s[pos, pos+len) with repl; removal drops the space in front of
// punctuation that was glued to the removed span.
inline std::string splice(std::string_view s, std::size_t pos, std::size_t len, std::string_view repl) {
  std::string left(s.substr(0, pos));
  std::string right(s.substr(pos + len));
  if (repl.empty()) {
    if (!right.empty() && !text::is_space(right.front())) {
      while (!left.empty() && text::is_space(left.back())) left.pop_back();
    }
    return text::collapse_whitespace(left + right);
  }
  return text::collapse_whitespace(left + std::string(repl) + right);
}

// Inserts `words` at char offset `at`, which must sit on a word boundary.
inline std::string insert_at(std::string_view s, std::size_t at, std::string_view words) {
  std::string left(s.substr(0, at));
  std::string right(s.substr(at));
  std::string mid(words);
  if (!right.empty() && !text::is_glue_punct(right.front())) mid += ' ';
  return text::collapse_whitespace(left + ' ' + mid + right);
}

// Every char offset where a word may be inserted without splitting a token.
inline std::vector<std::size_t> insertion_points(std::string_view s) {
  std::vector<std::size_t> out{0};
  for (std::size_t i = 1; i < s.size(); ++i) {
    if (text::is_space(s[i])) {
      out.push_back(i);
    } else if (text::is_glue_punct(s[i]) && !text::is_space(s[i - 1])) {
      out.push_back(i);
    }
  }
  if (!s.empty()) out.push_back(s.size());
  return out;
}

}  // namespace detail

/// Applies one edit blindly: Replace/Remove act on the first word-boundary
/// occurrence of old_text; Insert goes after the anchor's first occurrence,
/// at the start for an empty anchor, or before final punctuation otherwise.
inline std::string apply_edit(std::string_view sentence, const EditOp& op) {
  if (!op.valid()) throw MorphError(MorphErrc::InvalidOp, "operation payloads violate its kind");
  const std::string s = text::collapse_whitespace(sentence);
  switch (op.kind) {
    case OpKind::Replace:
    case OpKind::Remove: {
      std::size_t pos = text::find_word(s, op.old_text);
      if (pos == std::string::npos) {
        throw MorphError(MorphErrc::OldTextNotFound, "'" + op.old_text + "' not found in '" + s + "'");
      }
      return detail::splice(s, pos, op.old_text.size(), op.new_text);
    }
    case OpKind::Insert: {
      if (op.anchor) {
        if (op.anchor->empty()) return text::collapse_whitespace(op.new_text + ' ' + s);
        std::size_t pos = text::find_word(s, *op.anchor);
        if (pos == std::string::npos) {
          throw MorphError(MorphErrc::AmbiguousInsert, "anchor '" + *op.anchor + "' not found in '" + s + "'");
        }
        return detail::insert_at(s, pos + op.anchor->size(), op.new_text);
      }
      auto [body, terminal] = text::split_terminal(s);
      return text::collapse_whitespace(body + ' ' + op.new_text + terminal);
    }
  }
  throw MorphError(MorphErrc::InvalidOp, "unknown operation kind");
}

/// True when some placement of `op` in `prev` yields `next` (normalized).
/// Replace/Remove try every word-boundary occurrence; Insert tries every
/// insertion point. This is how textual consistency is judged for scripts
/// whose ops do not say where they apply.
inline bool step_consistent(std::string_view prev, const EditOp& op, std::string_view next) {
  if (!op.valid()) return false;
  const std::string s = text::collapse_whitespace(prev);
  const std::string target = normalize_text(next);
  if (op.kind == OpKind::Insert) {
    for (std::size_t at : detail::insertion_points(s)) {
      if (normalize_text(detail::insert_at(s, at, op.new_text)) == target) return true;
    }
    if (s.empty()) return normalize_text(op.new_text) == target;
    return false;
  }
  for (std::size_t p = text::find_word(s, op.old_text); p != std::string::npos;
       p = text::find_word(s, op.old_text, p + 1)) {
    if (normalize_text(detail::splice(s, p, op.old_text.size(), op.new_text)) == target) return true;
  }
  return false;
}

// ---------------------------------------------------------------- validation

enum class ChainViolation { None, TooManySteps, PhaseOrder, StepMismatch, HypothesisMismatch };

inline constexpr std::string_view to_string(ChainViolation v) {
  switch (v) {
    case ChainViolation::None: return "none";
    case ChainViolation::TooManySteps: return "too_many_steps";
    case ChainViolation::PhaseOrder: return "phase_order";
    case ChainViolation::StepMismatch: return "step_mismatch";
    case ChainViolation::HypothesisMismatch: return "hypothesis_mismatch";
  }
  return "none";
}

struct ValidationResult {
  ChainViolation violation = ChainViolation::None;
  std::size_t step = 0;  // 1-based offending step, 0 when not step specific

  bool ok() const { return violation == ChainViolation::None; }
  explicit operator bool() const { return ok(); }
};

/// Checks phase order, step-by-step textual consistency and that the last
/// sentence reaches the hypothesis. Zero-step chains are valid (and lazy).
inline ValidationResult validate_chain(const MorphChain& chain,
                                       std::optional<std::size_t> max_steps = std::nullopt) {
  if (max_steps && chain.steps.size() > *max_steps) return {ChainViolation::TooManySteps, 0};
  for (std::size_t i = 1; i < chain.steps.size(); ++i) {
    if (phase_rank(chain.steps[i].op.kind) < phase_rank(chain.steps[i - 1].op.kind)) {
      return {ChainViolation::PhaseOrder, i + 1};
    }
  }
  for (std::size_t i = 1; i <= chain.steps.size(); ++i) {
    if (!step_consistent(chain.sentence(i - 1), chain.steps[i - 1].op, chain.sentence(i))) {
      return {ChainViolation::StepMismatch, i};
    }
  }
  if (!chain.steps.empty() && normalize_text(chain.steps.back().sentence) != normalize_text(chain.hypothesis)) {
    return {ChainViolation::HypothesisMismatch, chain.steps.size()};
  }
  return {};
}

// ---------------------------------------------------------------- synthesis

/// One column of a word alignment: a match has both indices, a deletion only
/// `src`, an insertion only `tgt`.
struct AlignColumn {
  int src = -1;
  int tgt = -1;
  friend bool operator==(const AlignColumn&, const AlignColumn&) = default;
};

/// Minimal word-level edit alignment under insert/delete costs (a changed
/// word is a deletion plus an insertion). Ties prefer a match, then
/// deletion, then insertion.
inline std::vector<AlignColumn> align_words(const std::vector<std::string>& src,
                                            const std::vector<std::string>& tgt) {
  const std::size_t m = src.size();
  const std::size_t n = tgt.size();
  std::vector<std::size_t> d((m + 1) * (n + 1), 0);
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return d[i * (n + 1) + j]; };
  for (std::size_t i = m + 1; i-- > 0;) {
    for (std::size_t j = n + 1; j-- > 0;) {
      if (i == m) {
        at(i, j) = n - j;
      } else if (j == n) {
        at(i, j) = m - i;
      } else {
        std::size_t best = std::min(at(i + 1, j), at(i, j + 1)) + 1;
        if (src[i] == tgt[j]) best = std::min(best, at(i + 1, j + 1));
        at(i, j) = best;
      }
    }
  }
  std::vector<AlignColumn> cols;
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < m || j < n) {
    if (i < m && j < n && src[i] == tgt[j] && at(i, j) == at(i + 1, j + 1)) {
      cols.push_back({static_cast<int>(i++), static_cast<int>(j++)});
    } else if (i < m && at(i, j) == at(i + 1, j) + 1) {
      cols.push_back({static_cast<int>(i++), -1});
    } else {
      cols.push_back({-1, static_cast<int>(j++)});
    }
  }
  return cols;
}

namespace detail {

struct Segment {
  std::size_t c0 = 0;  // column range [c0, c1)
  std::size_t c1 = 0;
};

class ChainBuilder {
 public:
  ChainBuilder(std::string premise, std::string hypothesis, std::size_t max_steps)
      : premise_(std::move(premise)), hypothesis_(std::move(hypothesis)), max_steps_(max_steps) {
    auto [p_body, p_term] = text::split_terminal(text::collapse_whitespace(premise_));
    auto [h_body, h_term] = text::split_terminal(text::collapse_whitespace(hypothesis_));
    terminal_ = p_term.empty() ? h_term : p_term;
    src_ = text::split_tokens(p_body);
    tgt_ = text::split_tokens(h_body);
    cols_ = align_words(src_, tgt_);
  }

  MorphChain build() {
    MorphChain chain{premise_, {}, hypothesis_};
    if (normalize_text(premise_) == normalize_text(hypothesis_)) return chain;
    group_segments();
    cap_segments();
    std::vector<bool> forced(segments_.size(), false);
    for (std::size_t round = 0; round <= segments_.size(); ++round) {
      auto steps = derive(forced);
      if (steps) {
        if (steps->empty()) break;
        chain.steps = std::move(*steps);
        if (validate_chain(chain)) return chain;
        break;
      }
    }
    chain.steps = {{EditOp::replace(normalize_text(premise_), normalize_text(hypothesis_)),
                    render_target()}};
    return chain;
  }

 private:
  bool is_match(const AlignColumn& c) const { return c.src >= 0 && c.tgt >= 0; }

  // One segment per maximal run of unmatched columns.
  void group_segments() {
    for (std::size_t c = 0; c < cols_.size(); ++c) {
      if (is_match(cols_[c])) continue;
      if (!segments_.empty() && segments_.back().c1 == c) {
        segments_.back().c1 = c + 1;
      } else {
        segments_.push_back({c, c + 1});
      }
    }
  }

  // Greedily merges the adjacent pair whose merged span is shortest.
  void cap_segments() {
    while (segments_.size() > max_steps_) {
      std::size_t best = 0;
      std::size_t best_span = SIZE_MAX;
      for (std::size_t k = 0; k + 1 < segments_.size(); ++k) {
        std::size_t span = segments_[k + 1].c1 - segments_[k].c0;
        if (span < best_span) {
          best_span = span;
          best = k;
        }
      }
      segments_[best].c1 = segments_[best + 1].c1;
      segments_.erase(segments_.begin() + static_cast<std::ptrdiff_t>(best) + 1);
    }
  }

  OpKind kind_of(const Segment& s) const {
    bool has_old = false;
    bool has_new = false;
    for (std::size_t c = s.c0; c < s.c1; ++c) {
      has_old |= cols_[c].src >= 0;
      has_new |= cols_[c].tgt >= 0;
    }
    if (!has_old) return OpKind::Insert;
    if (!has_new) return OpKind::Remove;
    return OpKind::Replace;
  }

  std::vector<std::string> words(const Segment& s, bool target) const {
    std::vector<std::string> out;
    for (std::size_t c = s.c0; c < s.c1; ++c) {
      int idx = target ? cols_[c].tgt : cols_[c].src;
      if (idx >= 0) out.push_back(target ? tgt_[idx] : src_[idx]);
    }
    return out;
  }

  // Current tokens paired with their column, given which segments are applied.
  std::vector<std::pair<std::string, std::size_t>> tokens(const std::vector<bool>& applied) const {
    std::vector<int> owner(cols_.size(), -1);
    for (std::size_t k = 0; k < segments_.size(); ++k) {
      for (std::size_t c = segments_[k].c0; c < segments_[k].c1; ++c) owner[c] = static_cast<int>(k);
    }
    std::vector<std::pair<std::string, std::size_t>> out;
    for (std::size_t c = 0; c < cols_.size(); ++c) {
      bool use_target = owner[c] >= 0 && applied[static_cast<std::size_t>(owner[c])];
      if (owner[c] < 0) use_target = false;
      int idx = use_target ? cols_[c].tgt : cols_[c].src;
      if (idx >= 0) out.emplace_back(use_target ? tgt_[idx] : src_[idx], c);
    }
    return out;
  }

  std::string render(const std::vector<bool>& applied) const {
    std::vector<std::string> ws;
    for (auto& t : tokens(applied)) ws.push_back(t.first);
    return text::join(ws) + terminal_;
  }

  std::string render_target() const { return text::join(tgt_) + terminal_; }

  static bool reproduces(const std::string& current, const EditOp& op, const std::string& next) {
    try {
      return normalize_text(apply_edit(current, op)) == normalize_text(next);
    } catch (const MorphError&) {
      return false;
    }
  }

  static std::string join_parts(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::vector<std::string> all(a);
    all.insert(all.end(), b.begin(), b.end());
    return text::join(all);
  }

  // Builds a Replace that blind application places correctly, widening the
  // span with left and then right context words as needed.
  static std::optional<EditOp> contextual_replace(const std::vector<std::string>& before,
                                                  const std::vector<std::string>& after,
                                                  const std::vector<std::string>& old_w,
                                                  const std::vector<std::string>& new_w,
                                                  const std::string& current, const std::string& next) {
    for (std::size_t k = 0; k <= before.size(); ++k) {
      std::vector<std::string> ctx(before.end() - static_cast<std::ptrdiff_t>(k), before.end());
      EditOp op = EditOp::replace(join_parts(ctx, old_w), join_parts(ctx, new_w));
      if (op.valid() && reproduces(current, op, next)) return op;
    }
    for (std::size_t k = 1; k <= after.size(); ++k) {
      std::vector<std::string> ctx(after.begin(), after.begin() + static_cast<std::ptrdiff_t>(k));
      EditOp op = EditOp::replace(join_parts(old_w, ctx), join_parts(new_w, ctx));
      if (op.valid() && reproduces(current, op, next)) return op;
    }
    return std::nullopt;
  }

  std::optional<std::vector<MorphStep>> derive(std::vector<bool>& forced) const {
    std::vector<std::size_t> order;
    for (int phase = 0; phase < 3; ++phase) {
      for (std::size_t k = 0; k < segments_.size(); ++k) {
        OpKind kind = forced[k] ? OpKind::Replace : kind_of(segments_[k]);
        if (phase_rank(kind) == phase) order.push_back(k);
      }
    }
    std::vector<bool> applied(segments_.size(), false);
    std::string current = premise_;
    std::vector<MorphStep> steps;
    for (std::size_t k : order) {
      const Segment& seg = segments_[k];
      std::vector<std::string> before;
      std::vector<std::string> after;
      for (auto& [w, c] : tokens(applied)) {
        if (c < seg.c0) before.push_back(w);
        if (c >= seg.c1) after.push_back(w);
      }
      applied[k] = true;
      std::string next = render(applied);
      auto old_w = words(seg, false);
      auto new_w = words(seg, true);
      std::optional<EditOp> op;
      switch (forced[k] ? OpKind::Replace : kind_of(seg)) {
        case OpKind::Replace:
          op = contextual_replace(before, after, old_w, new_w, current, next);
          break;
        case OpKind::Remove: {
          EditOp rm = EditOp::remove(text::join(old_w));
          if (!reproduces(current, rm, next)) {
            forced[k] = true;
            return std::nullopt;
          }
          op = rm;
          break;
        }
        case OpKind::Insert: {
          if (before.empty()) {
            EditOp ins = EditOp::insert(text::join(new_w), std::string());
            if (reproduces(current, ins, next)) op = ins;
          }
          for (std::size_t n = 1; !op && n <= before.size(); ++n) {
            std::vector<std::string> ctx(before.end() - static_cast<std::ptrdiff_t>(n), before.end());
            EditOp ins = EditOp::insert(text::join(new_w), text::join(ctx));
            if (reproduces(current, ins, next)) op = ins;
          }
          break;
        }
      }
      if (!op) return std::vector<MorphStep>{};  // unplaceable; caller falls back
      steps.push_back({*op, next});
      current = next;
    }
    return steps;
  }

  std::string premise_;
  std::string hypothesis_;
  std::size_t max_steps_;
  std::string terminal_;
  std::vector<std::string> src_;
  std::vector<std::string> tgt_;
  std::vector<AlignColumn> cols_;
  std::vector<Segment> segments_;
};

}  // namespace detail

/// Deterministic morpher: minimal word alignment, each run of unmatched words
/// merged into one phrase op, phase-ordered, capped at `max_steps` by merging the adjacent
/// pair with the shortest combined span. The result always validates; equal
/// sentences give a zero-step (lazy) chain.
inline MorphChain synthesize_chain(std::string_view premise, std::string_view hypothesis,
                                   std::size_t max_steps = kDefaultMaxSteps) {
  if (normalize_text(premise).empty() || normalize_text(hypothesis).empty()) {
    throw MorphError(MorphErrc::InvalidInput, "premise and hypothesis must be nonempty");
  }
  if (max_steps == 0) throw MorphError(MorphErrc::InvalidInput, "max_steps must be positive");
  return detail::ChainBuilder(std::string(premise), std::string(hypothesis), max_steps).build();
}

// ---------------------------------------------------------------- JSON

inline void to_json(json& j, const EditOp& op) {
  j = json{{"kind", to_string(op.kind)}, {"old", op.old_text}, {"new", op.new_text}};
  if (op.anchor) j["anchor"] = *op.anchor;
}

inline void from_json(const json& j, EditOp& op) {
  auto kind = op_kind_from_string(j.at("kind").get<std::string>());
  if (!kind) throw MorphError(MorphErrc::InvalidOp, "unknown op kind " + j.at("kind").dump());
  op.kind = *kind;
  op.old_text = text::collapse_whitespace(j.value("old", std::string()));
  op.new_text = text::collapse_whitespace(j.value("new", std::string()));
  op.anchor.reset();
  if (j.contains("anchor") && j["anchor"].is_string()) op.anchor = j["anchor"].get<std::string>();
  if (!op.valid()) throw MorphError(MorphErrc::InvalidOp, "op payloads violate kind: " + j.dump());
}

inline void to_json(json& j, const MorphStep& s) { j = json{{"op", s.op}, {"sentence", s.sentence}}; }
inline void from_json(const json& j, MorphStep& s) {
  s.op = j.at("op").get<EditOp>();
  s.sentence = j.at("sentence").get<std::string>();
}

inline void to_json(json& j, const MorphChain& c) {
  j = json{{"premise", c.premise}, {"hypothesis", c.hypothesis}, {"steps", c.steps}};
}
inline void from_json(const json& j, MorphChain& c) {
  c.premise = j.at("premise").get<std::string>();
  c.hypothesis = j.at("hypothesis").get<std::string>();
  c.steps = j.value("steps", std::vector<MorphStep>{});
}

}  // namespace morphnli
