#pragma once

// Prompt rendering for the teacher and explanation requests, and the
// line-oriented morphism script format:
//
//   Morphism:
//
//   -Replacements:
//   (replace, old, new)
//   sentence
//
//   -Removals:
//   (remove, text)
//   sentence
//
//   -Insertions:
//   (insert, text)
//   sentence

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "morphnli/morph_model.hpp"
#include "morphnli/records.hpp"
#include "morphnli/text.hpp"

namespace morphnli {

inline constexpr std::string_view kDefaultTeacherRules = R"RULES(Take a deep breath and work on this problem step-by-step. Please generate intermediate sentences from `Sentence 1` to `Sentence 2`, essentially morphing `Sentence 1` to `Sentence 2` through successive atomic edits. Each edit gives another interpolated sentence. Limit the number of interpolation/changes to at most 7. The atomic edits that you are allowed to do have the following structure, manipulating short parts of text:

1. Replace operations - (replace, <old_text>, <new_text>)
2. Remove operations - (remove, <text>)
3. Insert operations - (insert, <text>)

You are required to do all the operations in the order specified above: first just replacements, then removals and lastly insertions if needed. Each edit must consider similar syntactic groups, so you are not allowed to break syntactic boundaries. Perform multiple small operations, rather than one operation that changes the whole text. For example, a replace operation that changes most of the text could be broken down into multiple replace operations, followed by remove operations.

The replacements are the most usual operations. These operations must be done by comparing syntactically similar word groups from the current sentence with ones from the target sentence (Sentence 2). The replacement text may be a rephrase of the starting text group, or even a contradictory statement, depending on the form and meaning of the final sentence.

The removals are done on groups of text that are totally unrelated to the final sentence. This includes additional information specified in the starting sentence that disappears while morphing towards the final sentence.

The insertions represent new text that is unrelated to the knowledge presented in the starting sentence. Do inserts only when it is necessary, when inserting text that is totally unrelated to the textual constructs of the current sentence. Under no circumstances you are allowed to remove certain words then insert related words. This should be done using a replacement operation instead.

I will give some examples below. Keep the same structure of your response as seen in the examples, with no additional text/explanations.)RULES";

inline constexpr std::string_view kDefaultExplanationTemplate = R"EXPL(You have to provide the label and explanations for a Natural Language Inference (NLI) task. Natural Language Inference is the task of determining whether a "hypothesis" is true (entailment), false (contradiction), or undetermined (neutral) given a "premise".
You will be given the premise and the hypothesis, and must state if they have an entailment, contradiction or neutral relation. You are then required to provide the reasoning process that explains why the label applies for the pair of sentences.
The explanations must be clear and concise, using natural language.

Premise:
{premise}

Hypothesis:
{hypothesis}

Label and Reasoning process:)EXPL";

inline constexpr std::string_view kTeacherRequestLine =
    "Generate the intermediate sentences and print the atomic edits for the following pair of sentences:";

inline constexpr std::size_t kDefaultIclSlots = 12;

struct PromptTemplates {
  std::string teacher_rules{kDefaultTeacherRules};
  std::string explanation{kDefaultExplanationTemplate};
  std::size_t icl_slots = kDefaultIclSlots;
};

namespace detail {

inline std::string read_template_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string s = ss.str();
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
  return s;
}

// Single pass over `tmpl`; substituted values are never rescanned.
inline std::string fill_placeholders(std::string_view tmpl, const std::map<std::string, std::string>& values) {
  std::string out;
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      std::size_t close = tmpl.find('}', i + 1);
      if (close != std::string_view::npos) {
        auto it = values.find(std::string(tmpl.substr(i + 1, close - i - 1)));
        if (it != values.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out.push_back(tmpl[i++]);
  }
  return out;
}

}  // namespace detail

/// Overrides the defaults with teacher_rules.txt / explanation.txt from `dir`
/// when those files exist.
inline PromptTemplates load_templates(const std::filesystem::path& dir) {
  PromptTemplates t;
  if (std::filesystem::exists(dir / "teacher_rules.txt")) t.teacher_rules = detail::read_template_file(dir / "teacher_rules.txt");
  if (std::filesystem::exists(dir / "explanation.txt")) t.explanation = detail::read_template_file(dir / "explanation.txt");
  return t;
}

// ---------------------------------------------------------------- parsing

enum class ParseErrc { UnknownSection, OpSentenceMismatch, AmbiguousSplit, PhaseOrderViolation, MalformedOp };

inline constexpr std::string_view to_string(ParseErrc e) {
  switch (e) {
    case ParseErrc::UnknownSection: return "UnknownSection";
    case ParseErrc::OpSentenceMismatch: return "OpSentenceMismatch";
    case ParseErrc::AmbiguousSplit: return "AmbiguousSplit";
    case ParseErrc::PhaseOrderViolation: return "PhaseOrderViolation";
    case ParseErrc::MalformedOp: return "MalformedOp";
  }
  return "MalformedOp";
}

struct ParseIssue {
  std::size_t line_no = 0;  // 1-based
  ParseErrc code = ParseErrc::MalformedOp;
  std::string reason;
};

struct RawMorphOutput {
  std::string text;
  std::optional<MorphChain> parsed;
  std::vector<ParseIssue> errors;

  bool ok() const { return parsed.has_value(); }
};

inline void to_json(json& j, const ParseIssue& p) {
  j = json{{"line", p.line_no}, {"error", to_string(p.code)}, {"reason", p.reason}};
}

namespace detail {

enum class LineKind { Blank, MorphismHeader, Section, Op, Sentence };

inline LineKind classify_line(std::string_view t) {
  if (t.empty()) return LineKind::Blank;
  if (text::to_lower(t) == "morphism:") return LineKind::MorphismHeader;
  if (t.front() == '-' && t.back() == ':') return LineKind::Section;
  if (t.size() >= 2 && t.front() == '(' && t.back() == ')') return LineKind::Op;
  return LineKind::Sentence;
}

inline std::optional<OpKind> section_phase(std::string_view t) {
  std::string name = text::to_lower(text::trim(t.substr(1, t.size() - 2)));
  if (name == "replacements") return OpKind::Replace;
  if (name == "removals") return OpKind::Remove;
  if (name == "insertions") return OpKind::Insert;
  return std::nullopt;
}

inline std::string_view section_header(OpKind k) {
  switch (k) {
    case OpKind::Replace: return "-Replacements:";
    case OpKind::Remove: return "-Removals:";
    case OpKind::Insert: return "-Insertions:";
  }
  return "";
}

struct OpLine {
  OpKind kind = OpKind::Replace;
  std::string payload;
};

inline std::optional<OpLine> split_op_line(std::string_view t) {
  std::string_view inner = t.substr(1, t.size() - 2);
  std::size_t comma = inner.find(',');
  if (comma == std::string_view::npos) return std::nullopt;
  auto kind = op_kind_from_string(text::to_lower(text::trim(inner.substr(0, comma))));
  if (!kind) return std::nullopt;
  return OpLine{*kind, std::string(inner.substr(comma + 1))};
}

/// Every (old, new) split of a replace payload at a comma such that `old`
/// occurs in `prev` and `new` occurs in `next`.
inline std::vector<EditOp> replace_splits(std::string_view payload, std::string_view prev, std::string_view next) {
  std::vector<EditOp> found;
  std::string p = text::collapse_whitespace(prev);
  std::string n = text::collapse_whitespace(next);
  for (std::size_t k = payload.find(','); k != std::string_view::npos; k = payload.find(',', k + 1)) {
    std::string old_text = text::collapse_whitespace(payload.substr(0, k));
    std::string new_text = text::collapse_whitespace(payload.substr(k + 1));
    if (old_text.empty() || new_text.empty()) continue;
    if (text::contains_word(p, old_text) && text::contains_word(n, new_text)) {
      found.push_back(EditOp::replace(old_text, new_text));
    }
  }
  return found;
}

inline std::vector<std::string> split_lines(std::string_view s) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= s.size()) {
    std::size_t nl = s.find('\n', start);
    std::string_view line = s.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.emplace_back(line);
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  return lines;
}

}  // namespace detail

/// Parses a morphism script. `premise` is the sentence the first op applies
/// to; the chain's hypothesis is `hypothesis` when given, else the last
/// sentence. Never throws on malformed text.
inline RawMorphOutput parse_morphism_output(std::string_view output, std::string_view premise,
                                            std::optional<std::string_view> hypothesis = std::nullopt) {
  using detail::LineKind;
  RawMorphOutput r;
  r.text = std::string(output);
  auto lines = detail::split_lines(output);

  std::size_t begin = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (detail::classify_line(text::trim(lines[i])) == LineKind::MorphismHeader) {
      begin = i + 1;
      break;
    }
  }

  auto fail = [&](std::size_t line, ParseErrc code, std::string reason) {
    r.errors.push_back({line + 1, code, std::move(reason)});
  };

  std::vector<MorphStep> steps;
  std::string prev(text::trim(premise));
  int phase = -1;
  std::optional<detail::OpLine> pending;
  std::size_t pending_line = 0;

  for (std::size_t i = begin; i < lines.size(); ++i) {
    std::string_view t = text::trim(lines[i]);
    LineKind kind = detail::classify_line(t);
    if (pending) {
      if (kind == LineKind::Blank) continue;
      if (kind == LineKind::Sentence) {
        std::string sentence(t);
        EditOp op;
        if (pending->kind == OpKind::Replace) {
          auto splits = detail::replace_splits(pending->payload, prev, sentence);
          if (splits.size() == 1) {
            op = splits.front();
          } else {
            fail(pending_line, ParseErrc::AmbiguousSplit,
                 std::to_string(splits.size()) + " consistent comma splits in replace payload");
          }
        } else {
          std::string payload = text::collapse_whitespace(pending->payload);
          op = pending->kind == OpKind::Remove ? EditOp::remove(payload) : EditOp::insert(payload);
        }
        steps.push_back({op, sentence});
        prev = sentence;
        pending.reset();
        continue;
      }
      fail(pending_line, ParseErrc::OpSentenceMismatch, "op line without a following sentence");
      pending.reset();
    }
    switch (kind) {
      case LineKind::Blank:
        break;
      case LineKind::MorphismHeader:
        fail(i, ParseErrc::UnknownSection, "repeated Morphism: header");
        break;
      case LineKind::Section: {
        auto ph = detail::section_phase(t);
        if (!ph) {
          fail(i, ParseErrc::UnknownSection, "unknown section " + std::string(t));
        } else if (phase_rank(*ph) <= phase) {
          fail(i, ParseErrc::PhaseOrderViolation, "section " + std::string(t) + " out of order");
        } else {
          phase = phase_rank(*ph);
        }
        break;
      }
      case LineKind::Op: {
        auto op = detail::split_op_line(t);
        if (!op || (op->kind != OpKind::Replace && text::collapse_whitespace(op->payload).empty()) ||
            (op->kind == OpKind::Replace && op->payload.find(',') == std::string::npos)) {
          fail(i, ParseErrc::MalformedOp, "cannot read op line " + std::string(t));
          // Still expects a sentence line next.
          pending = detail::OpLine{OpKind::Remove, "?"};
          pending_line = i;
          break;
        }
        if (phase < 0) {
          fail(i, ParseErrc::UnknownSection, "op line outside any section");
        } else if (phase_rank(op->kind) != phase) {
          fail(i, ParseErrc::PhaseOrderViolation,
               std::string(to_string(op->kind)) + " op inside " + std::string(detail::section_header(static_cast<OpKind>(phase))));
        }
        pending = std::move(op);
        pending_line = i;
        break;
      }
      case LineKind::Sentence:
        fail(i, ParseErrc::OpSentenceMismatch, "sentence line without a preceding op");
        break;
    }
  }
  if (pending) fail(pending_line, ParseErrc::OpSentenceMismatch, "op line without a following sentence");

  if (r.errors.empty()) {
    MorphChain c;
    c.premise = std::string(premise);
    c.steps = std::move(steps);
    if (hypothesis) {
      c.hypothesis = std::string(*hypothesis);
    } else if (!c.steps.empty()) {
      c.hypothesis = c.steps.back().sentence;
    }
    r.parsed = std::move(c);
  }
  return r;
}

// ---------------------------------------------------------------- rendering

inline std::string render_op_line(const EditOp& op) {
  switch (op.kind) {
    case OpKind::Replace: return "(replace, " + op.old_text + ", " + op.new_text + ")";
    case OpKind::Remove: return "(remove, " + op.old_text + ")";
    case OpKind::Insert: return "(insert, " + op.new_text + ")";
  }
  return "";
}

/// Renders a valid chain in the script layout; parsing the result with the
/// chain's premise and hypothesis gives back the same chain.
inline std::string canonical_render(const MorphChain& chain) {
  auto v = validate_chain(chain);
  if (!v) {
    throw MorphError(MorphErrc::InvalidChain,
                     std::string(to_string(v.violation)) + " at step " + std::to_string(v.step));
  }
  auto single_line = [](std::string_view s) { return s.find('\n') == std::string_view::npos && s.find('\r') == std::string_view::npos; };
  std::string out = "Morphism:\n";
  for (OpKind phase : {OpKind::Replace, OpKind::Remove, OpKind::Insert}) {
    out += "\n";
    out += detail::section_header(phase);
    out += "\n";
    for (std::size_t i = 0; i < chain.steps.size(); ++i) {
      const auto& st = chain.steps[i];
      if (st.op.kind != phase) continue;
      std::string line = render_op_line(st.op);
      if (!single_line(line) || !single_line(st.sentence) ||
          detail::classify_line(st.sentence) != detail::LineKind::Sentence || text::trim(st.sentence) != st.sentence) {
        throw MorphError(MorphErrc::InvalidChain, "step " + std::to_string(i + 1) + " cannot be written as script lines");
      }
      if (phase == OpKind::Replace) {
        std::string payload = st.op.old_text + ", " + st.op.new_text;
        auto splits = detail::replace_splits(payload, chain.sentence(i), st.sentence);
        if (splits.size() != 1 || !(splits.front() == st.op)) {
          throw MorphError(MorphErrc::InvalidChain, "replace at step " + std::to_string(i + 1) + " does not read back uniquely");
        }
      }
      out += line;
      out += "\n";
      out += st.sentence;
      out += "\n";
    }
  }
  return out;
}

// ---------------------------------------------------------------- prompts

/// One in-context example: both sentences followed by the scripted chain.
inline std::string render_example_block(const MorphChain& chain) {
  return "Sentence 1:\n" + text::collapse_whitespace(chain.premise) + "\nSentence 2:\n" +
         text::collapse_whitespace(chain.hypothesis) + "\n\n" + canonical_render(chain);
}

inline std::string render_teacher_prompt(const PairRecord& pair, const std::vector<AnnotatedExample>& examples,
                                         const PromptTemplates& templates = {}) {
  if (examples.size() > templates.icl_slots) {
    throw MorphError(MorphErrc::InvalidInput, std::to_string(examples.size()) + " examples for " +
                                                  std::to_string(templates.icl_slots) + " slots");
  }
  std::string out = templates.teacher_rules;
  out += "\n\n";
  for (const auto& ex : examples) {
    out += render_example_block(ex.chain);
    out += "\n";
  }
  out += kTeacherRequestLine;
  out += "\n\nSentence 1:\n";
  out += text::collapse_whitespace(pair.premise);
  out += "\n\nSentence 2:\n";
  out += text::collapse_whitespace(pair.hypothesis);
  out += "\n\nMorphism:";
  return out;
}

inline std::string render_explanation_prompt(const PairRecord& pair, const PromptTemplates& templates = {}) {
  if (normalize_text(pair.premise).empty() || normalize_text(pair.hypothesis).empty()) {
    throw MorphError(MorphErrc::InvalidInput, "explanation prompt needs both sentences");
  }
  return detail::fill_placeholders(templates.explanation,
                                   {{"premise", text::collapse_whitespace(pair.premise)},
                                    {"hypothesis", text::collapse_whitespace(pair.hypothesis)}});
}

}  // namespace morphnli
