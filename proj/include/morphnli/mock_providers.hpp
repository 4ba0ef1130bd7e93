#pragma once

// Deterministic offline providers: scripted chat, hash-seeded embeddings and
// a small rule-based NLI oracle.

#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "morphnli/hashing.hpp"
#include "morphnli/providers.hpp"
#include "morphnli/script_io.hpp"

namespace morphnli {

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ProviderError(ProviderErrc::Config, "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ProviderError(ProviderErrc::Config, path + ": " + e.what());
  }
}

/// Last "Sentence 1:" / "Sentence 2:" pair in a morph prompt.
inline std::optional<std::pair<std::string, std::string>> extract_target_pair(const std::string& prompt) {
  auto line_after = [&](const std::string& tag) -> std::optional<std::string> {
    std::size_t p = prompt.rfind(tag);
    if (p == std::string::npos) return std::nullopt;
    p += tag.size();
    std::size_t e = prompt.find('\n', p);
    return std::string(text::trim(prompt.substr(p, e == std::string::npos ? std::string::npos : e - p)));
  };
  auto a = line_after("Sentence 1:\n");
  auto b = line_after("Sentence 2:\n");
  if (!a || !b || a->empty() || b->empty()) return std::nullopt;
  return std::make_pair(*a, *b);
}

/// Script format:
///   {"rules": [{"contains": str?, "premise": str?, "sha256": str?,
///               "responses": [str, ...]}],
///    "fallback": "synthesize" | "echo" | "error"}
/// The first rule whose given fields all match the last user message answers;
/// its responses are used in order and the last one repeats. Responses
/// "!429", "!500", "!timeout", "!401" and "!malformed" raise provider errors.
/// Without a matching rule: "synthesize" answers morph prompts with the
/// deterministic chain for the target pair and otherwise echoes; "echo"
/// returns the last non-empty prompt line.
class ScriptedChat : public ChatBackend {
 public:
  ScriptedChat() = default;
  explicit ScriptedChat(const json& script) {
    fallback_ = script.value("fallback", "synthesize");
    if (fallback_ != "synthesize" && fallback_ != "echo" && fallback_ != "error") {
      throw ProviderError(ProviderErrc::Config, "unknown fallback " + fallback_);
    }
    for (const auto& r : script.value("rules", json::array())) {
      Rule rule;
      if (r.contains("contains")) rule.contains = r["contains"].get<std::string>();
      if (r.contains("premise")) rule.premise = r["premise"].get<std::string>();
      if (r.contains("sha256")) rule.sha256 = r["sha256"].get<std::string>();
      rule.responses = r.at("responses").get<std::vector<std::string>>();
      if (rule.responses.empty()) throw ProviderError(ProviderErrc::Config, "rule without responses");
      rules_.push_back(std::move(rule));
    }
  }

  static std::shared_ptr<ScriptedChat> from_file(const std::string& path) {
    return std::make_shared<ScriptedChat>(read_json_file(path));
  }

  std::string complete(const std::vector<ChatMessage>& messages, double) override {
    ++calls_;
    std::string prompt;
    for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
      if (it->role == "user") {
        prompt = it->content;
        break;
      }
    }
    std::optional<std::string> scripted;
    {
      std::lock_guard lock(mu_);
      auto target = extract_target_pair(prompt);
      std::string digest;
      for (auto& rule : rules_) {
        if (rule.contains && prompt.find(*rule.contains) == std::string::npos) continue;
        if (rule.premise && (!target || normalize_text(target->first) != normalize_text(*rule.premise))) continue;
        if (rule.sha256) {
          if (digest.empty()) digest = sha256_hex(prompt);
          if (digest != *rule.sha256) continue;
        }
        scripted = rule.responses[std::min(rule.next, rule.responses.size() - 1)];
        ++rule.next;
        break;
      }
    }
    if (scripted) return resolve(*scripted);
    if (fallback_ == "error") throw ProviderError(ProviderErrc::MalformedResponse, "no scripted response");
    if (fallback_ == "synthesize") {
      if (auto target = extract_target_pair(prompt)) {
        return canonical_render(synthesize_chain(target->first, target->second));
      }
    }
    return last_line(prompt);
  }

  std::size_t calls() const { return calls_; }

 private:
  struct Rule {
    std::optional<std::string> contains;
    std::optional<std::string> premise;
    std::optional<std::string> sha256;
    std::vector<std::string> responses;
    std::size_t next = 0;
  };

  static std::string resolve(const std::string& r) {
    if (r == "!429" || r == "!500" || r == "!timeout") {
      throw ProviderError(ProviderErrc::Transport, "injected " + r.substr(1), true);
    }
    if (r == "!401") throw ProviderError(ProviderErrc::Auth, "injected 401");
    if (r == "!malformed") throw ProviderError(ProviderErrc::MalformedResponse, "injected malformed body");
    return r;
  }

  static std::string last_line(const std::string& prompt) {
    std::size_t end = prompt.size();
    while (end > 0) {
      std::size_t start = prompt.rfind('\n', end - 1);
      start = start == std::string::npos ? 0 : start + 1;
      std::string_view line = text::trim(std::string_view(prompt).substr(start, end - start));
      if (!line.empty()) return std::string(line);
      if (start == 0) break;
      end = start - 1;
    }
    return "";
  }

  std::vector<Rule> rules_;
  std::string fallback_ = "synthesize";
  std::mutex mu_;
  std::atomic<std::size_t> calls_{0};
};

/// Pseudo-random unit vector seeded by a hash of (model id, text).
class HashEmbedder : public EmbedBackend {
 public:
  explicit HashEmbedder(std::size_t dimension = 64, std::string model_id = "hash")
      : dimension_(dimension == 0 ? 64 : dimension), model_id_(std::move(model_id)) {}

  std::vector<double> embed(const std::string& text) override {
    ++calls_;
    std::mt19937_64 rng(fnv1a64(text, fnv1a64(model_id_)));
    std::vector<double> v(dimension_);
    double norm = 0.0;
    while (norm == 0.0) {
      norm = 0.0;
      for (auto& x : v) {
        x = static_cast<double>(rng() >> 11) * 0x1.0p-53 * 2.0 - 1.0;
        norm += x * x;
      }
    }
    norm = std::sqrt(norm);
    for (auto& x : v) x /= norm;
    return v;
  }

  std::size_t calls() const { return calls_; }

 private:
  std::size_t dimension_;
  std::string model_id_;
  std::atomic<std::size_t> calls_{0};
};

/// Table lookup first, then: identical -> entailment; negation present on
/// one side only -> contradiction; hypothesis words within premise words ->
/// entailment; otherwise neutral.
class RuleBasedNli : public NliBackend {
 public:
  explicit RuleBasedNli(const json& table = json::array()) {
    for (const auto& row : table) {
      auto label = label_from_string(text::to_lower(row.at("label").get<std::string>()));
      if (!label) throw ProviderError(ProviderErrc::Config, "bad label in NLI table: " + row.dump());
      table_[key(row.at("premise").get<std::string>(), row.at("hypothesis").get<std::string>())] = *label;
    }
  }

  static std::shared_ptr<RuleBasedNli> from_file(const std::string& path) {
    return std::make_shared<RuleBasedNli>(read_json_file(path));
  }

  NliPrediction classify(const std::string& premise, const std::string& hypothesis) override {
    ++calls_;
    return {decide(premise, hypothesis), std::nullopt};
  }

  NliLabel decide(const std::string& premise, const std::string& hypothesis) const {
    if (auto it = table_.find(key(premise, hypothesis)); it != table_.end()) return it->second;
    if (normalize_text(premise) == normalize_text(hypothesis)) return NliLabel::Entailment;
    auto p = words(premise);
    auto h = words(hypothesis);
    if (negated(p) != negated(h)) return NliLabel::Contradiction;
    if (std::includes(p.begin(), p.end(), h.begin(), h.end())) return NliLabel::Entailment;
    return NliLabel::Neutral;
  }

  std::size_t calls() const { return calls_; }

 private:
  static std::string key(const std::string& p, const std::string& h) {
    return normalize_text(p) + '\x1f' + normalize_text(h);
  }

  static std::set<std::string> words(const std::string& s) {
    std::set<std::string> out;
    for (auto& t : text::split_tokens(text::to_lower(s))) {
      std::size_t b = 0;
      std::size_t e = t.size();
      auto strip = [](char c) { return text::is_glue_punct(c) || c == '"' || c == '\''; };
      while (b < e && strip(t[b])) ++b;
      while (e > b && strip(t[e - 1])) --e;
      if (e > b) out.insert(t.substr(b, e - b));
    }
    return out;
  }

  static bool negated(const std::set<std::string>& ws) {
    static const std::set<std::string> kNeg = {"not", "no", "never", "nobody", "nothing", "none", "cannot"};
    for (auto& w : ws) {
      if (kNeg.count(w)) return true;
      if (w.size() > 3 && w.compare(w.size() - 3, 3, "n't") == 0) return true;
    }
    return false;
  }

  std::unordered_map<std::string, NliLabel> table_;
  std::atomic<std::size_t> calls_{0};
};

}  // namespace morphnli
