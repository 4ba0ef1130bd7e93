#pragma once

// Accuracy, confusion, F1, Cohen's kappa and lexical-sensitivity bins.

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "morphnli/icl_selector.hpp"
#include "morphnli/morph_model.hpp"
#include "morphnli/providers.hpp"

namespace morphnli {

enum class EvalErrc { EmptyInput, NoOverlap, NotEnoughAnnotators, BadEdges, Io };

class EvalError : public std::runtime_error {
 public:
  EvalError(EvalErrc code, const std::string& message) : std::runtime_error(message), code_(code) {}
  EvalErrc code() const noexcept { return code_; }

 private:
  EvalErrc code_;
};

using LabelPair = std::pair<NliLabel, NliLabel>;  // (gold, predicted)
using Confusion = std::array<std::array<std::size_t, 3>, 3>;

inline double compute_accuracy(const std::vector<LabelPair>& results) {
  if (results.empty()) throw EvalError(EvalErrc::EmptyInput, "no results");
  std::size_t hits = 0;
  for (auto& [g, p] : results) hits += g == p;
  return static_cast<double>(hits) / static_cast<double>(results.size());
}

inline Confusion confusion_matrix(const std::vector<LabelPair>& results) {
  if (results.empty()) throw EvalError(EvalErrc::EmptyInput, "no results");
  Confusion c{};
  for (auto& [g, p] : results) ++c[label_index(g)][label_index(p)];
  return c;
}

inline std::size_t trace(const Confusion& c) { return c[0][0] + c[1][1] + c[2][2]; }

/// Classes with no gold and no predicted occurrences get F1 = 0.
inline std::map<NliLabel, double> per_class_f1(const Confusion& c) {
  std::map<NliLabel, double> out;
  for (NliLabel l : kAllLabels) {
    std::size_t i = label_index(l);
    double tp = static_cast<double>(c[i][i]);
    double gold = 0;
    double pred = 0;
    for (std::size_t j = 0; j < 3; ++j) {
      gold += static_cast<double>(c[i][j]);
      pred += static_cast<double>(c[j][i]);
    }
    out[l] = gold + pred == 0 ? 0.0 : 2 * tp / (gold + pred);
  }
  return out;
}

// ---------------------------------------------------------------- eval report

/// One evaluated pair. Unlabelled pairs (no gold) are carried but not scored.
struct EvalRow {
  std::string id;
  std::string premise;
  std::string hypothesis;
  std::optional<NliLabel> gold;
  NliLabel morph = NliLabel::Neutral;
  NliLabel vanilla = NliLabel::Neutral;
};

struct EvalReport {
  std::size_t n = 0;
  std::size_t unlabeled = 0;
  double accuracy_morph = 0;
  double accuracy_vanilla = 0;
  Confusion confusion{};  // gold x morph prediction
  Confusion confusion_vanilla{};
  std::map<NliLabel, double> per_class_f1;
};

inline EvalReport evaluate(const std::vector<EvalRow>& rows) {
  std::vector<LabelPair> morph;
  std::vector<LabelPair> vanilla;
  EvalReport r;
  for (auto& row : rows) {
    if (!row.gold) {
      ++r.unlabeled;
      continue;
    }
    morph.emplace_back(*row.gold, row.morph);
    vanilla.emplace_back(*row.gold, row.vanilla);
  }
  if (morph.empty()) throw EvalError(EvalErrc::EmptyInput, "no rows with gold labels");
  r.n = morph.size();
  r.accuracy_morph = compute_accuracy(morph);
  r.accuracy_vanilla = compute_accuracy(vanilla);
  r.confusion = confusion_matrix(morph);
  r.confusion_vanilla = confusion_matrix(vanilla);
  r.per_class_f1 = per_class_f1(r.confusion);
  return r;
}

inline void to_json(json& j, const EvalReport& r) {
  json f1 = json::object();
  for (auto& [l, v] : r.per_class_f1) f1[std::string(to_string(l))] = v;
  j = json{{"n", r.n},
           {"unlabeled", r.unlabeled},
           {"accuracy_morph", r.accuracy_morph},
           {"accuracy_vanilla", r.accuracy_vanilla},
           {"confusion", r.confusion},
           {"confusion_vanilla", r.confusion_vanilla},
           {"labels", json::array({"entailment", "neutral", "contradiction"})},
           {"per_class_f1", f1}};
}

// ---------------------------------------------------------------- kappa

/// Scores in {0,1,2} keyed by (item, annotator).
class ScoreMatrix {
 public:
  void set(const std::string& item, const std::string& annotator, int score) {
    if (score < 0 || score > 2) throw std::out_of_range("score must be 0, 1 or 2");
    items_.insert(item);
    annotators_.insert(annotator);
    scores_[{item, annotator}] = score;
  }

  std::optional<int> get(const std::string& item, const std::string& annotator) const {
    auto it = scores_.find({item, annotator});
    if (it == scores_.end()) return std::nullopt;
    return it->second;
  }

  const std::set<std::string>& items() const { return items_; }
  const std::set<std::string>& annotators() const { return annotators_; }
  std::size_t size() const { return scores_.size(); }

 private:
  std::set<std::string> items_;
  std::set<std::string> annotators_;
  std::map<std::pair<std::string, std::string>, int> scores_;
};

/// Over items both annotators scored. With degenerate marginals (p_e == 1)
/// returns 1 when they agree everywhere, else 0.
inline double cohen_kappa(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("score vectors differ in length");
  if (a.empty()) throw EvalError(EvalErrc::NoOverlap, "no commonly scored items");
  const double n = static_cast<double>(a.size());
  std::array<double, 3> ma{};
  std::array<double, 3> mb{};
  double agree = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma.at(static_cast<std::size_t>(a[i])) += 1;
    mb.at(static_cast<std::size_t>(b[i])) += 1;
    agree += a[i] == b[i];
  }
  double po = agree / n;
  double pe = 0;
  bool degenerate = false;
  for (std::size_t k = 0; k < 3; ++k) {
    pe += (ma[k] / n) * (mb[k] / n);
    degenerate = degenerate || (ma[k] == n && mb[k] == n);
  }
  if (degenerate) return po == 1.0 ? 1.0 : 0.0;
  return (po - pe) / (1.0 - pe);
}

inline double cohen_kappa(const ScoreMatrix& m, const std::string& a, const std::string& b) {
  std::vector<int> sa;
  std::vector<int> sb;
  for (auto& item : m.items()) {
    auto x = m.get(item, a);
    auto y = m.get(item, b);
    if (x && y) {
      sa.push_back(*x);
      sb.push_back(*y);
    }
  }
  if (sa.empty()) throw EvalError(EvalErrc::NoOverlap, a + " and " + b + " share no scored items");
  return cohen_kappa(sa, sb);
}

struct AgreementSummary {
  std::map<std::pair<std::string, std::string>, double> pairwise;
  double average = 0;
  double max = 0;
};

inline void to_json(json& j, const AgreementSummary& s) {
  json pairs = json::array();
  for (auto& [k, v] : s.pairwise) pairs.push_back({{"a", k.first}, {"b", k.second}, {"kappa", v}});
  j = json{{"pairwise", pairs}, {"average", s.average}, {"max", s.max}};
}

/// Every annotator pair with overlapping items; pairs without overlap are left out.
inline AgreementSummary agreement_summary(const ScoreMatrix& m) {
  std::vector<std::string> ann(m.annotators().begin(), m.annotators().end());
  if (ann.size() < 2) throw EvalError(EvalErrc::NotEnoughAnnotators, "need at least two annotators");
  AgreementSummary s;
  double sum = 0;
  s.max = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < ann.size(); ++i) {
    for (std::size_t j = i + 1; j < ann.size(); ++j) {
      double k;
      try {
        k = cohen_kappa(m, ann[i], ann[j]);
      } catch (const EvalError& e) {
        if (e.code() == EvalErrc::NoOverlap) continue;
        throw;
      }
      s.pairwise[{ann[i], ann[j]}] = k;
      sum += k;
      s.max = std::max(s.max, k);
    }
  }
  if (s.pairwise.empty()) throw EvalError(EvalErrc::NoOverlap, "no annotator pair shares an item");
  s.average = sum / static_cast<double>(s.pairwise.size());
  return s;
}

// ---------------------------------------------------------------- word difference

using Stemmer = std::function<std::string(const std::string&)>;

/// Lowercases and strips a few English suffixes.
inline std::string suffix_stem(const std::string& word) {
  std::string w = text::to_lower(word);
  auto ends = [&](std::string_view s) { return w.size() > s.size() && w.compare(w.size() - s.size(), s.size(), s) == 0; };
  auto cut = [&](std::size_t n) { w.resize(w.size() - n); };
  if (ends("sses")) {
    cut(2);
  } else if (ends("ies") && w.size() > 4) {
    cut(3);
    w += 'y';
  } else if (ends("ing") && w.size() > 5) {
    cut(3);
  } else if (ends("ed") && w.size() > 4) {
    cut(2);
  } else if (ends("s") && !ends("ss") && !ends("us") && w.size() > 3) {
    cut(1);
  }
  // runn -> run, stopp -> stop
  if (w.size() > 3 && w[w.size() - 1] == w[w.size() - 2] && std::string("bdgmnprt").find(w.back()) != std::string::npos) {
    w.pop_back();
  }
  return w;
}

/// Two-column TSV (word, lemma); unknown words fall back to `fallback`.
inline Stemmer lemma_map_stemmer(const std::string& path, Stemmer fallback = suffix_stem) {
  std::ifstream in(path);
  if (!in) throw EvalError(EvalErrc::Io, "cannot open lemma map " + path);
  auto table = std::make_shared<std::unordered_map<std::string, std::string>>();
  std::string line;
  while (std::getline(in, line)) {
    auto tab = line.find('\t');
    if (tab == std::string::npos) continue;
    (*table)[text::to_lower(line.substr(0, tab))] = std::string(text::trim(line.substr(tab + 1)));
  }
  return [table, fallback](const std::string& w) {
    auto it = table->find(text::to_lower(w));
    return it != table->end() ? it->second : fallback(w);
  };
}

inline std::set<std::string> stem_set(const std::string& sentence, const Stemmer& stem) {
  std::set<std::string> out;
  for (auto& t : text::split_tokens(sentence)) {
    std::size_t b = 0;
    std::size_t e = t.size();
    while (b < e && !std::isalnum(static_cast<unsigned char>(t[b]))) ++b;
    while (e > b && !std::isalnum(static_cast<unsigned char>(t[e - 1]))) --e;
    if (e > b) out.insert(stem(t.substr(b, e - b)));
  }
  return out;
}

/// Size of the symmetric difference of the stemmed token sets.
inline std::size_t word_difference(const std::string& premise, const std::string& hypothesis,
                                   const Stemmer& stem = suffix_stem) {
  auto p = stem_set(premise, stem);
  auto h = stem_set(hypothesis, stem);
  std::vector<std::string> diff;
  std::set_symmetric_difference(p.begin(), p.end(), h.begin(), h.end(), std::back_inserter(diff));
  return diff.size();
}

// ---------------------------------------------------------------- sensitivity

enum class SensitivityAxis { CosineSimilarity, WordDifference };

inline constexpr std::string_view to_string(SensitivityAxis a) {
  return a == SensitivityAxis::CosineSimilarity ? "cosine" : "word_difference";
}

inline std::vector<double> default_edges(SensitivityAxis axis) {
  if (axis == SensitivityAxis::WordDifference) return {0, 3, 6, 10, std::numeric_limits<double>::infinity()};
  std::vector<double> e;
  for (int i = 0; i <= 10; ++i) e.push_back(i / 10.0);
  return e;
}

struct SensitivityBin {
  double low = 0;
  double high = 0;
  std::size_t n = 0;
  std::size_t morph_hits = 0;
  std::size_t vanilla_hits = 0;

  std::optional<double> acc_morph() const {
    if (n == 0) return std::nullopt;
    return static_cast<double>(morph_hits) / static_cast<double>(n);
  }
  std::optional<double> acc_vanilla() const {
    if (n == 0) return std::nullopt;
    return static_cast<double>(vanilla_hits) / static_cast<double>(n);
  }
};

struct SensitivityReport {
  SensitivityAxis axis = SensitivityAxis::CosineSimilarity;
  std::vector<SensitivityBin> bins;
  std::size_t n = 0;

  std::string csv() const {
    std::ostringstream out;
    out.precision(17);
    auto num = [&](double v) {
      if (std::isinf(v)) {
        out << "inf";
      } else {
        out << v;
      }
    };
    out << "bin_low,bin_high,n,acc_morph,acc_vanilla\n";
    for (auto& b : bins) {
      num(b.low);
      out << ',';
      num(b.high);
      out << ',' << b.n << ',';
      if (auto a = b.acc_morph()) out << *a;
      out << ',';
      if (auto a = b.acc_vanilla()) out << *a;
      out << '\n';
    }
    return out.str();
  }
};

/// Bins are [edges[i], edges[i+1]); values outside the edges go to the end
/// bins. Rows without gold are ignored.
inline SensitivityReport lexical_sensitivity_report(const std::vector<EvalRow>& rows, const std::vector<double>& values,
                                                    SensitivityAxis axis, std::vector<double> edges = {}) {
  if (edges.empty()) edges = default_edges(axis);
  if (edges.size() < 2) throw EvalError(EvalErrc::BadEdges, "need at least two bin edges");
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (!(edges[i] > edges[i - 1])) throw EvalError(EvalErrc::BadEdges, "bin edges must increase");
  }
  if (values.size() != rows.size()) throw std::invalid_argument("one value per row expected");
  SensitivityReport r;
  r.axis = axis;
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) r.bins.push_back({edges[i], edges[i + 1]});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!rows[i].gold) continue;
    auto up = std::upper_bound(edges.begin(), edges.end(), values[i]);
    std::size_t b = up == edges.begin() ? 0 : static_cast<std::size_t>(up - edges.begin()) - 1;
    b = std::min(b, r.bins.size() - 1);
    auto& bin = r.bins[b];
    ++bin.n;
    bin.morph_hits += rows[i].morph == *rows[i].gold;
    bin.vanilla_hits += rows[i].vanilla == *rows[i].gold;
    ++r.n;
  }
  return r;
}

inline std::vector<double> word_difference_values(const std::vector<EvalRow>& rows, const Stemmer& stem = suffix_stem) {
  std::vector<double> v;
  for (auto& r : rows) v.push_back(static_cast<double>(word_difference(r.premise, r.hypothesis, stem)));
  return v;
}

/// Cosine between the premise and hypothesis embeddings, clamped to [0, 1].
inline std::vector<double> cosine_values(const std::vector<EvalRow>& rows, EmbedClient& embedder) {
  std::vector<double> v;
  for (auto& r : rows) {
    double c = cosine_similarity(embedder.embed(r.premise), embedder.embed(r.hypothesis));
    v.push_back(std::clamp(c, 0.0, 1.0));
  }
  return v;
}

}  // namespace morphnli
