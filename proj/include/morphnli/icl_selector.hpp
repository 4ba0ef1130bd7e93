#pragma once

// Nearest-neighbour selection of in-context examples by cosine similarity.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "morphnli/providers.hpp"
#include "morphnli/records.hpp"

namespace morphnli {

enum class IclErrc { ZeroVector, DimensionMismatch, BadPool, KTooLarge };

class IclError : public std::runtime_error {
 public:
  IclError(IclErrc code, const std::string& message) : std::runtime_error(message), code_(code) {}
  IclErrc code() const noexcept { return code_; }

 private:
  IclErrc code_;
};

inline double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw IclError(IclErrc::DimensionMismatch, "cosine over different dimensions");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) throw IclError(IclErrc::ZeroVector, "cosine with a zero vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

enum class QueryEmbedding { Joint, Mean };

inline std::string joint_query_text(const std::string& premise, const std::string& hypothesis) {
  return premise + "\n" + hypothesis;
}

/// Joint: one embedding of "premise\nhypothesis". Mean: average of the two.
inline std::vector<double> embed_pair(EmbedClient& embedder, const std::string& premise, const std::string& hypothesis,
                                      QueryEmbedding mode = QueryEmbedding::Joint) {
  if (mode == QueryEmbedding::Joint) return embedder.embed(joint_query_text(premise, hypothesis));
  auto a = embedder.embed(premise);
  auto b = embedder.embed(hypothesis);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = (a[i] + b[i]) / 2.0;
  return a;
}

/// Indices of the k most similar pool items, most similar first; equal
/// similarities keep pool order.
inline std::vector<std::size_t> select_indices(const std::vector<AnnotatedExample>& pool,
                                               const std::vector<double>& query, std::size_t k) {
  if (k > pool.size()) {
    throw IclError(IclErrc::KTooLarge, "k=" + std::to_string(k) + " exceeds pool of " + std::to_string(pool.size()));
  }
  std::vector<double> sim(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) sim[i] = cosine_similarity(pool[i].embedding, query);
  std::vector<std::size_t> idx(pool.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return sim[a] > sim[b]; });
  idx.resize(k);
  return idx;
}

inline std::vector<AnnotatedExample> select_examples(const std::vector<AnnotatedExample>& pool,
                                                     const std::vector<double>& query, std::size_t k) {
  std::vector<AnnotatedExample> out;
  for (std::size_t i : select_indices(pool, query, k)) out.push_back(pool[i]);
  return out;
}

/// Reads a JSONL pool; every chain must validate.
inline std::vector<AnnotatedExample> load_pool(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IclError(IclErrc::BadPool, "cannot open pool " + path);
  std::vector<AnnotatedExample> pool;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    AnnotatedExample e;
    try {
      e = json::parse(line).get<AnnotatedExample>();
    } catch (const std::exception& ex) {
      throw IclError(IclErrc::BadPool, path + ":" + std::to_string(line_no) + ": " + ex.what());
    }
    auto v = validate_chain(e.chain);
    if (!v) {
      throw IclError(IclErrc::BadPool, path + ":" + std::to_string(line_no) + ": chain fails validation (" +
                                           std::string(to_string(v.violation)) + ")");
    }
    if (e.pair.id.empty()) e.pair.id = "pool-" + std::to_string(pool.size());
    pool.push_back(std::move(e));
  }
  return pool;
}

/// Fills missing embeddings; all pool vectors end up the same dimension.
inline void embed_pool(std::vector<AnnotatedExample>& pool, EmbedClient& embedder,
                       QueryEmbedding mode = QueryEmbedding::Joint) {
  for (auto& e : pool) {
    if (e.embedding.empty()) e.embedding = embed_pair(embedder, e.pair.premise, e.pair.hypothesis, mode);
  }
  for (auto& e : pool) {
    if (e.embedding.size() != pool.front().embedding.size()) {
      throw IclError(IclErrc::DimensionMismatch, "pool embeddings differ in dimension");
    }
  }
}

}  // namespace morphnli
