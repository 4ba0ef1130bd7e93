#pragma once

// Human scoring of labelled chains: item store, append-only score log,
// agreement statistics and the HTTP JSON API.

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>

#include "morphnli/cache.hpp"
#include "morphnli/eval_harness.hpp"
#include "morphnli/labeling.hpp"
#include "morphnli/pipeline.hpp"
#include "morphnli/script_io.hpp"

namespace morphnli {

enum class ReviewErrc { UnknownItem, ScoreOutOfRange, UnknownFacet, BadRequest, Io };

class ReviewError : public std::runtime_error {
 public:
  ReviewError(ReviewErrc code, const std::string& message) : std::runtime_error(message), code_(code) {}
  ReviewErrc code() const noexcept { return code_; }

 private:
  ReviewErrc code_;
};

enum class Facet { Explanation, MorphismOnly };

inline constexpr std::string_view to_string(Facet f) { return f == Facet::Explanation ? "explanation" : "morphism_only"; }

inline Facet facet_from_string(std::string_view s) {
  std::string l = text::to_lower(s);
  if (l == "explanation") return Facet::Explanation;
  if (l == "morphism_only" || l == "morphismonly" || l == "morphism") return Facet::MorphismOnly;
  throw ReviewError(ReviewErrc::UnknownFacet, "unknown facet '" + std::string(s) + "'");
}

struct ReviewItem {
  std::string id;
  LabeledChain labeled_chain;
  std::map<std::string, std::string> explanations;  // source -> text
  std::optional<NliLabel> gold;
  std::set<Facet> facets = {Facet::Explanation, Facet::MorphismOnly};
};

/// Step-by-step text of a labelled chain, used as the "morphnli" explanation.
inline std::string chain_explanation(const LabeledChain& lc) {
  std::string out = "Premise: " + lc.chain.premise + "\n";
  for (std::size_t i = 0; i < lc.chain.steps.size(); ++i) {
    const auto& st = lc.chain.steps[i];
    out += std::to_string(i + 1) + ". " + render_op_line(st.op) + " " + st.sentence;
    if (i < lc.step_labels.size()) out += " [" + std::string(to_string(lc.step_labels[i])) + "]";
    out += "\n";
  }
  if (lc.chain.steps.empty()) out += "No edits (lazy morphism).\n";
  out += "Label: " + std::string(to_string(lc.aggregate));
  return out;
}

/// Items from a label-stage artifact; records without any prediction are skipped.
inline std::vector<ReviewItem> items_from_label_records(const std::vector<LabelRecord>& records) {
  std::vector<ReviewItem> items;
  for (const auto& r : records) {
    ReviewItem it;
    it.id = r.pair.id;
    it.gold = r.pair.gold;
    if (r.labeled) {
      it.labeled_chain = *r.labeled;
    } else if (r.predicted) {
      it.labeled_chain.chain = MorphChain{r.pair.premise, {}, r.pair.hypothesis};
      it.labeled_chain.aggregate = *r.predicted;
      it.labeled_chain.vanilla_label = r.vanilla_label;
    } else {
      continue;
    }
    it.explanations["morphnli"] = chain_explanation(it.labeled_chain);
    items.push_back(std::move(it));
  }
  return items;
}

struct ScoreEvent {
  std::string item_id;
  std::string annotator_id;
  Facet facet = Facet::Explanation;
  std::string source = "morphnli";
  int score = 0;
  std::string timestamp;
};

inline void to_json(json& j, const ScoreEvent& e) {
  j = json{{"item_id", e.item_id}, {"annotator", e.annotator_id}, {"facet", to_string(e.facet)},
           {"source", e.source},   {"score", e.score},              {"timestamp", e.timestamp}};
}
inline void from_json(const json& j, ScoreEvent& e) {
  j.at("item_id").get_to(e.item_id);
  j.at("annotator").get_to(e.annotator_id);
  e.facet = facet_from_string(j.value("facet", "explanation"));
  e.source = j.value("source", "morphnli");
  j.at("score").get_to(e.score);
  e.timestamp = j.value("timestamp", "");
}

struct ListFilter {
  std::optional<std::string> scored_by;
  std::optional<Facet> facet;
  std::optional<bool> scored;  // with scored_by: keep only scored / unscored
  std::size_t offset = 0;
  std::size_t limit = 50;
};

class ReviewService {
 public:
  using Key = std::tuple<std::string, std::string, Facet, std::string>;  // item, annotator, facet, source

  /// Replays `score_log` when it exists; new events are appended to it.
  explicit ReviewService(std::vector<ReviewItem> items, std::filesystem::path score_log = {})
      : log_path_(std::move(score_log)) {
    std::sort(items.begin(), items.end(), [](const ReviewItem& a, const ReviewItem& b) { return a.id < b.id; });
    for (auto& it : items) {
      if (index_.count(it.id)) throw ReviewError(ReviewErrc::BadRequest, "duplicate item id " + it.id);
      index_[it.id] = items_.size();
      items_.push_back(std::move(it));
    }
    if (log_path_.empty()) return;
    std::ifstream in(log_path_);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (text::trim(line).empty()) continue;
      try {
        apply(json::parse(line).get<ScoreEvent>());
      } catch (const std::exception& e) {
        throw ReviewError(ReviewErrc::Io, log_path_.string() + ":" + std::to_string(n) + ": " + e.what());
      }
    }
  }

  static ReviewService from_artifact(const std::filesystem::path& labels, const std::filesystem::path& score_log = {},
                                     const std::filesystem::path& explanations = {}) {
    auto items = items_from_label_records(read_jsonl<LabelRecord>(labels));
    if (!explanations.empty()) {
      std::map<std::string, ReviewItem*> by_id;
      for (auto& it : items) by_id[it.id] = &it;
      for (auto& row : read_jsonl<json>(explanations)) {
        auto it = by_id.find(row.at("id").get<std::string>());
        if (it != by_id.end()) it->second->explanations[row.at("source").get<std::string>()] = row.at("text").get<std::string>();
      }
    }
    return ReviewService(std::move(items), score_log);
  }

  std::size_t size() const { return items_.size(); }

  const ReviewItem& item(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw ReviewError(ReviewErrc::UnknownItem, "unknown item " + id);
    return items_[it->second];
  }

  bool scored(const std::string& item_id, const std::string& annotator, std::optional<Facet> facet) const {
    std::shared_lock lock(mu_);
    for (auto& [k, _] : effective_) {
      if (std::get<0>(k) == item_id && std::get<1>(k) == annotator && (!facet || std::get<2>(k) == *facet)) return true;
    }
    return false;
  }

  json summary(const ReviewItem& it) const {
    return json{{"id", it.id},
                {"premise", it.labeled_chain.chain.premise},
                {"hypothesis", it.labeled_chain.chain.hypothesis},
                {"steps", it.labeled_chain.chain.steps.size()},
                {"facets", facet_names(it)}};
  }

  /// Items ordered by id. With scored_by, each summary carries "scored" and
  /// the page reports scored / unscored totals.
  json list_items(const ListFilter& f) const {
    std::vector<const ReviewItem*> matched;
    std::size_t n_scored = 0;
    for (auto& it : items_) {
      if (f.facet && !it.facets.count(*f.facet)) continue;
      bool s = f.scored_by && scored(it.id, *f.scored_by, f.facet);
      n_scored += s;
      if (f.scored && f.scored_by && s != *f.scored) continue;
      matched.push_back(&it);
    }
    json page = json::array();
    for (std::size_t i = f.offset; i < matched.size() && i < f.offset + f.limit; ++i) {
      json s = summary(*matched[i]);
      if (f.scored_by) s["scored"] = scored(matched[i]->id, *f.scored_by, f.facet);
      page.push_back(std::move(s));
    }
    json out{{"total", matched.size()}, {"offset", f.offset}, {"limit", f.limit}, {"items", page}};
    if (f.scored_by) {
      std::size_t eligible = 0;
      for (auto& it : items_) eligible += !f.facet || it.facets.count(*f.facet);
      out["scored"] = n_scored;
      out["unscored"] = eligible - n_scored;
    }
    return out;
  }

  /// MorphismOnly hides every label and the explanations.
  json render_item(const std::string& id, Facet facet) const {
    const auto& it = item(id);
    if (!it.facets.count(facet)) throw ReviewError(ReviewErrc::UnknownFacet, "item " + id + " has no such facet");
    const auto& lc = it.labeled_chain;
    json steps = json::array();
    for (std::size_t i = 0; i < lc.chain.steps.size(); ++i) {
      json s{{"op", lc.chain.steps[i].op}, {"sentence", lc.chain.steps[i].sentence}};
      if (facet == Facet::Explanation && i < lc.step_labels.size()) s["label"] = lc.step_labels[i];
      steps.push_back(std::move(s));
    }
    json out{{"id", it.id},
             {"facet", to_string(facet)},
             {"facets", facet_names(it)},
             {"premise", lc.chain.premise},
             {"hypothesis", lc.chain.hypothesis},
             {"steps", steps},
             {"lazy", lc.chain.steps.empty()}};
    if (facet == Facet::Explanation) {
      out["aggregate"] = lc.aggregate;
      out["vanilla_label"] = lc.vanilla_label ? json(*lc.vanilla_label) : json(nullptr);
      out["gold"] = it.gold ? json(*it.gold) : json(nullptr);
      out["explanations"] = it.explanations;
    }
    return out;
  }

  /// Appends to the log and returns the effective score for the event's key.
  int submit_score(ScoreEvent e) {
    item(e.item_id);
    if (e.score < 0 || e.score > 2) {
      throw ReviewError(ReviewErrc::ScoreOutOfRange, "score " + std::to_string(e.score) + " is not 0, 1 or 2");
    }
    if (e.annotator_id.empty()) throw ReviewError(ReviewErrc::BadRequest, "annotator is required");
    if (e.timestamp.empty()) e.timestamp = utc_timestamp();
    std::unique_lock lock(mu_);
    if (!log_path_.empty()) {
      std::ofstream out(log_path_, std::ios::app | std::ios::binary);
      if (!out) throw ReviewError(ReviewErrc::Io, "cannot append to " + log_path_.string());
      out << json(e).dump() << '\n';
    }
    events_.push_back(e);
    effective_[key(e)] = e.score;
    return e.score;
  }

  std::optional<int> effective_score(const std::string& item_id, const std::string& annotator, Facet facet,
                                     const std::string& source = "morphnli") const {
    std::shared_lock lock(mu_);
    auto it = effective_.find({item_id, annotator, facet, source});
    if (it == effective_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t event_count() const {
    std::shared_lock lock(mu_);
    return events_.size();
  }

  /// Effective scores as a matrix; each (item, facet, source) is one rated unit.
  ScoreMatrix score_matrix(std::optional<Facet> facet = std::nullopt, std::optional<std::string> source = std::nullopt) const {
    std::shared_lock lock(mu_);
    ScoreMatrix m;
    for (auto& [k, score] : effective_) {
      auto& [item_id, annotator, f, src] = k;
      if (facet && f != *facet) continue;
      if (source && src != *source) continue;
      m.set(item_id + "|" + std::string(to_string(f)) + "|" + src, annotator, score);
    }
    return m;
  }

  AgreementSummary agreement(std::optional<Facet> facet = std::nullopt,
                             std::optional<std::string> source = std::nullopt) const {
    return agreement_summary(score_matrix(facet, source));
  }

 private:
  static Key key(const ScoreEvent& e) { return {e.item_id, e.annotator_id, e.facet, e.source}; }

  static json facet_names(const ReviewItem& it) {
    json f = json::array();
    for (Facet x : it.facets) f.push_back(std::string(to_string(x)));
    return f;
  }

  void apply(const ScoreEvent& e) {
    if (!index_.count(e.item_id)) throw ReviewError(ReviewErrc::UnknownItem, "unknown item " + e.item_id);
    if (e.score < 0 || e.score > 2) throw ReviewError(ReviewErrc::ScoreOutOfRange, "score out of range");
    events_.push_back(e);
    effective_[key(e)] = e.score;
  }

  std::vector<ReviewItem> items_;
  std::map<std::string, std::size_t> index_;
  std::filesystem::path log_path_;
  mutable std::shared_mutex mu_;
  std::vector<ScoreEvent> events_;
  std::map<Key, int> effective_;
};

// ---------------------------------------------------------------- HTTP

namespace detail {

inline void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

inline int review_status(ReviewErrc c) {
  switch (c) {
    case ReviewErrc::UnknownItem: return 404;
    case ReviewErrc::ScoreOutOfRange:
    case ReviewErrc::UnknownFacet:
    case ReviewErrc::BadRequest: return 400;
    case ReviewErrc::Io: return 500;
  }
  return 500;
}

inline std::optional<std::string> param(const httplib::Request& req, const char* name) {
  if (!req.has_param(name)) return std::nullopt;
  return req.get_param_value(name);
}

inline std::size_t size_param(const httplib::Request& req, const char* name, std::size_t fallback) {
  auto v = param(req, name);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    long long n = std::stoll(*v, &used);
    if (used != v->size() || n < 0) throw std::invalid_argument(name);
    return static_cast<std::size_t>(n);
  } catch (const std::exception&) {
    throw ReviewError(ReviewErrc::BadRequest, std::string(name) + " must be a non-negative integer");
  }
}

template <class F>
void guarded(httplib::Response& res, F f) {
  try {
    f();
  } catch (const ReviewError& e) {
    send_json(res, review_status(e.code()), json{{"error", e.what()}});
  } catch (const EvalError& e) {
    send_json(res, 409, json{{"error", e.what()}});
  } catch (const json::exception& e) {
    send_json(res, 400, json{{"error", std::string("bad JSON: ") + e.what()}});
  }
}

}  // namespace detail

/// Registers the /api routes and, when `static_dir` is set, serves it at /.
inline void mount_review_api(httplib::Server& srv, ReviewService& svc, const std::filesystem::path& static_dir = {}) {
  using detail::guarded;
  using detail::param;
  using detail::send_json;

  srv.Get("/api/items", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      ListFilter f;
      f.scored_by = param(req, "scored_by");
      if (auto v = param(req, "facet")) f.facet = facet_from_string(*v);
      if (auto v = param(req, "scored")) f.scored = *v == "true" || *v == "1";
      f.offset = detail::size_param(req, "offset", 0);
      f.limit = detail::size_param(req, "limit", 50);
      send_json(res, 200, svc.list_items(f));
    });
  });

  srv.Get(R"(/api/items/([^/]+))", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      Facet facet = facet_from_string(param(req, "facet").value_or("explanation"));
      send_json(res, 200, svc.render_item(req.matches[1], facet));
    });
  });

  srv.Post(R"(/api/items/([^/]+)/scores)", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      json body = req.body.empty() ? json::object() : json::parse(req.body);
      if (!body.is_object()) throw ReviewError(ReviewErrc::BadRequest, "body must be a JSON object");
      ScoreEvent e;
      e.item_id = req.matches[1];
      e.annotator_id = body.value("annotator", param(req, "annotator").value_or(""));
      e.facet = facet_from_string(body.value("facet", param(req, "facet").value_or("explanation")));
      e.source = body.value("source", "morphnli");
      if (!body.contains("score") || !body["score"].is_number_integer()) {
        throw ReviewError(ReviewErrc::ScoreOutOfRange, "score must be an integer 0, 1 or 2");
      }
      e.score = body["score"].get<int>();
      int effective = svc.submit_score(e);
      send_json(res, 200,
                json{{"ok", true}, {"item_id", e.item_id}, {"annotator", e.annotator_id}, {"effective_score", effective}});
    });
  });

  srv.Get("/api/agreement", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      std::optional<Facet> facet;
      if (auto v = param(req, "facet")) facet = facet_from_string(*v);
      send_json(res, 200, json(svc.agreement(facet, param(req, "source"))));
    });
  });

  if (!static_dir.empty()) srv.set_mount_point("/", static_dir.string());
}

/// A server on a background thread; port 0 picks a free port.
class ReviewServer {
 public:
  ReviewServer(ReviewService& svc, const std::string& host = "127.0.0.1", int port = 0,
               const std::filesystem::path& static_dir = {}) {
    mount_review_api(srv_, svc, static_dir);
    port_ = port == 0 ? srv_.bind_to_any_port(host) : (srv_.bind_to_port(host, port) ? port : -1);
    if (port_ <= 0) throw ReviewError(ReviewErrc::Io, "cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { srv_.listen_after_bind(); });
    srv_.wait_until_ready();
  }
  ~ReviewServer() {
    srv_.stop();
    if (thread_.joinable()) thread_.join();
  }
  ReviewServer(const ReviewServer&) = delete;
  ReviewServer& operator=(const ReviewServer&) = delete;

  int port() const { return port_; }

 private:
  httplib::Server srv_;
  int port_ = -1;
  std::thread thread_;
};

}  // namespace morphnli
