#pragma once

// Stage orchestration: voice normalization, morph generation, labeling,
// filtering, evaluation and fine-tune export. Every stage reads and writes
// JSONL artifacts under the run's workdir.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "morphnli/cache.hpp"
#include "morphnli/config.hpp"
#include "morphnli/datasets.hpp"
#include "morphnli/eval_harness.hpp"
#include "morphnli/filters.hpp"
#include "morphnli/icl_selector.hpp"
#include "morphnli/labeling.hpp"
#include "morphnli/provider_factory.hpp"
#include "morphnli/script_io.hpp"

namespace morphnli {

namespace fs = std::filesystem;

class PipelineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------- artifacts

using Stats = std::map<std::string, double>;

struct StageArtifact {
  std::string stage_name;
  fs::path records_path;
  Stats stats;
};

template <class T>
void write_jsonl(const fs::path& path, const std::vector<T>& rows) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw PipelineError("cannot write " + path.string());
  for (const auto& r : rows) out << json(r).dump() << '\n';
  if (!out) throw PipelineError("write failed for " + path.string());
}

template <class T>
std::vector<T> read_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw PipelineError("cannot read artifact " + path.string());
  std::vector<T> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(json::parse(line).get<T>());
    } catch (const std::exception& e) {
      throw PipelineError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

inline void write_json_file(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw PipelineError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

inline void write_stats(const fs::path& workdir, const StageArtifact& a) {
  write_json_file(workdir / (a.stage_name + ".stats.json"),
                  json{{"stage", a.stage_name}, {"records", a.records_path.filename().string()}, {"stats", a.stats}});
}

// ---------------------------------------------------------------- records

struct VoiceAuditRow {
  std::string id;
  std::string field;  // premise | hypothesis
  std::string original;
  std::string normalized;
  std::optional<std::string> error;
};

inline void to_json(json& j, const VoiceAuditRow& r) {
  j = json{{"id", r.id}, {"field", r.field}, {"original", r.original}, {"normalized", r.normalized}};
  j["error"] = r.error ? json(*r.error) : json(nullptr);
}

enum class MorphRole { Teacher, Student };

inline constexpr std::string_view to_string(MorphRole r) { return r == MorphRole::Teacher ? "teacher" : "student"; }

struct MorphAttempt {
  double temperature = 0;
  std::string output;
  std::vector<std::string> errors;
};

inline void to_json(json& j, const MorphAttempt& a) {
  j = json{{"temperature", a.temperature}, {"output", a.output}, {"errors", a.errors}};
}
inline void from_json(const json& j, MorphAttempt& a) {
  j.at("temperature").get_to(a.temperature);
  j.at("output").get_to(a.output);
  j.at("errors").get_to(a.errors);
}

/// A pair with its chain, or a failure carrying every attempt.
struct MorphOutcome {
  PairRecord pair;
  std::string role;
  std::optional<MorphChain> chain;
  std::vector<MorphAttempt> attempts;

  bool ok() const { return chain.has_value(); }
};

inline void to_json(json& j, const MorphOutcome& o) {
  j = json{{"pair", o.pair}, {"role", o.role}, {"status", o.ok() ? "ok" : "failed"}, {"attempts", o.attempts}};
  j["chain"] = o.chain ? json(*o.chain) : json(nullptr);
}
inline void from_json(const json& j, MorphOutcome& o) {
  j.at("pair").get_to(o.pair);
  j.at("role").get_to(o.role);
  o.chain.reset();
  if (!j.at("chain").is_null()) o.chain = j["chain"].get<MorphChain>();
  j.at("attempts").get_to(o.attempts);
}

enum class LabelStatus { Ok, MorphFailed, LabelFailed };

inline constexpr std::string_view to_string(LabelStatus s) {
  switch (s) {
    case LabelStatus::Ok: return "ok";
    case LabelStatus::MorphFailed: return "morph_failed";
    case LabelStatus::LabelFailed: return "label_failed";
  }
  return "ok";
}

/// predicted: the chain aggregate, or the vanilla label when no chain exists.
struct LabelRecord {
  PairRecord pair;
  LabelStatus status = LabelStatus::Ok;
  std::optional<LabeledChain> labeled;
  std::optional<NliLabel> vanilla_label;
  std::optional<NliLabel> predicted;
  std::string error;
};

inline void to_json(json& j, const LabelRecord& r) {
  j = json{{"pair", r.pair}, {"status", to_string(r.status)}, {"error", r.error}};
  j["labeled_chain"] = r.labeled ? json(*r.labeled) : json(nullptr);
  j["vanilla_label"] = r.vanilla_label ? json(*r.vanilla_label) : json(nullptr);
  j["predicted"] = r.predicted ? json(*r.predicted) : json(nullptr);
}
inline void from_json(const json& j, LabelRecord& r) {
  j.at("pair").get_to(r.pair);
  auto s = j.at("status").get<std::string>();
  if (s == "ok") r.status = LabelStatus::Ok;
  else if (s == "morph_failed") r.status = LabelStatus::MorphFailed;
  else if (s == "label_failed") r.status = LabelStatus::LabelFailed;
  else throw PipelineError("unknown status " + s);
  r.error = j.value("error", "");
  r.labeled.reset();
  r.vanilla_label.reset();
  r.predicted.reset();
  if (!j.at("labeled_chain").is_null()) r.labeled = j["labeled_chain"].get<LabeledChain>();
  if (!j.at("vanilla_label").is_null()) r.vanilla_label = j["vanilla_label"].get<NliLabel>();
  if (!j.at("predicted").is_null()) r.predicted = j["predicted"].get<NliLabel>();
}

struct RejectedRecord {
  LabelRecord record;
  std::vector<std::string> reasons;
};

inline void to_json(json& j, const RejectedRecord& r) {
  j = r.record;
  j["reasons"] = r.reasons;
}
inline void from_json(const json& j, RejectedRecord& r) {
  j.get_to(r.record);
  j.at("reasons").get_to(r.reasons);
}

// ---------------------------------------------------------------- services

/// Provider clients for the configured roles, sharing one response cache.
struct Services {
  std::shared_ptr<ResponseCache> cache;
  std::shared_ptr<ChatClient> teacher;
  std::shared_ptr<ChatClient> student;
  std::shared_ptr<ChatClient> voice;
  std::shared_ptr<EmbedClient> embedder;
  std::shared_ptr<NliClient> nli;

  /// Live provider calls made so far (cache hits excluded).
  std::size_t calls() const {
    std::size_t n = 0;
    for (auto* c : {teacher.get(), student.get(), voice.get()}) n += c ? c->calls() : 0;
    n += embedder ? embedder->calls() : 0;
    n += nli ? nli->calls() : 0;
    return n;
  }
};

inline Services make_services(const RunConfig& cfg, std::shared_ptr<HttpTransport> transport = nullptr,
                              std::optional<Sleeper> sleeper = std::nullopt) {
  if (!transport) transport = std::make_shared<HttplibTransport>();
  Services s;
  s.cache = std::make_shared<ResponseCache>(cfg.cache_path);
  auto opts = [&](const ProviderConfig& p) {
    auto o = ClientOptions::from(p, s.cache);
    if (sleeper) o.sleeper = *sleeper;
    return o;
  };
  auto chat = [&](const std::string& role) -> std::shared_ptr<ChatClient> {
    if (!cfg.has_provider(role)) return nullptr;
    const auto& p = cfg.provider(role);
    return std::make_shared<ChatClient>(make_chat_backend(p, transport), p.model_id, opts(p));
  };
  try {
    s.teacher = chat("teacher");
    s.student = chat("student");
    s.voice = chat("voice");
    if (cfg.has_provider("embedder")) {
      const auto& p = cfg.provider("embedder");
      s.embedder = std::make_shared<EmbedClient>(make_embed_backend(p, transport), p.model_id, opts(p), p.dimension);
    }
    if (cfg.has_provider("nli")) {
      const auto& p = cfg.provider("nli");
      // A chat-backed NLI keeps its own uncached client; the NLI layer caches.
      ClientOptions inner = opts(p);
      inner.cache = nullptr;
      s.nli = std::make_shared<NliClient>(make_nli_backend(p, transport, inner), p.model_id, opts(p));
    }
  } catch (const ProviderError& e) {
    throw ConfigError(e.what());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("provider script: ") + e.what());
  }
  return s;
}

// ---------------------------------------------------------------- prompts

inline constexpr std::string_view kVoiceInstruction = "Rewrite in active voice; if already active, return unchanged.";

/// The sentence is the last line of the prompt.
inline std::string render_voice_prompt(const std::string& sentence) {
  return std::string(kVoiceInstruction) + "\n\n" + text::collapse_whitespace(sentence);
}

/// Student prompts keep the rules block and carry no examples.
inline std::string render_student_prompt(const PairRecord& pair, const PromptTemplates& templates = {}) {
  return render_teacher_prompt(pair, {}, templates);
}

inline double retry_temperature(double base, std::size_t attempt) {
  return std::min(1.0, base + 0.2 * static_cast<double>(attempt));
}

// ---------------------------------------------------------------- export

struct FileSummary {
  fs::path train_path;
  fs::path validation_path;
  std::size_t train = 0;
  std::size_t validation = 0;
  std::size_t skipped = 0;
};

inline void to_json(json& j, const FileSummary& s) {
  j = json{{"train_path", s.train_path.filename().string()},
           {"validation_path", s.validation_path.filename().string()},
           {"train", s.train},
           {"validation", s.validation},
           {"skipped", s.skipped}};
}

inline constexpr std::size_t kTrainShare = 2127;
inline constexpr std::size_t kSplitTotal = 3027;

inline std::size_t train_count(std::size_t n) { return n * kTrainShare / kSplitTotal; }

/// Fisher-Yates over mt19937_64 so the order is the same on every platform.
template <class T>
void seeded_shuffle(std::vector<T>& v, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

inline json finetune_record(const PairRecord& pair, const MorphChain& chain, const PromptTemplates& templates) {
  return json{{"messages", json::array({{{"role", "user"}, {"content", render_student_prompt(pair, templates)}},
                                        {{"role", "assistant"}, {"content", canonical_render(chain)}}})}};
}

/// Chat-format JSONL, split train/validation by seeded shuffle. Chains that
/// cannot be rendered are skipped and counted.
inline FileSummary export_finetune(const std::vector<std::pair<PairRecord, MorphChain>>& kept, const fs::path& out_dir,
                                   std::uint64_t seed, const PromptTemplates& templates = {}) {
  std::vector<json> rows;
  FileSummary s;
  for (const auto& [pair, chain] : kept) {
    try {
      rows.push_back(finetune_record(pair, chain, templates));
    } catch (const MorphError&) {
      ++s.skipped;
    }
  }
  seeded_shuffle(rows, seed);
  s.train = train_count(rows.size());
  s.validation = rows.size() - s.train;
  s.train_path = out_dir / "train.jsonl";
  s.validation_path = out_dir / "validation.jsonl";
  fs::create_directories(out_dir);
  std::ofstream train(s.train_path, std::ios::binary | std::ios::trunc);
  std::ofstream val(s.validation_path, std::ios::binary | std::ios::trunc);
  if (!train || !val) throw PipelineError("cannot write into " + out_dir.string());
  for (std::size_t i = 0; i < rows.size(); ++i) (i < s.train ? train : val) << rows[i].dump() << '\n';
  if (!train || !val) throw PipelineError("write failed in " + out_dir.string());
  return s;
}

// ---------------------------------------------------------------- pipeline

struct RunSummary {
  std::string mode;
  std::size_t total = 0;
  std::size_t failed = 0;
  std::vector<StageArtifact> stages;
  std::optional<EvalReport> eval;
  std::size_t provider_calls = 0;

  double failure_rate() const { return total == 0 ? 0.0 : static_cast<double>(failed) / static_cast<double>(total); }
};

inline void to_json(json& j, const RunSummary& s) {
  json stages = json::array();
  for (auto& a : s.stages) stages.push_back(json{{"stage", a.stage_name}, {"records", a.records_path.filename().string()}});
  j = json{{"mode", s.mode}, {"total", s.total}, {"failed", s.failed}, {"failure_rate", s.failure_rate()}, {"stages", stages}};
  if (s.eval) j["eval"] = *s.eval;
}

class Pipeline {
 public:
  Pipeline(RunConfig cfg, Services services) : cfg_(std::move(cfg)), svc_(std::move(services)) {
    templates_ = cfg_.templates_dir.empty() ? PromptTemplates{} : load_templates(cfg_.templates_dir);
    templates_.icl_slots = std::max(templates_.icl_slots, cfg_.icl_k);
    fs::create_directories(cfg_.workdir);
  }

  const RunConfig& config() const { return cfg_; }
  Services& services() { return svc_; }
  const PromptTemplates& templates() const { return templates_; }
  fs::path artifact(const std::string& name) const { return cfg_.workdir / name; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  // -- input

  std::vector<PairRecord> load_input(StageArtifact* out = nullptr) {
    if (cfg_.input.empty()) throw ConfigError("paths.input is not set");
    auto format = cfg_.input_format ? *cfg_.input_format : format_from_path(cfg_.input);
    LoadResult r;
    try {
      r = load_pairs(cfg_.input, format, cfg_.input_options);
    } catch (const DatasetError& e) {
      throw PipelineError(e.what());
    }
    for (auto& w : r.warnings) warnings_.push_back(w);
    StageArtifact a{"input", artifact("input.jsonl"),
                    {{"rows", double(r.rows)}, {"records", double(r.records.size())}, {"skipped", double(r.skipped())}}};
    write_jsonl(a.records_path, r.records);
    finish(a, out);
    return r.records;
  }

  // -- voice

  std::vector<PairRecord> run_voice_normalization(const std::vector<PairRecord>& pairs, StageArtifact* out = nullptr) {
    if (!svc_.voice) throw ConfigError("voice normalization needs a voice provider");
    struct Result {
      PairRecord pair;
      VoiceAuditRow premise;
      VoiceAuditRow hypothesis;
    };
    auto one = [&](const std::string& id, const std::string& field, const std::string& sentence) {
      VoiceAuditRow row{id, field, sentence, sentence, std::nullopt};
      try {
        auto reply = svc_.voice->ask(render_voice_prompt(sentence), cfg_.provider("voice").temperature);
        std::string first;
        for (auto& line : detail::split_lines(reply)) {
          if (!text::trim(line).empty()) {
            first = text::collapse_whitespace(line);
            break;
          }
        }
        if (first.empty()) throw ProviderError(ProviderErrc::MalformedResponse, "empty rewrite");
        row.normalized = first;
      } catch (const std::exception& e) {
        row.error = e.what();
      }
      return row;
    };
    auto results = parallel_map(
        pairs,
        [&](const PairRecord& p, std::size_t) {
          Result r{p, one(p.id, "premise", p.premise), one(p.id, "hypothesis", p.hypothesis)};
          r.pair.premise = r.premise.normalized;
          r.pair.hypothesis = r.hypothesis.normalized;
          return r;
        },
        cfg_.max_in_flight);
    std::vector<PairRecord> normalized;
    std::vector<VoiceAuditRow> audit;
    std::size_t changed = 0;
    std::size_t errors = 0;
    for (auto& r : results) {
      for (auto* row : {&r.premise, &r.hypothesis}) {
        changed += row->normalized != row->original;
        errors += row->error.has_value();
        if (row->error) warnings_.push_back(row->id + ": voice " + row->field + ": " + *row->error);
        audit.push_back(*row);
      }
      normalized.push_back(r.pair);
    }
    write_jsonl(artifact("voice_audit.jsonl"), audit);
    StageArtifact a{"voice", artifact("voice.jsonl"),
                    {{"records", double(normalized.size())}, {"rewritten", double(changed)}, {"errors", double(errors)}}};
    write_jsonl(a.records_path, normalized);
    finish(a, out);
    return normalized;
  }

  // -- morph generation

  MorphOutcome generate_one(const PairRecord& pair, MorphRole role) {
    MorphOutcome o;
    o.pair = pair;
    o.role = std::string(to_string(role));
    ChatClient* client = role == MorphRole::Teacher ? svc_.teacher.get() : svc_.student.get();
    std::string prompt;
    try {
      if (role == MorphRole::Teacher) {
        auto q = embed_pair(*svc_.embedder, pair.premise, pair.hypothesis, cfg_.icl_embedding);
        prompt = render_teacher_prompt(pair, select_examples(pool_, q, cfg_.icl_k), templates_);
      } else {
        prompt = render_student_prompt(pair, templates_);
      }
    } catch (const std::exception& e) {
      o.attempts.push_back({0.0, "", {std::string("prompt: ") + e.what()}});
      return o;
    }
    for (std::size_t attempt = 0; attempt <= static_cast<std::size_t>(cfg_.morph_retries); ++attempt) {
      MorphAttempt a;
      a.temperature = retry_temperature(cfg_.morph_temperature, attempt);
      try {
        a.output = client->ask(prompt, a.temperature);
      } catch (const ProviderError& e) {
        a.errors.push_back(std::string("provider: ") + e.what());
        o.attempts.push_back(std::move(a));
        if (e.code() == ProviderErrc::Auth || e.code() == ProviderErrc::Config) break;
        continue;
      }
      auto parsed = parse_morphism_output(a.output, pair.premise, pair.hypothesis);
      for (auto& issue : parsed.errors) {
        a.errors.push_back("line " + std::to_string(issue.line_no) + ": " + std::string(to_string(issue.code)) + ": " +
                           issue.reason);
      }
      if (parsed.parsed) {
        auto v = validate_chain(*parsed.parsed, cfg_.max_steps);
        if (v) {
          o.chain = std::move(parsed.parsed);
          o.attempts.push_back(std::move(a));
          return o;
        }
        a.errors.push_back("invalid chain: " + std::string(to_string(v.violation)) + " at step " + std::to_string(v.step));
      }
      o.attempts.push_back(std::move(a));
    }
    return o;
  }

  std::vector<MorphOutcome> run_morph_generation(const std::vector<PairRecord>& pairs, MorphRole role,
                                                 StageArtifact* out = nullptr) {
    if (role == MorphRole::Teacher) {
      if (!svc_.teacher || !svc_.embedder) throw ConfigError("teacher generation needs teacher and embedder providers");
      prepare_pool();
    } else if (!svc_.student) {
      throw ConfigError("student generation needs a student provider");
    }
    auto outcomes =
        parallel_map(pairs, [&](const PairRecord& p, std::size_t) { return generate_one(p, role); }, cfg_.max_in_flight);
    std::size_t ok = 0;
    std::size_t attempts = 0;
    std::size_t steps = 0;
    std::size_t lazy = 0;
    for (auto& o : outcomes) {
      attempts += o.attempts.size();
      if (!o.ok()) continue;
      ++ok;
      steps += o.chain->steps.size();
      lazy += o.chain->lazy();
    }
    StageArtifact a{"morph", artifact("morph.jsonl"),
                    {{"records", double(outcomes.size())},
                     {"ok", double(ok)},
                     {"failed", double(outcomes.size() - ok)},
                     {"attempts", double(attempts)},
                     {"steps", double(steps)},
                     {"lazy", double(lazy)}}};
    write_jsonl(a.records_path, outcomes);
    finish(a, out);
    return outcomes;
  }

  // -- labeling

  LabelRecord label_one(const MorphOutcome& o, bool with_vanilla) {
    LabelRecord r;
    r.pair = o.pair;
    auto classify = classifier_of(*svc_.nli);
    if (o.chain) {
      try {
        r.labeled = label_chain(*o.chain, classify, with_vanilla);
        r.vanilla_label = r.labeled->vanilla_label;
        r.predicted = r.labeled->aggregate;
      } catch (const LabelingError& e) {
        r.status = LabelStatus::LabelFailed;
        r.error = e.what();
      }
      return r;
    }
    r.status = LabelStatus::MorphFailed;
    r.error = "morph generation failed after " + std::to_string(o.attempts.size()) + " attempts";
    if (with_vanilla) {
      try {
        r.vanilla_label = classify(o.pair.premise, o.pair.hypothesis);
        r.predicted = r.vanilla_label;
      } catch (const std::exception& e) {
        r.status = LabelStatus::LabelFailed;
        r.error += "; vanilla: " + std::string(e.what());
      }
    }
    return r;
  }

  std::vector<LabelRecord> run_labeling(const std::vector<MorphOutcome>& outcomes, bool with_vanilla,
                                        StageArtifact* out = nullptr) {
    if (!svc_.nli) throw ConfigError("labeling needs an nli provider");
    auto records = parallel_map(
        outcomes, [&](const MorphOutcome& o, std::size_t) { return label_one(o, with_vanilla); }, cfg_.max_in_flight);
    Stats st{{"records", double(records.size())}, {"ok", 0}, {"morph_failed", 0}, {"label_failed", 0}, {"predicted", 0}};
    for (auto& r : records) {
      st[std::string(to_string(r.status))] += 1;
      st["predicted"] += r.predicted.has_value();
    }
    StageArtifact a{"label", artifact("label.jsonl"), st};
    write_jsonl(a.records_path, records);
    finish(a, out);
    return records;
  }

  // -- filters (training)

  std::vector<LabelRecord> run_filter(const std::vector<LabelRecord>& records, FilterReport* report_out = nullptr,
                                      StageArtifact* out = nullptr) {
    std::vector<LabelRecord> eligible;
    std::vector<RejectedRecord> rejected;
    std::size_t failed = 0;
    std::size_t no_gold = 0;
    for (auto& r : records) {
      if (r.status != LabelStatus::Ok || !r.labeled) {
        ++failed;
        rejected.push_back({r, {std::string(to_string(r.status))}});
      } else if (!r.pair.gold) {
        ++no_gold;
        rejected.push_back({r, {"no_gold"}});
      } else {
        eligible.push_back(r);
      }
    }
    auto outcome = apply_filters(
        eligible,
        [](const LabelRecord& r) { return std::tie(r.labeled->chain, *r.pair.gold, r.labeled->aggregate); },
        cfg_.short_rule);
    for (auto& [r, v] : outcome.rejected) rejected.push_back({r, v.names()});
    write_jsonl(artifact("filter.rejected.jsonl"), rejected);
    auto& rep = outcome.report;
    StageArtifact a{"filter", artifact("filter.jsonl"),
                    {{"records", double(records.size())},
                     {"failed", double(failed)},
                     {"no_gold", double(no_gold)},
                     {"total", double(rep.total)},
                     {"kept", double(rep.kept)},
                     {"lazy", double(rep.lazy)},
                     {"short", double(rep.short_count)},
                     {"label_mismatch", double(rep.mismatch)}}};
    write_jsonl(a.records_path, outcome.kept);
    finish(a, out);
    if (report_out) *report_out = rep;
    return outcome.kept;
  }

  // -- evaluation (inference)

  static std::vector<EvalRow> eval_rows(const std::vector<LabelRecord>& records) {
    std::vector<EvalRow> rows;
    for (auto& r : records) {
      if (!r.predicted || !r.vanilla_label) continue;
      rows.push_back({r.pair.id, r.pair.premise, r.pair.hypothesis, r.pair.gold, *r.predicted, *r.vanilla_label});
    }
    return rows;
  }

  /// Writes eval_report.json and the sensitivity CSVs; nullopt without gold labels.
  std::optional<EvalReport> run_eval(const std::vector<LabelRecord>& records, StageArtifact* out = nullptr) {
    auto rows = eval_rows(records);
    std::optional<EvalReport> report;
    try {
      report = evaluate(rows);
    } catch (const EvalError&) {
      warnings_.push_back("eval: no predictions with gold labels");
    }
    json j = report ? json(*report) : json(nullptr);
    write_json_file(artifact("eval_report.json"), j);
    if (report) {
      auto wd = lexical_sensitivity_report(rows, word_difference_values(rows), SensitivityAxis::WordDifference,
                                           cfg_.word_diff_edges);
      write_text(artifact("sensitivity_word_difference.csv"), wd.csv());
      if (svc_.embedder) {
        auto cs = lexical_sensitivity_report(rows, cosine_values(rows, *svc_.embedder), SensitivityAxis::CosineSimilarity,
                                             cfg_.cosine_edges);
        write_text(artifact("sensitivity_cosine.csv"), cs.csv());
      }
    }
    Stats st{{"records", double(records.size())}, {"evaluated", report ? double(report->n) : 0.0}};
    if (report) {
      st["accuracy_morph"] = report->accuracy_morph;
      st["accuracy_vanilla"] = report->accuracy_vanilla;
    }
    StageArtifact a{"eval", artifact("eval_report.json"), st};
    finish(a, out);
    return report;
  }

  // -- whole runs

  RunSummary generate() {
    if (cfg_.mode != RunMode::GenerateTrainingData) throw ConfigError("generate needs mode = \"generate\"");
    RunSummary s;
    s.mode = "generate";
    auto pairs = front_stages(s);
    StageArtifact a;
    auto morphs = run_morph_generation(pairs, MorphRole::Teacher, &a);
    s.stages.push_back(a);
    auto labels = run_labeling(morphs, false, &a);
    s.stages.push_back(a);
    run_filter(labels, nullptr, &a);
    s.stages.push_back(a);
    s.total = labels.size();
    for (auto& r : labels) s.failed += r.status != LabelStatus::Ok;
    s.provider_calls = svc_.calls();
    write_json_file(artifact("summary.json"), s);
    return s;
  }

  RunSummary infer() {
    if (cfg_.mode != RunMode::Inference) throw ConfigError("infer needs mode = \"inference\"");
    RunSummary s;
    s.mode = "inference";
    auto pairs = front_stages(s);
    StageArtifact a;
    auto morphs = run_morph_generation(pairs, MorphRole::Student, &a);
    s.stages.push_back(a);
    auto labels = run_labeling(morphs, true, &a);
    s.stages.push_back(a);
    s.eval = run_eval(labels, &a);
    s.stages.push_back(a);
    s.total = labels.size();
    for (auto& r : labels) s.failed += r.status != LabelStatus::Ok;
    s.provider_calls = svc_.calls();
    write_json_file(artifact("summary.json"), s);
    return s;
  }

  /// Re-runs the filter stage from label.jsonl.
  FilterReport refilter() {
    FilterReport rep;
    run_filter(read_jsonl<LabelRecord>(artifact("label.jsonl")), &rep);
    return rep;
  }

  /// Re-evaluates from label.jsonl.
  std::optional<EvalReport> reevaluate() { return run_eval(read_jsonl<LabelRecord>(artifact("label.jsonl"))); }

  FileSummary export_kept() {
    std::vector<std::pair<PairRecord, MorphChain>> kept;
    for (auto& r : read_jsonl<LabelRecord>(artifact("filter.jsonl"))) {
      if (r.labeled) kept.emplace_back(r.pair, r.labeled->chain);
    }
    auto s = export_finetune(kept, cfg_.export_dir, cfg_.seed, templates_);
    write_json_file(cfg_.export_dir / "summary.json", s);
    return s;
  }

 private:
  std::vector<PairRecord> front_stages(RunSummary& s) {
    StageArtifact a;
    auto pairs = load_input(&a);
    s.stages.push_back(a);
    if (cfg_.voice_normalization) {
      pairs = run_voice_normalization(pairs, &a);
      s.stages.push_back(a);
    } else {
      fs::remove(artifact("voice.jsonl"));
      fs::remove(artifact("voice_audit.jsonl"));
      fs::remove(artifact("voice.stats.json"));
    }
    return pairs;
  }

  void prepare_pool() {
    if (pool_ready_) return;
    try {
      pool_ = load_pool(cfg_.pool_path.string());
      embed_pool(pool_, *svc_.embedder, cfg_.icl_embedding);
    } catch (const IclError& e) {
      throw ConfigError(e.what());
    }
    if (cfg_.icl_k > pool_.size()) {
      throw ConfigError("icl.k = " + std::to_string(cfg_.icl_k) + " exceeds the pool of " + std::to_string(pool_.size()));
    }
    pool_ready_ = true;
  }

  void finish(const StageArtifact& a, StageArtifact* out) {
    write_stats(cfg_.workdir, a);
    if (out) *out = a;
  }

  static void write_text(const fs::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw PipelineError("cannot write " + p.string());
    out << s;
  }

  RunConfig cfg_;
  Services svc_;
  PromptTemplates templates_;
  std::vector<AnnotatedExample> pool_;
  bool pool_ready_ = false;
  std::vector<std::string> warnings_;
};

}  // namespace morphnli
