#pragma once

// Run configuration: a TOML subset ([a.b] tables, key = "string" | 'literal'
// | number | bool | [array of those], # comments) mapped onto RunConfig.

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "morphnli/datasets.hpp"
#include "morphnli/filters.hpp"
#include "morphnli/icl_selector.hpp"
#include "morphnli/providers.hpp"

namespace morphnli {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ConfigValue {
  using Scalar = std::variant<std::string, double, bool>;
  std::variant<std::string, double, bool, std::vector<Scalar>> v;
  bool integral = false;
};

using ConfigTable = std::map<std::string, ConfigValue>;  // dotted keys

namespace detail {

class TomlReader {
 public:
  explicit TomlReader(std::string_view src) : src_(src) {}

  ConfigTable parse() {
    ConfigTable out;
    std::string section;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= src_.size()) {
      std::size_t nl = src_.find('\n', start);
      line_ = src_.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
      ++line_no;
      line_no_ = line_no;
      pos_ = 0;
      skip_ws();
      if (!at_end() && peek() != '#') {
        if (peek() == '[') {
          ++pos_;
          section = read_key();
          skip_ws();
          expect(']');
        } else {
          std::string key = read_key();
          skip_ws();
          expect('=');
          skip_ws();
          std::string full = section.empty() ? key : section + "." + key;
          if (out.count(full)) fail("duplicate key " + full);
          out[full] = read_value();
        }
        skip_ws();
        if (!at_end() && peek() != '#') fail("unexpected text after value");
      }
      if (nl == std::string_view::npos) break;
      start = nl + 1;
    }
    return out;
  }

 private:
  [[noreturn]] void fail(const std::string& m) const {
    throw ConfigError("line " + std::to_string(line_no_) + ": " + m);
  }
  bool at_end() const { return pos_ >= line_.size() || line_[pos_] == '\r'; }
  char peek() const { return line_[pos_]; }
  void skip_ws() {
    while (pos_ < line_.size() && (line_[pos_] == ' ' || line_[pos_] == '\t')) ++pos_;
  }
  void expect(char c) {
    if (at_end() || peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  std::string read_key() {
    std::string key;
    for (;;) {
      skip_ws();
      std::size_t b = pos_;
      while (!at_end() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' || peek() == '-')) ++pos_;
      if (b == pos_) fail("expected a key");
      key += std::string(line_.substr(b, pos_ - b));
      skip_ws();
      if (at_end() || peek() != '.') return key;
      ++pos_;
      key += '.';
    }
  }

  ConfigValue::Scalar read_scalar(bool& integral) {
    integral = false;
    if (at_end()) fail("missing value");
    char c = peek();
    if (c == '"') return read_basic_string();
    if (c == '\'') {
      std::size_t close = line_.find('\'', pos_ + 1);
      if (close == std::string_view::npos) fail("unterminated string");
      std::string s(line_.substr(pos_ + 1, close - pos_ - 1));
      pos_ = close + 1;
      return s;
    }
    std::size_t b = pos_;
    while (!at_end() && peek() != ',' && peek() != ']' && peek() != '#' && peek() != ' ' && peek() != '\t') ++pos_;
    std::string tok(line_.substr(b, pos_ - b));
    if (tok == "true") return true;
    if (tok == "false") return false;
    std::string clean;
    for (char ch : tok) {
      if (ch != '_') clean.push_back(ch);
    }
    try {
      std::size_t used = 0;
      double d = std::stod(clean, &used);
      if (used != clean.size()) fail("bad value '" + tok + "'");
      integral = clean.find_first_of(".eE") == std::string::npos;
      return d;
    } catch (const std::logic_error&) {
      fail("bad value '" + tok + "'");
    }
  }

  std::string read_basic_string() {
    std::string s;
    ++pos_;
    for (;;) {
      if (pos_ >= line_.size()) fail("unterminated string");
      char c = line_[pos_++];
      if (c == '"') return s;
      if (c != '\\') {
        s.push_back(c);
        continue;
      }
      if (pos_ >= line_.size()) fail("bad escape");
      char e = line_[pos_++];
      switch (e) {
        case 'n': s.push_back('\n'); break;
        case 't': s.push_back('\t'); break;
        case '"': s.push_back('"'); break;
        case '\\': s.push_back('\\'); break;
        default: fail(std::string("unsupported escape \\") + e);
      }
    }
  }

  ConfigValue read_value() {
    ConfigValue out;
    if (!at_end() && peek() == '[') {
      ++pos_;
      std::vector<ConfigValue::Scalar> items;
      skip_ws();
      while (!at_end() && peek() != ']') {
        bool integral = false;
        items.push_back(read_scalar(integral));
        skip_ws();
        if (!at_end() && peek() == ',') {
          ++pos_;
          skip_ws();
        }
      }
      expect(']');
      out.v = std::move(items);
      return out;
    }
    bool integral = false;
    auto s = read_scalar(integral);
    std::visit([&](auto&& x) { out.v = x; }, s);
    out.integral = integral;
    return out;
  }

  std::string_view src_;
  std::string_view line_;
  std::size_t pos_ = 0;
  std::size_t line_no_ = 0;
};

}  // namespace detail

inline ConfigTable parse_toml(std::string_view src) { return detail::TomlReader(src).parse(); }

// ---------------------------------------------------------------- RunConfig

enum class RunMode { GenerateTrainingData, Inference };

struct RunConfig {
  RunMode mode = RunMode::Inference;
  std::uint64_t seed = 13;
  std::filesystem::path input;
  std::filesystem::path workdir = "work";
  std::filesystem::path templates_dir;
  std::filesystem::path cache_path;  // default: <workdir>/cache.jsonl
  std::filesystem::path export_dir;  // default: <workdir>/finetune
  LoadOptions input_options;
  std::optional<DatasetFormat> input_format;

  std::map<std::string, ProviderConfig> providers;  // teacher, student, voice, embedder, nli

  std::filesystem::path pool_path;
  std::size_t icl_k = 12;
  std::size_t pool_size = 40;
  QueryEmbedding icl_embedding = QueryEmbedding::Joint;

  std::size_t max_steps = kDefaultMaxSteps;
  int morph_retries = 2;
  double morph_temperature = 0.0;

  bool voice_normalization = false;
  ShortRule short_rule = ShortRule::BelowMin;
  std::size_t max_in_flight = 8;
  double failure_threshold = 0.5;  // failed fraction above which the run exits 3

  std::vector<double> cosine_edges;
  std::vector<double> word_diff_edges;

  const ProviderConfig& provider(const std::string& role) const {
    auto it = providers.find(role);
    if (it == providers.end()) throw ConfigError("provider role '" + role + "' is not configured");
    return it->second;
  }
  bool has_provider(const std::string& role) const { return providers.count(role) > 0; }

  std::vector<std::string> required_roles() const {
    std::vector<std::string> r;
    if (mode == RunMode::GenerateTrainingData) {
      r = {"teacher", "embedder", "nli"};
    } else {
      r = {"student", "nli"};
    }
    if (voice_normalization) r.push_back("voice");
    return r;
  }

  void validate() const {
    for (const auto& role : required_roles()) {
      if (!has_provider(role)) throw ConfigError("mode requires provider '" + role + "'");
    }
    for (const auto& [role, p] : providers) {
      try {
        p.validate(role);
      } catch (const ProviderError& e) {
        throw ConfigError(e.what());
      }
    }
    if (icl_k == 0) throw ConfigError("icl.k must be positive");
    if (icl_k > pool_size) throw ConfigError("icl.k exceeds icl.pool_size");
    if (mode == RunMode::GenerateTrainingData && pool_path.empty()) throw ConfigError("icl.pool is required");
    if (max_steps == 0) throw ConfigError("morph.max_steps must be positive");
    if (morph_retries < 0) throw ConfigError("morph.retries must be >= 0");
    if (failure_threshold < 0 || failure_threshold > 1) throw ConfigError("run.failure_threshold must be in [0,1]");
    for (const auto* edges : {&cosine_edges, &word_diff_edges}) {
      for (std::size_t i = 1; i < edges->size(); ++i) {
        if (!((*edges)[i] > (*edges)[i - 1])) throw ConfigError("bin edges must increase");
      }
    }
  }
};

namespace detail {

class ConfigBinder {
 public:
  ConfigBinder(const ConfigTable& t, std::filesystem::path base) : t_(t), base_(std::move(base)) {}

  template <class F>
  void with(const std::string& key, F f) {
    auto it = t_.find(key);
    if (it == t_.end()) return;
    used_.insert(key);
    try {
      f(it->second);
    } catch (const std::bad_variant_access&) {
      throw ConfigError(key + ": wrong value type");
    }
  }

  void str(const std::string& key, std::string& out) {
    with(key, [&](const ConfigValue& v) { out = std::get<std::string>(v.v); });
  }
  void path(const std::string& key, std::filesystem::path& out) {
    with(key, [&](const ConfigValue& v) {
      std::filesystem::path p = std::get<std::string>(v.v);
      out = p.is_absolute() || p.empty() ? p : base_ / p;
    });
  }
  void num(const std::string& key, double& out) {
    with(key, [&](const ConfigValue& v) { out = std::get<double>(v.v); });
  }
  template <class I>
  void integer(const std::string& key, I& out) {
    with(key, [&](const ConfigValue& v) {
      double d = std::get<double>(v.v);
      if (!v.integral || d < 0) throw ConfigError(key + ": expected a non-negative integer");
      out = static_cast<I>(d);
    });
  }
  void boolean(const std::string& key, bool& out) {
    with(key, [&](const ConfigValue& v) { out = std::get<bool>(v.v); });
  }
  void numbers(const std::string& key, std::vector<double>& out) {
    with(key, [&](const ConfigValue& v) {
      out.clear();
      for (auto& x : std::get<std::vector<ConfigValue::Scalar>>(v.v)) out.push_back(std::get<double>(x));
    });
  }

  std::set<std::string> roles() const {
    std::set<std::string> r;
    for (auto& [k, _] : t_) {
      if (k.rfind("providers.", 0) == 0) {
        auto rest = k.substr(10);
        r.insert(rest.substr(0, rest.find('.')));
      }
    }
    return r;
  }

  void reject_unknown() const {
    for (auto& [k, _] : t_) {
      if (!used_.count(k)) throw ConfigError("unknown config key " + k);
    }
  }

 private:
  const ConfigTable& t_;
  std::filesystem::path base_;
  std::set<std::string> used_;
};

}  // namespace detail

/// Relative paths resolve against `base` (the config file's directory).
inline RunConfig run_config_from_toml(std::string_view src, const std::filesystem::path& base = ".") {
  ConfigTable t = parse_toml(src);
  detail::ConfigBinder b(t, base);
  RunConfig c;

  std::string mode = "inference";
  b.str("mode", mode);
  if (mode == "generate" || mode == "training") {
    c.mode = RunMode::GenerateTrainingData;
  } else if (mode == "inference" || mode == "infer") {
    c.mode = RunMode::Inference;
  } else {
    throw ConfigError("mode must be 'generate' or 'inference'");
  }
  b.integer("seed", c.seed);

  b.path("paths.input", c.input);
  b.path("paths.workdir", c.workdir);
  b.path("paths.templates", c.templates_dir);
  b.path("paths.cache", c.cache_path);
  b.path("paths.export", c.export_dir);
  if (c.workdir.is_relative()) c.workdir = base / c.workdir;
  if (c.cache_path.empty()) c.cache_path = c.workdir / "cache.jsonl";
  if (c.export_dir.empty()) c.export_dir = c.workdir / "finetune";

  std::string format;
  b.str("input.format", format);
  if (format == "jsonl") c.input_format = DatasetFormat::Jsonl;
  else if (format == "tsv") c.input_format = DatasetFormat::Tsv;
  else if (!format.empty()) throw ConfigError("input.format must be jsonl or tsv");
  b.str("input.domain", c.input_options.domain_tag);
  std::string split;
  b.str("input.split", split);
  if (!split.empty()) {
    auto sp = split_from_string(split);
    if (!sp) throw ConfigError("input.split: unknown split " + split);
    c.input_options.split = *sp;
  }
  std::string columns;
  b.str("input.columns.preset", columns);
  if (columns == "sick") c.input_options.columns = ColumnMap::sick();
  else if (!columns.empty() && columns != "default") throw ConfigError("input.columns.preset must be default or sick");
  b.str("input.columns.id", c.input_options.columns.id);
  b.str("input.columns.premise", c.input_options.columns.premise);
  b.str("input.columns.hypothesis", c.input_options.columns.hypothesis);
  b.str("input.columns.gold", c.input_options.columns.gold);
  b.str("input.columns.domain", c.input_options.columns.domain);
  b.str("input.columns.split", c.input_options.columns.split);

  b.path("icl.pool", c.pool_path);
  b.integer("icl.k", c.icl_k);
  b.integer("icl.pool_size", c.pool_size);
  std::string emb = "joint";
  b.str("icl.embedding", emb);
  if (emb == "mean") c.icl_embedding = QueryEmbedding::Mean;
  else if (emb != "joint") throw ConfigError("icl.embedding must be joint or mean");

  b.integer("morph.max_steps", c.max_steps);
  b.integer("morph.retries", c.morph_retries);
  b.num("morph.temperature", c.morph_temperature);

  b.boolean("voice.enabled", c.voice_normalization);
  std::string short_rule = "min";
  b.str("filters.short_rule", short_rule);
  if (short_rule == "either") c.short_rule = ShortRule::BelowMax;
  else if (short_rule != "min") throw ConfigError("filters.short_rule must be min or either");

  b.integer("run.max_in_flight", c.max_in_flight);
  b.num("run.failure_threshold", c.failure_threshold);
  b.numbers("eval.cosine_edges", c.cosine_edges);
  b.numbers("eval.word_diff_edges", c.word_diff_edges);

  for (const auto& role : b.roles()) {
    ProviderConfig p;
    std::string k = "providers." + role + ".";
    b.str(k + "kind", p.kind);
    b.str(k + "base_url", p.base_url);
    b.str(k + "model", p.model_id);
    b.str(k + "api_key_env", p.api_key_env);
    b.num(k + "timeout_s", p.timeout_s);
    double retries = p.max_retries;
    b.with(k + "max_retries", [&](const ConfigValue& v) {
      retries = std::get<double>(v.v);
      if (!v.integral) throw ConfigError(k + "max_retries: expected an integer");
    });
    p.max_retries = static_cast<int>(retries);
    b.num(k + "temperature", p.temperature);
    std::filesystem::path script;
    b.path(k + "script", script);
    p.script = script.string();
    b.integer(k + "dimension", p.dimension);
    b.integer(k + "max_in_flight", p.max_in_flight);
    b.num(k + "rate_per_s", p.rate_per_s);
    if (p.model_id.empty()) p.model_id = p.kind;
    c.providers[role] = p;
  }
  b.reject_unknown();
  if (c.max_in_flight == 0) throw ConfigError("run.max_in_flight must be positive");
  c.validate();
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return run_config_from_toml(ss.str(), path.has_parent_path() ? path.parent_path() : std::filesystem::path("."));
}

}  // namespace morphnli
