#pragma once

// Provider interfaces (chat, embedding, NLI), retry/backoff, rate limiting,
// bounded parallel mapping and the cached client facades used by stages.

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "morphnli/cache.hpp"
#include "morphnli/morph_model.hpp"

namespace morphnli {

// ---------------------------------------------------------------- errors

enum class ProviderErrc { Transport, Auth, MalformedResponse, DimensionMismatch, UnparsableLabel, Config };

inline constexpr std::string_view to_string(ProviderErrc e) {
  switch (e) {
    case ProviderErrc::Transport: return "TransportError";
    case ProviderErrc::Auth: return "AuthError";
    case ProviderErrc::MalformedResponse: return "MalformedResponse";
    case ProviderErrc::DimensionMismatch: return "DimensionMismatch";
    case ProviderErrc::UnparsableLabel: return "UnparsableLabel";
    case ProviderErrc::Config: return "ConfigError";
  }
  return "TransportError";
}

class ProviderError : public std::runtime_error {
 public:
  ProviderError(ProviderErrc code, const std::string& message, bool retryable = false)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), retryable_(retryable) {}
  ProviderErrc code() const noexcept { return code_; }
  bool retryable() const noexcept { return retryable_; }

 private:
  ProviderErrc code_;
  bool retryable_;
};

// ---------------------------------------------------------------- config

struct ProviderConfig {
  std::string kind;  // openai | http | chat | mock | rules | hash
  std::string base_url;
  std::string model_id;
  std::string api_key_env;
  double timeout_s = 60.0;
  int max_retries = 3;
  double temperature = 0.0;
  std::string script;         // mock script / label table path
  std::size_t dimension = 0;  // embedders, 0 = accept the first length seen
  std::size_t max_in_flight = 8;
  double rate_per_s = 0.0;  // 0 = unlimited

  void validate(const std::string& role) const {
    auto bad = [&](const std::string& m) { throw ProviderError(ProviderErrc::Config, role + ": " + m); };
    if (kind.empty()) bad("kind is required");
    if (max_retries < 0) bad("max_retries must be >= 0");
    if (!(timeout_s > 0)) bad("timeout_s must be > 0");
    if (temperature < 0) bad("temperature must be >= 0");
    if (max_in_flight == 0) bad("max_in_flight must be > 0");
    if ((kind == "openai" || kind == "http" || kind == "chat") && base_url.empty()) bad("base_url is required");
  }
};

// ---------------------------------------------------------------- retry

struct RetryPolicy {
  double base_s = 1.0;
  double factor = 2.0;
  double jitter = 0.25;  // fraction of the nominal delay
  int max_retries = 3;

  double nominal_delay(int retry) const { return base_s * std::pow(factor, retry - 1); }
};

using Sleeper = std::function<void(double seconds)>;

inline Sleeper real_sleeper() {
  return [](double s) { std::this_thread::sleep_for(std::chrono::duration<double>(s)); };
}

/// Runs `fn`, retrying retryable ProviderErrors with exponential backoff.
/// At most max_retries + 1 attempts.
class Retrier {
 public:
  Retrier(RetryPolicy policy, Sleeper sleeper = real_sleeper(), std::uint64_t seed = 0x5eed)
      : policy_(policy), sleeper_(std::move(sleeper)), rng_(seed) {}

  template <class F>
  auto run(F&& fn) -> decltype(fn()) {
    for (int attempt = 1;; ++attempt) {
      try {
        ++attempts_;
        return fn();
      } catch (const ProviderError& e) {
        if (!e.retryable() || attempt > policy_.max_retries) throw;
        ++retries_;
        sleeper_(delay(attempt));
      }
    }
  }

  double delay(int retry) {
    double u;
    {
      std::lock_guard lock(mu_);
      u = std::uniform_real_distribution<double>(-1.0, 1.0)(rng_);
    }
    return std::max(0.0, policy_.nominal_delay(retry) * (1.0 + policy_.jitter * u));
  }

  std::size_t attempts() const { return attempts_; }
  std::size_t retries() const { return retries_; }
  const RetryPolicy& policy() const { return policy_; }

 private:
  RetryPolicy policy_;
  Sleeper sleeper_;
  std::mutex mu_;
  std::mt19937_64 rng_;
  std::atomic<std::size_t> attempts_{0};
  std::atomic<std::size_t> retries_{0};
};

// ---------------------------------------------------------------- rate limit

class TokenBucket {
 public:
  explicit TokenBucket(double rate_per_s = 0.0, double burst = 1.0)
      : rate_(rate_per_s), burst_(std::max(1.0, burst)), tokens_(burst_), last_(std::chrono::steady_clock::now()) {}

  void acquire() {
    if (rate_ <= 0) return;
    std::unique_lock lock(mu_);
    for (;;) {
      auto now = std::chrono::steady_clock::now();
      tokens_ = std::min(burst_, tokens_ + std::chrono::duration<double>(now - last_).count() * rate_);
      last_ = now;
      if (tokens_ >= 1.0) {
        tokens_ -= 1.0;
        return;
      }
      auto wait = std::chrono::duration<double>((1.0 - tokens_) / rate_);
      lock.unlock();
      std::this_thread::sleep_for(wait);
      lock.lock();
    }
  }

 private:
  double rate_;
  double burst_;
  double tokens_;
  std::chrono::steady_clock::time_point last_;
  std::mutex mu_;
};

// ---------------------------------------------------------------- parallelism

/// Applies fn(item, index) with at most `max_parallel` workers; results keep
/// input order. The first exception (by index) is rethrown after all finish.
template <class T, class F>
auto parallel_map(const std::vector<T>& items, F fn, std::size_t max_parallel = 8)
    -> std::vector<decltype(fn(items[0], std::size_t{0}))> {
  using R = decltype(fn(items[0], std::size_t{0}));
  std::vector<std::optional<R>> slots(items.size());
  std::vector<std::exception_ptr> errors(items.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < items.size(); i = next++) {
      try {
        slots[i].emplace(fn(items[i], i));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::size_t n = std::min(std::max<std::size_t>(1, max_parallel), items.size());
  if (n <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<R> out;
  out.reserve(items.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

// ---------------------------------------------------------------- backends

struct ChatMessage {
  std::string role;
  std::string content;
};

inline void to_json(json& j, const ChatMessage& m) { j = json{{"role", m.role}, {"content", m.content}}; }
inline void from_json(const json& j, ChatMessage& m) {
  j.at("role").get_to(m.role);
  j.at("content").get_to(m.content);
}

struct NliPrediction {
  NliLabel label = NliLabel::Neutral;
  std::optional<std::array<double, 3>> scores;  // indexed by label_index
};

/// Throws MalformedResponse unless scores sum to 1 and their argmax is the label.
inline void check_prediction(const NliPrediction& p) {
  if (!p.scores) return;
  const auto& s = *p.scores;
  double sum = s[0] + s[1] + s[2];
  if (std::fabs(sum - 1.0) > 1e-6) throw ProviderError(ProviderErrc::MalformedResponse, "scores do not sum to 1");
  auto best = static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin());
  if (best != label_index(p.label)) throw ProviderError(ProviderErrc::MalformedResponse, "argmax disagrees with label");
}

inline void to_json(json& j, const NliPrediction& p) {
  j = json{{"label", p.label}};
  if (p.scores) {
    json s = json::object();
    for (NliLabel l : kAllLabels) s[std::string(to_string(l))] = (*p.scores)[label_index(l)];
    j["scores"] = s;
  }
}

inline void from_json(const json& j, NliPrediction& p) {
  auto label = label_from_string(text::to_lower(j.at("label").get<std::string>()));
  if (!label) throw ProviderError(ProviderErrc::UnparsableLabel, "label " + j.at("label").dump());
  p.label = *label;
  p.scores.reset();
  if (j.contains("scores") && j["scores"].is_object()) {
    std::array<double, 3> s{};
    for (NliLabel l : kAllLabels) s[label_index(l)] = j["scores"].at(std::string(to_string(l))).get<double>();
    p.scores = s;
  }
}

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual std::string complete(const std::vector<ChatMessage>& messages, double temperature) = 0;
};

class EmbedBackend {
 public:
  virtual ~EmbedBackend() = default;
  virtual std::vector<double> embed(const std::string& text) = 0;
};

class NliBackend {
 public:
  virtual ~NliBackend() = default;
  virtual NliPrediction classify(const std::string& premise, const std::string& hypothesis) = 0;
};

// ---------------------------------------------------------------- clients

struct ClientOptions {
  std::shared_ptr<ResponseCache> cache;
  RetryPolicy retry;
  Sleeper sleeper = real_sleeper();
  double rate_per_s = 0.0;

  static ClientOptions from(const ProviderConfig& cfg, std::shared_ptr<ResponseCache> cache = nullptr) {
    ClientOptions o;
    o.cache = std::move(cache);
    o.retry.max_retries = cfg.max_retries;
    o.rate_per_s = cfg.rate_per_s;
    return o;
  }
};

namespace detail {

// Shared plumbing: cache lookup, then rate limit + retry around the backend.
class ClientCore {
 public:
  ClientCore(std::string kind, std::string model_id, ClientOptions opts)
      : kind_(std::move(kind)),
        model_id_(std::move(model_id)),
        cache_(std::move(opts.cache)),
        retrier_(opts.retry, std::move(opts.sleeper)),
        bucket_(opts.rate_per_s) {}

  json call(const std::string& body, const std::function<json()>& backend_call) {
    auto live = [&] {
      return retrier_.run([&] {
        bucket_.acquire();
        ++calls_;
        return backend_call();
      });
    };
    if (!cache_) return live();
    return cache_->lookup_or_call(kind_, model_id_, body, live);
  }

  const std::string& model_id() const { return model_id_; }
  std::size_t calls() const { return calls_; }
  std::size_t retries() const { return retrier_.retries(); }

 private:
  std::string kind_;
  std::string model_id_;
  std::shared_ptr<ResponseCache> cache_;
  Retrier retrier_;
  TokenBucket bucket_;
  std::atomic<std::size_t> calls_{0};
};

}  // namespace detail

class ChatClient {
 public:
  ChatClient(std::shared_ptr<ChatBackend> backend, std::string model_id, ClientOptions opts = {})
      : backend_(std::move(backend)), core_("chat", std::move(model_id), std::move(opts)) {}

  std::string complete(const std::vector<ChatMessage>& messages, double temperature = 0.0) {
    if (messages.empty()) throw ProviderError(ProviderErrc::Config, "no messages");
    std::string body = json{{"messages", messages}, {"temperature", temperature}}.dump();
    json v = core_.call(body, [&] { return json(backend_->complete(messages, temperature)); });
    return v.get<std::string>();
  }

  std::string ask(const std::string& user_prompt, double temperature = 0.0) {
    return complete({{"user", user_prompt}}, temperature);
  }

  const std::string& model_id() const { return core_.model_id(); }
  std::size_t calls() const { return core_.calls(); }
  std::size_t retries() const { return core_.retries(); }

 private:
  std::shared_ptr<ChatBackend> backend_;
  detail::ClientCore core_;
};

class EmbedClient {
 public:
  EmbedClient(std::shared_ptr<EmbedBackend> backend, std::string model_id, ClientOptions opts = {},
              std::size_t dimension = 0)
      : backend_(std::move(backend)), core_("embed", std::move(model_id), std::move(opts)), dimension_(dimension) {}

  std::vector<double> embed(const std::string& text) {
    if (text.empty()) throw ProviderError(ProviderErrc::Config, "empty text");
    auto v = core_.call(text, [&] { return json(backend_->embed(text)); }).get<std::vector<double>>();
    std::size_t expected = dimension_.load();
    if (expected == 0) {
      dimension_.compare_exchange_strong(expected, v.size());
      expected = dimension_.load();
    }
    if (v.size() != expected) {
      throw ProviderError(ProviderErrc::DimensionMismatch,
                          "got " + std::to_string(v.size()) + " values, expected " + std::to_string(expected));
    }
    return v;
  }

  const std::string& model_id() const { return core_.model_id(); }
  std::size_t calls() const { return core_.calls(); }
  std::size_t dimension() const { return dimension_; }

 private:
  std::shared_ptr<EmbedBackend> backend_;
  detail::ClientCore core_;
  std::atomic<std::size_t> dimension_;
};

class NliClient {
 public:
  NliClient(std::shared_ptr<NliBackend> backend, std::string model_id, ClientOptions opts = {})
      : backend_(std::move(backend)), core_("nli", std::move(model_id), std::move(opts)) {}

  NliPrediction classify(const std::string& premise, const std::string& hypothesis) {
    if (premise.empty() || hypothesis.empty()) throw ProviderError(ProviderErrc::Config, "empty sentence");
    std::string body = json{{"premise", premise}, {"hypothesis", hypothesis}}.dump();
    auto p = core_.call(body, [&] { return json(backend_->classify(premise, hypothesis)); }).get<NliPrediction>();
    check_prediction(p);
    return p;
  }

  const std::string& model_id() const { return core_.model_id(); }
  std::size_t calls() const { return core_.calls(); }

 private:
  std::shared_ptr<NliBackend> backend_;
  detail::ClientCore core_;
};

// ---------------------------------------------------------------- chat as NLI

inline std::string render_label_prompt(const std::string& premise, const std::string& hypothesis) {
  return "Classify the relation between the premise and the hypothesis.\n"
         "Answer with one word on the first line: entailment, neutral or contradiction.\n\n"
         "Premise:\n" +
         premise + "\n\nHypothesis:\n" + hypothesis + "\n\nLabel:";
}

/// The first line must be exactly a label name (case and a final period ignored).
inline std::optional<NliLabel> parse_label_first_line(std::string_view reply) {
  std::string_view first = reply.substr(0, reply.find('\n'));
  std::string t = text::to_lower(text::trim(first));
  if (!t.empty() && t.back() == '.') t.pop_back();
  return label_from_string(t);
}

class ChatNli : public NliBackend {
 public:
  ChatNli(std::shared_ptr<ChatClient> chat, double temperature = 0.0)
      : chat_(std::move(chat)), temperature_(temperature) {}

  NliPrediction classify(const std::string& premise, const std::string& hypothesis) override {
    std::string prompt = render_label_prompt(premise, hypothesis);
    std::string reply = chat_->ask(prompt, temperature_);
    auto label = parse_label_first_line(reply);
    if (!label) {
      reply = chat_->ask(prompt, std::min(1.0, temperature_ + 0.2));
      label = parse_label_first_line(reply);
    }
    if (!label) throw ProviderError(ProviderErrc::UnparsableLabel, "reply: " + reply.substr(0, 80));
    return {*label, std::nullopt};
  }

 private:
  std::shared_ptr<ChatClient> chat_;
  double temperature_;
};

}  // namespace morphnli
