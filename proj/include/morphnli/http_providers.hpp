#pragma once

// OpenAI-compatible chat/embedding clients and the generic NLI endpoint
// (POST /classify {"premise","hypothesis"} -> {"label","scores"}).

#include <cstdlib>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "httplib.h"
#include "json.hpp"
#include "morphnli/providers.hpp"

namespace morphnli {

struct HttpResponse {
  int status = 0;  // 0 = no response
  std::string body;
  std::string error;
};

class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResponse post_json(const std::string& base_url, const std::string& path, const std::string& body,
                                 const std::vector<std::pair<std::string, std::string>>& headers,
                                 double timeout_s) = 0;
};

/// Splits "https://host:port/prefix" into ("https://host:port", "/prefix").
inline std::pair<std::string, std::string> split_base_url(const std::string& url) {
  std::size_t scheme = url.find("://");
  std::size_t host_start = scheme == std::string::npos ? 0 : scheme + 3;
  std::size_t slash = url.find('/', host_start);
  if (slash == std::string::npos) return {url, ""};
  std::string prefix = url.substr(slash);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {url.substr(0, slash), prefix};
}

class HttplibTransport : public HttpTransport {
 public:
  HttpResponse post_json(const std::string& base_url, const std::string& path, const std::string& body,
                         const std::vector<std::pair<std::string, std::string>>& headers,
                         double timeout_s) override {
    auto [origin, prefix] = split_base_url(base_url);
    httplib::Client cli(origin);
    auto secs = static_cast<time_t>(timeout_s);
    auto usecs = static_cast<time_t>((timeout_s - static_cast<double>(secs)) * 1e6);
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    cli.set_write_timeout(secs, usecs);
    httplib::Headers h;
    for (auto& [k, v] : headers) h.emplace(k, v);
    auto res = cli.Post(prefix + path, h, body, "application/json");
    HttpResponse out;
    if (!res) {
      out.error = httplib::to_string(res.error());
      return out;
    }
    out.status = res->status;
    out.body = res->body;
    return out;
  }
};

namespace detail {

inline std::vector<std::pair<std::string, std::string>> auth_headers(const ProviderConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> h;
  if (cfg.api_key_env.empty()) return h;
  const char* key = std::getenv(cfg.api_key_env.c_str());
  if (!key || !*key) throw ProviderError(ProviderErrc::Auth, "environment variable " + cfg.api_key_env + " is not set");
  h.emplace_back("Authorization", std::string("Bearer ") + key);
  return h;
}

/// Maps an HTTP outcome to a parsed JSON body or a classified ProviderError.
inline json checked_body(const HttpResponse& r, const std::string& what) {
  if (r.status == 0) throw ProviderError(ProviderErrc::Transport, what + ": " + r.error, true);
  if (r.status == 401 || r.status == 403) {
    throw ProviderError(ProviderErrc::Auth, what + ": HTTP " + std::to_string(r.status));
  }
  if (r.status == 429 || r.status >= 500) {
    throw ProviderError(ProviderErrc::Transport, what + ": HTTP " + std::to_string(r.status), true);
  }
  if (r.status < 200 || r.status >= 300) {
    throw ProviderError(ProviderErrc::Transport, what + ": HTTP " + std::to_string(r.status));
  }
  try {
    return json::parse(r.body);
  } catch (const json::exception&) {
    throw ProviderError(ProviderErrc::MalformedResponse, what + ": body is not JSON");
  }
}

}  // namespace detail

class OpenAiChat : public ChatBackend {
 public:
  OpenAiChat(ProviderConfig cfg, std::shared_ptr<HttpTransport> transport)
      : cfg_(std::move(cfg)), transport_(std::move(transport)) {}

  std::string complete(const std::vector<ChatMessage>& messages, double temperature) override {
    json req{{"model", cfg_.model_id}, {"messages", messages}, {"temperature", temperature}};
    auto r = transport_->post_json(cfg_.base_url, "/chat/completions", req.dump(), detail::auth_headers(cfg_),
                                   cfg_.timeout_s);
    json body = detail::checked_body(r, "chat");
    try {
      return body.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception&) {
      throw ProviderError(ProviderErrc::MalformedResponse, "chat: no choices[0].message.content");
    }
  }

 private:
  ProviderConfig cfg_;
  std::shared_ptr<HttpTransport> transport_;
};

class OpenAiEmbedder : public EmbedBackend {
 public:
  OpenAiEmbedder(ProviderConfig cfg, std::shared_ptr<HttpTransport> transport)
      : cfg_(std::move(cfg)), transport_(std::move(transport)) {}

  std::vector<double> embed(const std::string& text) override {
    json req{{"model", cfg_.model_id}, {"input", text}};
    auto r = transport_->post_json(cfg_.base_url, "/embeddings", req.dump(), detail::auth_headers(cfg_),
                                   cfg_.timeout_s);
    json body = detail::checked_body(r, "embed");
    try {
      return body.at("data").at(0).at("embedding").get<std::vector<double>>();
    } catch (const json::exception&) {
      throw ProviderError(ProviderErrc::MalformedResponse, "embed: no data[0].embedding");
    }
  }

 private:
  ProviderConfig cfg_;
  std::shared_ptr<HttpTransport> transport_;
};

class HttpNli : public NliBackend {
 public:
  HttpNli(ProviderConfig cfg, std::shared_ptr<HttpTransport> transport)
      : cfg_(std::move(cfg)), transport_(std::move(transport)) {}

  NliPrediction classify(const std::string& premise, const std::string& hypothesis) override {
    json req{{"premise", premise}, {"hypothesis", hypothesis}};
    auto r = transport_->post_json(cfg_.base_url, "/classify", req.dump(), detail::auth_headers(cfg_),
                                   cfg_.timeout_s);
    json body = detail::checked_body(r, "nli");
    try {
      auto p = body.get<NliPrediction>();
      check_prediction(p);
      return p;
    } catch (const json::exception&) {
      throw ProviderError(ProviderErrc::MalformedResponse, "nli: expected {label, scores}");
    }
  }

 private:
  ProviderConfig cfg_;
  std::shared_ptr<HttpTransport> transport_;
};

}  // namespace morphnli
