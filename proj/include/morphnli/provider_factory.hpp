#pragma once

// Builds backends from ProviderConfig.kind:
//   chat:  openai | mock
//   embed: openai | hash (alias mock)
//   nli:   http | chat | chat-mock | rules (alias mock)

#include <memory>
#include <string>

#include "morphnli/http_providers.hpp"
#include "morphnli/mock_providers.hpp"
#include "morphnli/providers.hpp"

namespace morphnli {

inline std::shared_ptr<ChatBackend> make_chat_backend(const ProviderConfig& cfg,
                                                      std::shared_ptr<HttpTransport> transport) {
  if (cfg.kind == "openai") return std::make_shared<OpenAiChat>(cfg, std::move(transport));
  if (cfg.kind == "mock") return cfg.script.empty() ? std::make_shared<ScriptedChat>() : ScriptedChat::from_file(cfg.script);
  throw ProviderError(ProviderErrc::Config, "unknown chat provider kind " + cfg.kind);
}

inline std::shared_ptr<EmbedBackend> make_embed_backend(const ProviderConfig& cfg,
                                                        std::shared_ptr<HttpTransport> transport) {
  if (cfg.kind == "openai") return std::make_shared<OpenAiEmbedder>(cfg, std::move(transport));
  if (cfg.kind == "hash" || cfg.kind == "mock") return std::make_shared<HashEmbedder>(cfg.dimension, cfg.model_id);
  throw ProviderError(ProviderErrc::Config, "unknown embedder kind " + cfg.kind);
}

inline std::shared_ptr<NliBackend> make_nli_backend(const ProviderConfig& cfg, std::shared_ptr<HttpTransport> transport,
                                                    const ClientOptions& chat_opts) {
  if (cfg.kind == "http") return std::make_shared<HttpNli>(cfg, std::move(transport));
  if (cfg.kind == "rules" || cfg.kind == "mock") {
    return cfg.script.empty() ? std::make_shared<RuleBasedNli>() : RuleBasedNli::from_file(cfg.script);
  }
  if (cfg.kind == "chat" || cfg.kind == "chat-mock") {
    ProviderConfig chat_cfg = cfg;
    chat_cfg.kind = cfg.kind == "chat" ? "openai" : "mock";
    auto chat = std::make_shared<ChatClient>(make_chat_backend(chat_cfg, std::move(transport)), cfg.model_id, chat_opts);
    return std::make_shared<ChatNli>(chat, cfg.temperature);
  }
  throw ProviderError(ProviderErrc::Config, "unknown NLI provider kind " + cfg.kind);
}

}  // namespace morphnli
