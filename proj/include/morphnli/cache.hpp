#pragma once

// Append-only JSONL response cache keyed by a content hash of
// (provider kind, model id, request body).

#include <atomic>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>

#include "json.hpp"
#include "morphnli/hashing.hpp"

namespace morphnli {

using json = nlohmann::json;

inline std::string cache_key(std::string_view kind, std::string_view model_id, std::string_view body) {
  std::string buf;
  buf.reserve(kind.size() + model_id.size() + body.size() + 2);
  buf.append(kind).push_back('\x1f');
  buf.append(model_id).push_back('\x1f');
  buf.append(body);
  return sha256_hex(buf);
}

inline std::string utc_timestamp() {
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class ResponseCache {
 public:
  /// An empty path keeps the cache in memory only.
  explicit ResponseCache(std::filesystem::path path = {}) : path_(std::move(path)) {
    if (path_.empty()) return;
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    std::ifstream in(path_);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      try {
        auto j = json::parse(line);
        index_[j.at("key").get<std::string>()] = j.at("value");
      } catch (const std::exception&) {
        ++corrupt_lines_;
      }
    }
  }

  std::optional<json> get(const std::string& key) const {
    std::shared_lock lock(mu_);
    auto it = index_.find(key);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  void put(const std::string& key, const json& value) {
    std::unique_lock lock(mu_);
    if (index_.count(key)) return;
    index_[key] = value;
    if (path_.empty()) return;
    std::ofstream out(path_, std::ios::app);
    out << json{{"key", key}, {"value", value}, {"ts", utc_timestamp()}}.dump() << '\n';
    out.flush();
  }

  json lookup_or_call(std::string_view kind, std::string_view model_id, std::string_view body,
                      const std::function<json()>& thunk) {
    std::string key = cache_key(kind, model_id, body);
    if (auto hit = get(key)) {
      ++hits_;
      return *hit;
    }
    ++misses_;
    json value = thunk();
    put(key, value);
    return value;
  }

  std::size_t size() const {
    std::shared_lock lock(mu_);
    return index_.size();
  }
  std::size_t corrupt_lines() const { return corrupt_lines_; }
  std::size_t hits() const { return hits_; }
  std::size_t misses() const { return misses_; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  mutable std::shared_mutex mu_;
  std::unordered_map<std::string, json> index_;
  std::size_t corrupt_lines_ = 0;
  std::atomic<std::size_t> hits_{0};
  std::atomic<std::size_t> misses_{0};
};

}  // namespace morphnli
