#pragma once

// JSONL / TSV loaders for premise-hypothesis datasets.

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "morphnli/records.hpp"

namespace morphnli {

enum class DatasetErrc { Io, HeaderMismatch, UnknownLabel };

class DatasetError : public std::runtime_error {
 public:
  DatasetError(DatasetErrc code, const std::string& message) : std::runtime_error(message), code_(code) {}
  DatasetErrc code() const noexcept { return code_; }

 private:
  DatasetErrc code_;
};

/// Case-insensitive label names; "-" and "" mean no label.
inline std::optional<NliLabel> normalize_label(std::string_view raw) {
  std::string l = text::to_lower(text::trim(raw));
  if (l.empty() || l == "-") return std::nullopt;
  if (auto label = label_from_string(l)) return label;
  throw DatasetError(DatasetErrc::UnknownLabel, "unknown label '" + std::string(raw) + "'");
}

enum class DatasetFormat { Jsonl, Tsv };

inline DatasetFormat format_from_path(const std::filesystem::path& p) {
  auto ext = text::to_lower(p.extension().string());
  return ext == ".tsv" || ext == ".txt" ? DatasetFormat::Tsv : DatasetFormat::Jsonl;
}

/// Field / column names. Empty optional fields are not read.
struct ColumnMap {
  std::string id = "id";
  std::string premise = "premise";
  std::string hypothesis = "hypothesis";
  std::string gold = "gold_label";
  std::string domain = "domain";
  std::string split = "split";

  static ColumnMap sick() {
    ColumnMap m;
    m.id = "pair_ID";
    m.premise = "sentence_A";
    m.hypothesis = "sentence_B";
    m.gold = "entailment_label";
    return m;
  }
};

struct LoadOptions {
  ColumnMap columns;
  std::string domain_tag;  // used when rows carry none
  Split split = Split::Test;
};

struct LoadResult {
  std::vector<PairRecord> records;
  std::vector<std::string> warnings;
  std::size_t rows = 0;

  std::size_t skipped() const { return rows - records.size(); }
};

namespace detail {

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    std::size_t tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  if (!out.empty() && !out.back().empty() && out.back().back() == '\r') out.back().pop_back();
  return out;
}

// Field accessor shared by both formats: returns nullopt when absent.
template <class Get>
void add_row(LoadResult& res, std::set<std::string>& ids, const LoadOptions& opt, std::size_t row, Get get,
             const std::string& stem) {
  auto where = stem + ":" + std::to_string(row);
  auto premise = get(opt.columns.premise);
  auto hypothesis = get(opt.columns.hypothesis);
  if (!premise || !hypothesis || text::trim(*premise).empty() || text::trim(*hypothesis).empty()) {
    res.warnings.push_back(where + ": missing premise or hypothesis");
    return;
  }
  PairRecord r;
  r.premise = text::collapse_whitespace(*premise);
  r.hypothesis = text::collapse_whitespace(*hypothesis);
  auto id = opt.columns.id.empty() ? std::nullopt : get(opt.columns.id);
  r.id = id && !id->empty() ? *id : stem + "-" + std::to_string(row);
  if (!ids.insert(r.id).second) {
    res.warnings.push_back(where + ": duplicate id " + r.id);
    return;
  }
  if (!opt.columns.gold.empty()) {
    if (auto g = get(opt.columns.gold)) {
      try {
        r.gold = normalize_label(*g);
      } catch (const DatasetError& e) {
        ids.erase(r.id);
        res.warnings.push_back(where + ": " + e.what());
        return;
      }
    }
  }
  auto domain = opt.columns.domain.empty() ? std::nullopt : get(opt.columns.domain);
  r.domain_tag = domain && !domain->empty() ? *domain : opt.domain_tag;
  r.split = opt.split;
  if (auto sp = opt.columns.split.empty() ? std::nullopt : get(opt.columns.split)) {
    if (auto parsed = split_from_string(*sp)) r.split = *parsed;
  }
  res.records.push_back(std::move(r));
}

}  // namespace detail

inline LoadResult load_pairs(const std::filesystem::path& path, DatasetFormat format, const LoadOptions& opt = {}) {
  std::ifstream in(path);
  if (!in) throw DatasetError(DatasetErrc::Io, "cannot open " + path.string());
  LoadResult res;
  std::set<std::string> ids;
  std::string stem = path.stem().string();
  std::string line;

  if (format == DatasetFormat::Jsonl) {
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (text::trim(line).empty()) continue;
      ++res.rows;
      json j;
      try {
        j = json::parse(line);
        if (!j.is_object()) throw std::runtime_error("not an object");
      } catch (const std::exception&) {
        res.warnings.push_back(stem + ":" + std::to_string(line_no) + ": malformed JSON");
        continue;
      }
      auto get = [&](const std::string& key) -> std::optional<std::string> {
        if (!j.contains(key) || j[key].is_null()) return std::nullopt;
        return j[key].is_string() ? j[key].get<std::string>() : j[key].dump();
      };
      detail::add_row(res, ids, opt, line_no, get, stem);
    }
    return res;
  }

  if (!std::getline(in, line)) throw DatasetError(DatasetErrc::HeaderMismatch, path.string() + ": empty file");
  auto header = detail::split_tabs(line);
  auto column = [&](const std::string& name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    return std::nullopt;
  };
  for (const std::string* required : {&opt.columns.premise, &opt.columns.hypothesis}) {
    if (!column(*required)) {
      throw DatasetError(DatasetErrc::HeaderMismatch, path.string() + ": header lacks column " + *required);
    }
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    ++res.rows;
    auto cells = detail::split_tabs(line);
    if (cells.size() != header.size()) {
      res.warnings.push_back(stem + ":" + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                             " columns, got " + std::to_string(cells.size()));
      continue;
    }
    auto get = [&](const std::string& key) -> std::optional<std::string> {
      auto c = column(key);
      if (!c) return std::nullopt;
      return cells[*c];
    };
    detail::add_row(res, ids, opt, line_no, get, stem);
  }
  return res;
}

inline LoadResult load_pairs(const std::filesystem::path& path, const LoadOptions& opt = {}) {
  return load_pairs(path, format_from_path(path), opt);
}

inline void write_pairs_jsonl(const std::vector<PairRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DatasetError(DatasetErrc::Io, "cannot write " + path.string());
  for (const auto& r : records) out << json(r).dump() << '\n';
}

}  // namespace morphnli
