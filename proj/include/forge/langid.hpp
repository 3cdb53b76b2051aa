#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "forge/common.hpp"

namespace forge {

struct LangCode {
  std::string code;  // three lowercase ASCII letters
  std::string name;  // English display name
  bool operator==(const LangCode&) const = default;
};

struct LangPair {
  LangCode src;
  LangCode tgt;
  bool operator==(const LangPair&) const = default;

  std::string str() const { return src.code + "-" + tgt.code; }
};

/// ISO 639-3 lookup over the bundled registry table. Keys are the
/// three-letter code, the two-letter ISO 639-1 code (when one exists) and
/// the English name, all case-insensitive. Read-only after load.
class Registry {
 public:
  struct Row {
    std::string code3;
    std::string code1;  // empty when the language has no 639-1 code
    std::string name;
  };

  static Registry load(const fs::path& file) {
    Registry reg;
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot open registry: " + file.string());
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (line[0] == '#') {
        auto eq = line.find('=');
        if (eq != std::string::npos && starts_with(line, "#registry_version"))
          reg.version_ = line.substr(eq + 1);
        continue;
      }
      auto cols = split(line, '\t');
      if (cols.size() != 3)
        throw ConfigError("bad registry row: " + line);
      reg.rows_.push_back({cols[0], cols[1], cols[2]});
    }
    for (const auto& r : reg.rows_) {
      reg.add_key(r.code3, r.code3);
      if (!r.code1.empty()) reg.add_key(r.code1, r.code3);
      reg.add_key(r.name, r.code3);
      // names like "Adyghe; Adygei" are also reachable by each alternative
      for (const auto& alt : split(r.name, ';')) {
        std::string t = trim(alt);
        if (!t.empty()) reg.add_key(t, r.code3);
      }
      reg.by_code3_.emplace(r.code3, LangCode{r.code3, r.name});
    }
    return reg;
  }

  static Registry load_default() { return load(data_dir() / "iso639.tsv"); }

  const std::string& version() const { return version_; }
  const std::vector<Row>& rows() const { return rows_; }

  /// Normalizes a name or code to its ISO 639-3 entry. The full token is
  /// tried first (display names may themselves contain '-'); only when
  /// that misses is a region/script subtag after '-' or '_' stripped
  /// ("en-US" -> eng), with the stripped suffix reported via `stripped`.
  LangCode normalize(const std::string& raw,
                     std::string* stripped = nullptr) const {
    std::string token = trim(raw);
    if (token.empty()) throw UnknownLanguage(raw);
    auto it = keys_.find(to_lower(token));
    if (it == keys_.end()) {
      auto cut = token.find_first_of("-_");
      if (cut == std::string::npos) throw UnknownLanguage(raw);
      std::string suffix = token.substr(cut + 1);
      it = keys_.find(to_lower(token.substr(0, cut)));
      if (it == keys_.end()) throw UnknownLanguage(raw);
      if (stripped) *stripped = suffix;
    }
    return by_code3_.at(it->second);
  }

  /// Parses "xxx-yyy" with both sides normalized. The pair separator takes
  /// precedence over region subtags, so each side is normalized on its own.
  LangPair parse_pair(const std::string& raw) const {
    auto parts = split(trim(raw), '-');
    if (parts.size() != 2 || parts[0].empty() || parts[1].empty())
      throw MalformedPair(raw);
    return {normalize(parts[0]), normalize(parts[1])};
  }

 private:
  void add_key(const std::string& key, const std::string& code3) {
    keys_.emplace(to_lower(trim(key)), code3);  // first mapping wins
  }

  std::string version_ = "unversioned";
  std::vector<Row> rows_;
  std::unordered_map<std::string, std::string> keys_;
  std::unordered_map<std::string, LangCode> by_code3_;
};

}  // namespace forge
