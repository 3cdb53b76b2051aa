#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "forge/common.hpp"
#include "forge/langid.hpp"
#include "forge/parsers.hpp"

namespace forge {

inline constexpr const char* kToolVersion = "forge 0.1.0";

struct DatasetEntry {
  std::string id;
  LangPair pair;
  std::string url;
  FormatTag format;
  std::string citation_key;
};

struct CheckReport {
  std::size_t n_read = 0;
  std::size_t n_empty_removed = 0;
  std::size_t n_count_mismatch = 0;
  bool ok() const { return n_count_mismatch == 0; }
};

struct SanityCheckFailed : DataError {
  std::string id;
  CheckReport report;
  SanityCheckFailed(std::string dataset_id, CheckReport rep)
      : DataError("sanity check failed for dataset '" + dataset_id +
                  "': side files have different segment counts (read " +
                  std::to_string(rep.n_read) + " aligned segments)"),
        id(std::move(dataset_id)),
        report(rep) {}
};

/// Drops pairs with either side empty after trimming; mismatched side
/// counts are reported, not raised (the caller decides on abort).
inline std::pair<std::vector<SegmentPair>, CheckReport> sanity_check(
    const std::vector<std::string>& src_lines,
    const std::vector<std::string>& tgt_lines) {
  CheckReport rep;
  std::vector<SegmentPair> kept;
  std::size_t n = std::min(src_lines.size(), tgt_lines.size());
  if (src_lines.size() != tgt_lines.size())
    rep.n_count_mismatch =
        std::max(src_lines.size(), tgt_lines.size()) - n;
  for (std::size_t i = 0; i < n; ++i) {
    ++rep.n_read;
    if (trim(src_lines[i]).empty() || trim(tgt_lines[i]).empty()) {
      ++rep.n_empty_removed;
      continue;
    }
    kept.push_back({src_lines[i], tgt_lines[i], "", i + 1});
  }
  return {std::move(kept), rep};
}

/// The dataset index: a plain versioned TSV shipped with the repo.
class Index {
 public:
  static Index load(const fs::path& file, const Registry& reg) {
    Index idx;
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot open index: " + file.string());
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      auto cols = split(line, '\t');
      if (cols.size() != 6) throw ConfigError("bad index row: " + line);
      DatasetEntry e;
      e.id = cols[0];
      e.pair = {reg.normalize(cols[1]), reg.normalize(cols[2])};
      e.url = cols[3];
      e.format = FormatTag::parse(cols[4]);
      e.citation_key = cols[5];
      if (idx.by_id_.count(e.id))
        throw ConfigError("duplicate dataset id: " + e.id);
      idx.by_id_[e.id] = idx.entries_.size();
      idx.entries_.push_back(std::move(e));
    }
    return idx;
  }

  static Index load_default(const Registry& reg) {
    return load(data_dir() / "index.tsv", reg);
  }

  const std::vector<DatasetEntry>& entries() const { return entries_; }

  const DatasetEntry& by_id(const std::string& id) const {
    auto it = by_id_.find(id);
    if (it == by_id_.end()) throw InvalidSelection("unknown dataset id: " + id);
    return entries_[it->second];
  }

  /// Entries whose pair matches in either direction, id-sorted.
  std::vector<DatasetEntry> list(const LangPair& pair,
                                 const std::string& name_substring = "") const {
    std::vector<DatasetEntry> out;
    for (const auto& e : entries_) {
      bool fwd = e.pair.src.code == pair.src.code &&
                 e.pair.tgt.code == pair.tgt.code;
      bool rev = e.pair.src.code == pair.tgt.code &&
                 e.pair.tgt.code == pair.src.code;
      if (!fwd && !rev) continue;
      if (!name_substring.empty() &&
          e.id.find(name_substring) == std::string::npos)
        continue;
      out.push_back(e);
    }
    std::sort(out.begin(), out.end(),
              [](const DatasetEntry& a, const DatasetEntry& b) {
                return a.id < b.id;
              });
    return out;
  }

 private:
  std::vector<DatasetEntry> entries_;
  std::map<std::string, std::size_t> by_id_;
};

// ---------------------------------------------------------------------------
// Transport + cache
// ---------------------------------------------------------------------------

/// Network access sits behind this interface so tests run offline.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual void fetch(const std::string& url, const fs::path& dest) = 0;
};

/// Handles file:// URLs and plain paths; the CLI wires an HTTP transport
/// on top of this for remote indices.
class FileTransport : public Transport {
 public:
  void fetch(const std::string& url, const fs::path& dest) override {
    std::string path = url;
    if (starts_with(path, "file://")) path = path.substr(7);
    std::error_code ec;
    fs::copy_file(path, dest, fs::copy_options::overwrite_existing, ec);
    if (ec) throw DownloadFailed(url, ec.message());
  }
};

/// URL-keyed local cache. Objects live at <dir>/<sha256(url)> with the
/// payload checksum alongside; writes are temp + rename so concurrent
/// fetchers of one URL converge.
class Cache {
 public:
  explicit Cache(fs::path dir) : dir_(std::move(dir)) {
    fs::create_directories(dir_);
  }

  static fs::path default_dir() {
    if (const char* env = std::getenv("FORGE_CACHE")) return fs::path(env);
    return fs::path(".forge-cache");
  }

  fs::path fetch(const DatasetEntry& entry, Transport& transport) {
    // keep the URL's extension chain on the cache object so format
    // dispatch (.gz/.zip) keeps working on cached payloads
    std::string url = entry.url;
    std::string name = url.substr(url.find_last_of('/') + 1);
    if (auto q = name.find('?'); q != std::string::npos) name = name.substr(0, q);
    std::string ext;
    if (auto dot = name.find('.'); dot != std::string::npos)
      ext = name.substr(dot);
    return fetch_keyed(url, sha256_hex(url) + ext, transport);
  }

  fs::path fetch_keyed(const std::string& url, const std::string& key,
                       Transport& transport) {
    fs::path payload = dir_ / key;
    fs::path sumfile = dir_ / (key + ".sum");
    if (fs::exists(payload) && fs::exists(sumfile)) {
      std::string want = trim(read_file(sumfile));
      if (sha256_hex_file(payload) == want) return payload;  // cache hit
      fs::remove(payload);  // corrupt cache object: refetch once
      fs::remove(sumfile);
    }
    fs::path tmp = dir_ / (key + ".part");
    // retry budget of 1 for flaky transfers
    for (int attempt = 0;; ++attempt) {
      try {
        transport.fetch(url, tmp);
        break;
      } catch (const std::exception& e) {
        if (attempt >= 1) throw DownloadFailed(url, e.what());
      }
    }
    std::string sum = sha256_hex_file(tmp);
    fs::rename(tmp, payload);
    atomic_write(sumfile, sum + "\n");
    return payload;
  }

  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
};

// ---------------------------------------------------------------------------
// get + merge
// ---------------------------------------------------------------------------

struct Signature {
  std::string tool_version;
  std::string registry_version;
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
  std::map<std::string, std::string> file_digests;  // filename -> sha256
  std::map<std::string, std::uint64_t> line_counts;

  nlohmann::ordered_json to_json() const {
    // keys sorted so the serialized form is stable across runs/platforms
    nlohmann::ordered_json j;
    j["file_digests"] = file_digests;
    j["line_counts"] = line_counts;
    j["registry_version"] = registry_version;
    j["test_ids"] = test_ids;
    j["tool_version"] = tool_version;
    j["train_ids"] = train_ids;
    return j;
  }

  static Signature from_json(const nlohmann::json& j) {
    Signature s;
    s.tool_version = j.at("tool_version");
    s.registry_version = j.at("registry_version");
    s.train_ids = j.at("train_ids").get<std::vector<std::string>>();
    s.test_ids = j.at("test_ids").get<std::vector<std::string>>();
    s.file_digests =
        j.at("file_digests").get<std::map<std::string, std::string>>();
    s.line_counts =
        j.at("line_counts").get<std::map<std::string, std::uint64_t>>();
    return s;
  }

  /// Recomputes digests of the named files under `dir`; returns the names
  /// that no longer match (empty means the dataset is intact).
  std::vector<std::string> verify(const fs::path& dir) const {
    std::vector<std::string> bad;
    for (const auto& [name, digest] : file_digests) {
      fs::path p = dir / name;
      if (!fs::exists(p) || sha256_hex_file(p) != digest) bad.push_back(name);
    }
    return bad;
  }
};

class Bibliography {
 public:
  static Bibliography load(const fs::path& file) {
    Bibliography bib;
    std::string text = read_file(file);
    std::size_t pos = 0;
    while ((pos = text.find('@', pos)) != std::string::npos) {
      std::size_t brace = text.find('{', pos);
      if (brace == std::string::npos) break;
      std::size_t comma = text.find(',', brace);
      std::string key = trim(text.substr(brace + 1, comma - brace - 1));
      // scan to the matching closing brace
      int depth = 0;
      std::size_t end = brace;
      for (; end < text.size(); ++end) {
        if (text[end] == '{') ++depth;
        else if (text[end] == '}' && --depth == 0) break;
      }
      bib.records_[key] = text.substr(pos, end - pos + 1);
      pos = end + 1;
    }
    return bib;
  }

  static Bibliography load_default() {
    return load(data_dir() / "citations.bib");
  }

  const std::string& record(const std::string& key) const {
    auto it = records_.find(key);
    if (it == records_.end()) throw MissingCitation(key);
    return it->second;
  }

 private:
  std::map<std::string, std::string> records_;
};

/// Deduplicated BibTeX for the given entries, in entry-id order.
inline std::string emit_citations(const std::vector<DatasetEntry>& entries,
                                  const Bibliography& bib) {
  std::vector<const DatasetEntry*> sorted;
  for (const auto& e : entries) sorted.push_back(&e);
  std::sort(sorted.begin(), sorted.end(),
            [](auto* a, auto* b) { return a->id < b->id; });
  std::string out;
  std::vector<std::string> used;
  for (const auto* e : sorted) {
    if (std::find(used.begin(), used.end(), e->citation_key) != used.end())
      continue;
    used.push_back(e->citation_key);
    out += bib.record(e->citation_key);
    out += "\n\n";
  }
  return out;
}

/// An entry whose URL ends in .gz/.zip decompresses before its base format
/// applies; the index's format column names only the inner format.
inline FormatTag effective_format(const DatasetEntry& e) {
  std::string lower = to_lower(e.url);
  if (ends_with(lower, ".gz") || ends_with(lower, ".zip"))
    return FormatTag::archive_of(e.format);
  return e.format;
}

class Merger {
 public:
  Merger(const Registry& reg, const Bibliography& bib, Cache& cache,
         Transport& transport)
      : reg_(reg), bib_(bib), cache_(cache), transport_(transport) {}

  /// Fetches, parses and sanity-checks every selected dataset, writing
  /// train.src/train.tgt (train entries concatenated in the given order),
  /// per-test held-out files, signature.json and citations.bib.
  Signature get_and_merge(const std::vector<DatasetEntry>& train,
                          const std::vector<DatasetEntry>& tests,
                          const LangPair& pair, const fs::path& out_dir) {
    if (train.empty())
      throw InvalidSelection("no training datasets selected");
    fs::create_directories(out_dir);

    Signature sig;
    sig.tool_version = kToolVersion;
    sig.registry_version = reg_.version();

    merge_group(train, pair, out_dir, "train", sig);
    for (const auto& e : train) sig.train_ids.push_back(e.id);
    for (const auto& e : tests) {
      merge_group({e}, pair, out_dir, "test." + e.id, sig);
      sig.test_ids.push_back(e.id);
    }

    std::vector<DatasetEntry> all = train;
    all.insert(all.end(), tests.begin(), tests.end());
    std::string bibtex = emit_citations(all, bib_);
    atomic_write(out_dir / "citations.bib", bibtex);
    atomic_write(out_dir / "signature.json", sig.to_json().dump(2) + "\n");
    return sig;
  }

 private:
  void merge_group(const std::vector<DatasetEntry>& entries,
                   const LangPair& pair, const fs::path& out_dir,
                   const std::string& stem, Signature& sig) {
    fs::path src_tmp = out_dir / (stem + ".src.tmp");
    fs::path tgt_tmp = out_dir / (stem + ".tgt.tmp");
    std::ofstream src_out(src_tmp, std::ios::binary | std::ios::trunc);
    std::ofstream tgt_out(tgt_tmp, std::ios::binary | std::ios::trunc);
    Sha256 src_hash, tgt_hash;
    std::uint64_t n_lines = 0;
    CheckReport total;

    for (const auto& e : entries) {
      bool reversed = e.pair.src.code == pair.tgt.code &&
                      e.pair.src.code != e.pair.tgt.code;
      FormatTag fmt = effective_format(e);
      fs::path payload;
      if (fmt.kind == FormatTag::MosesPair) {
        // the url is the stem; both side files are cached under names that
        // keep the <stem>.<code> sibling convention the parser expects
        std::string stem_key = sha256_hex(e.url);
        cache_.fetch_keyed(e.url + "." + e.pair.tgt.code,
                           stem_key + "." + e.pair.tgt.code, transport_);
        payload = cache_.fetch_keyed(e.url + "." + e.pair.src.code,
                                     stem_key + "." + e.pair.src.code,
                                     transport_);
      } else {
        payload = cache_.fetch(e, transport_);
      }
      CheckReport rep;
      Parser parser(e.pair, /*strict=*/true);
      auto report = parser.parse(
          payload, fmt, e.id, [&](SegmentPair&& p) {
            ++rep.n_read;
            std::string s = reversed ? p.tgt : p.src;
            std::string t = reversed ? p.src : p.tgt;
            if (trim(s).empty() || trim(t).empty()) {
              ++rep.n_empty_removed;
              return;
            }
            src_out << s << '\n';
            tgt_out << t << '\n';
            src_hash.update(s);
            src_hash.update("\n");
            tgt_hash.update(t);
            tgt_hash.update("\n");
            ++n_lines;
          });
      if (report.count_mismatch) {
        rep.n_count_mismatch = 1;
        src_out.close();
        tgt_out.close();
        fs::remove(src_tmp);
        fs::remove(tgt_tmp);
        throw SanityCheckFailed(e.id, rep);
      }
      total.n_read += rep.n_read;
      total.n_empty_removed += rep.n_empty_removed;
    }

    src_out.close();
    tgt_out.close();
    fs::rename(src_tmp, out_dir / (stem + ".src"));
    fs::rename(tgt_tmp, out_dir / (stem + ".tgt"));
    sig.file_digests[stem + ".src"] = src_hash.finish_hex();
    sig.file_digests[stem + ".tgt"] = tgt_hash.finish_hex();
    sig.line_counts[stem] = n_lines;
    reports_[stem] = total;
  }

 public:
  const std::map<std::string, CheckReport>& reports() const {
    return reports_;
  }

 private:
  const Registry& reg_;
  const Bibliography& bib_;
  Cache& cache_;
  Transport& transport_;
  std::map<std::string, CheckReport> reports_;
};

}  // namespace forge
