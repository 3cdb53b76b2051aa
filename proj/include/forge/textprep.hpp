#pragma once

#include <functional>
#include <future>
#include <string>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "forge/common.hpp"

namespace forge {

struct SegmentPair {
  std::string src;
  std::string tgt;
  std::string origin_id;
  std::size_t line_no = 0;
  bool operator==(const SegmentPair& o) const {
    return src == o.src && tgt == o.tgt;
  }
};

/// Punctuation/digit normalization map, loaded from the bundled table.
/// Punctuation rows map a codepoint to an ASCII replacement string; digit
/// rows give a script's zero so the whole decimal block maps by value.
class NormalizeTable {
 public:
  static NormalizeTable load(const fs::path& file) {
    NormalizeTable t;
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot open normalization map: " + file.string());
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      auto cols = split(line, '\t');
      char32_t cp = static_cast<char32_t>(std::stoul(cols[1], nullptr, 16));
      if (cols[0] == "P") {
        t.punct_[cp] = cols.size() > 2 ? cols[2] : "";
      } else if (cols[0] == "D") {
        for (unsigned d = 0; d < 10; ++d)
          t.digits_[cp + d] = static_cast<char>('0' + d);
      }
    }
    return t;
  }

  static NormalizeTable load_default() {
    return load(data_dir() / "normalization.tsv");
  }

  /// Maps punctuation variants and non-ASCII digits to ASCII, collapses
  /// whitespace runs to single spaces, and trims the ends.
  std::string normalize(std::string_view s) const {
    auto cps = utf8_decode(s);
    std::string out;
    out.reserve(s.size());
    bool pending_space = false;
    bool at_start = true;
    auto emit = [&](std::string_view piece) {
      if (piece.empty()) return;
      if (pending_space && !at_start) out.push_back(' ');
      pending_space = false;
      at_start = false;
      out.append(piece);
    };
    for (char32_t cp : cps) {
      if (cp == U' ' || cp == U'\t' || cp == U'\n' || cp == U'\r') {
        pending_space = true;
        continue;
      }
      if (auto it = digits_.find(cp); it != digits_.end()) {
        emit(std::string_view(&it->second, 1));
        continue;
      }
      if (auto it = punct_.find(cp); it != punct_.end()) {
        if (it->second == " ") {
          pending_space = true;
        } else {
          emit(it->second);
        }
        continue;
      }
      std::string tmp;
      utf8_append(tmp, cp);
      emit(tmp);
    }
    return out;
  }

 private:
  std::unordered_map<char32_t, std::string> punct_;
  std::unordered_map<char32_t, char> digits_;
};

/// Word tokenizer: maximal runs of letters/marks/digits become one token,
/// every other non-space character is its own token. Any codepoint past
/// ASCII counts as a word character (punctuation variants have already
/// been folded to ASCII by normalize).
inline std::vector<std::string> tokenize(std::string_view s) {
  std::vector<std::string> out;
  auto cps = utf8_decode(s);
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  };
  for (char32_t cp : cps) {
    if (cp == U' ') {
      flush();
    } else if (cp < 0x80 && !std::isalnum(static_cast<int>(cp))) {
      flush();
      std::string t(1, static_cast<char>(cp));
      out.push_back(t);
    } else {
      utf8_append(cur, cp);
    }
  }
  flush();
  return out;
}

inline std::string detokenize(const std::vector<std::string>& toks) {
  std::string out;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (i) out.push_back(' ');
    out += toks[i];
  }
  return out;
}

struct CleanConfig {
  double max_ratio = 5.0;         // token-length ratio cap, both directions
  std::size_t max_len = 512;      // tokens per side
  double nonascii_max_frac = 0.5; // non-ASCII fraction cap on the target side
  std::vector<std::string> url_markers = {"://", "www."};
  bool strict = false;

  void validate() const {
    if (max_ratio <= 1.0) throw ConfigError("max_ratio must be > 1");
    if (nonascii_max_frac <= 0 || nonascii_max_frac > 1)
      throw ConfigError("nonascii_max_frac must be in (0, 1]");
    if (max_len < 1) throw ConfigError("max_len must be >= 1");
  }
};

struct CleanStats {
  std::size_t n_input = 0;
  std::size_t n_empty = 0;
  std::size_t n_ratio = 0;
  std::size_t n_len = 0;
  std::size_t n_nonascii = 0;
  std::size_t n_url = 0;
  std::size_t n_overlap = 0;
  std::size_t n_dup = 0;
  std::size_t n_kept = 0;

  std::size_t dropped() const {
    return n_empty + n_ratio + n_len + n_nonascii + n_url + n_overlap + n_dup;
  }
};

/// Digest sets of the held-out data, one per side, for the overlap filter.
struct HeldoutSets {
  std::unordered_set<Digest128, Digest128Hash> src;
  std::unordered_set<Digest128, Digest128Hash> tgt;

  static HeldoutSets build(const std::vector<SegmentPair>& heldout,
                           const NormalizeTable& norm) {
    HeldoutSets h;
    for (const auto& p : heldout) {
      h.src.insert(digest128(norm.normalize(p.src)));
      h.tgt.insert(digest128(norm.normalize(p.tgt)));
    }
    return h;
  }
};

namespace detail {

// Verdict of the stateless filter stages; 0 = keep.
enum class Drop : std::uint8_t { None, Empty, Ratio, Len, NonAscii, Url };

struct Staged {
  std::string src_norm;
  std::string tgt_norm;
  Drop drop = Drop::None;
};

inline bool has_url(std::string_view s,
                    const std::vector<std::string>& markers) {
  for (const auto& m : markers) {
    if (m == "www.") {
      // token-initial only
      std::size_t pos = 0;
      while ((pos = s.find(m, pos)) != std::string_view::npos) {
        if (pos == 0 || s[pos - 1] == ' ') return true;
        ++pos;
      }
    } else if (s.find(m) != std::string_view::npos) {
      return true;
    }
  }
  return false;
}

inline Staged stage_pair(const SegmentPair& p, const CleanConfig& cfg,
                         const NormalizeTable& norm) {
  Staged st;
  st.src_norm = norm.normalize(p.src);
  st.tgt_norm = norm.normalize(p.tgt);
  if (st.src_norm.empty() || st.tgt_norm.empty()) {
    st.drop = Drop::Empty;
    return st;
  }
  auto src_toks = tokenize(st.src_norm);
  auto tgt_toks = tokenize(st.tgt_norm);
  double a = static_cast<double>(src_toks.size());
  double b = static_cast<double>(tgt_toks.size());
  if (src_toks.size() > cfg.max_len || tgt_toks.size() > cfg.max_len) {
    st.drop = Drop::Len;
    return st;
  }
  if (a / b > cfg.max_ratio || b / a > cfg.max_ratio) {
    st.drop = Drop::Ratio;
    return st;
  }
  // non-ASCII fraction over non-space chars of the target (English) side
  std::size_t non_ascii = 0, total = 0;
  for (char32_t cp : utf8_decode(st.tgt_norm)) {
    if (cp == U' ') continue;
    ++total;
    if (cp >= 0x80) ++non_ascii;
  }
  if (total > 0 &&
      static_cast<double>(non_ascii) / static_cast<double>(total) >
          cfg.nonascii_max_frac) {
    st.drop = Drop::NonAscii;
    return st;
  }
  if (has_url(st.src_norm, cfg.url_markers) ||
      has_url(st.tgt_norm, cfg.url_markers)) {
    st.drop = Drop::Url;
    return st;
  }
  return st;
}

}  // namespace detail

/// The cleaning pipeline. Filters apply in fixed order: empty, length,
/// ratio, non-ASCII, URL (stateless, run across workers), then held-out
/// overlap and exact-duplicate removal (sequential fold, first occurrence
/// kept). Output order equals input order regardless of worker count.
class Cleaner {
 public:
  Cleaner(CleanConfig cfg, const NormalizeTable& norm, HeldoutSets heldout,
          int workers = env_workers())
      : cfg_(std::move(cfg)),
        norm_(norm),
        heldout_(std::move(heldout)),
        workers_(std::max(1, workers)) {
    cfg_.validate();
  }

  /// Pushes one block of pairs through the pipeline, invoking `sink` for
  /// each survivor (normalized text). Call repeatedly, then read stats().
  void run_block(const std::vector<SegmentPair>& block,
                 const std::function<void(const SegmentPair&)>& sink) {
    std::vector<detail::Staged> staged(block.size());
    if (workers_ == 1 || block.size() < 64) {
      for (std::size_t i = 0; i < block.size(); ++i)
        staged[i] = detail::stage_pair(block[i], cfg_, norm_);
    } else {
      std::vector<std::future<void>> futs;
      std::size_t chunk = (block.size() + workers_ - 1) / workers_;
      for (int w = 0; w < workers_; ++w) {
        std::size_t lo = w * chunk;
        std::size_t hi = std::min(block.size(), lo + chunk);
        if (lo >= hi) break;
        futs.push_back(std::async(std::launch::async, [&, lo, hi] {
          for (std::size_t i = lo; i < hi; ++i)
            staged[i] = detail::stage_pair(block[i], cfg_, norm_);
        }));
      }
      for (auto& f : futs) f.get();
    }
    // sequential stages: overlap then dedup
    for (std::size_t i = 0; i < block.size(); ++i) {
      ++stats_.n_input;
      using detail::Drop;
      switch (staged[i].drop) {
        case Drop::Empty: ++stats_.n_empty; continue;
        case Drop::Len: ++stats_.n_len; continue;
        case Drop::Ratio: ++stats_.n_ratio; continue;
        case Drop::NonAscii: ++stats_.n_nonascii; continue;
        case Drop::Url: ++stats_.n_url; continue;
        case Drop::None: break;
      }
      Digest128 sd = digest128(staged[i].src_norm);
      Digest128 td = digest128(staged[i].tgt_norm);
      if (heldout_.src.count(sd) || heldout_.tgt.count(td)) {
        ++stats_.n_overlap;
        continue;
      }
      Sha256 h;
      h.update(staged[i].src_norm);
      h.update("\x1f");
      h.update(staged[i].tgt_norm);
      auto d = h.finish();
      Digest128 pd;
      std::memcpy(&pd.hi, d.data(), 8);
      std::memcpy(&pd.lo, d.data() + 8, 8);
      if (!seen_.insert(pd).second) {
        ++stats_.n_dup;
        continue;
      }
      ++stats_.n_kept;
      SegmentPair out = block[i];
      out.src = staged[i].src_norm;
      out.tgt = staged[i].tgt_norm;
      sink(out);
    }
  }

  const CleanStats& stats() const { return stats_; }

 private:
  CleanConfig cfg_;
  const NormalizeTable& norm_;
  HeldoutSets heldout_;
  int workers_;
  CleanStats stats_;
  std::unordered_set<Digest128, Digest128Hash> seen_;
};

/// One-shot convenience over in-memory pairs.
inline std::pair<std::vector<SegmentPair>, CleanStats> clean(
    const std::vector<SegmentPair>& pairs, const CleanConfig& cfg,
    const std::vector<SegmentPair>& heldout, const NormalizeTable& norm,
    int workers = env_workers()) {
  Cleaner cleaner(cfg, norm, HeldoutSets::build(heldout, norm), workers);
  std::vector<SegmentPair> kept;
  cleaner.run_block(pairs,
                    [&](const SegmentPair& p) { kept.push_back(p); });
  return {std::move(kept), cleaner.stats()};
}

}  // namespace forge
