#pragma once

#include <cstdint>
#include <functional>
#include <future>
#include <map>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "forge/common.hpp"

namespace forge {

enum class Scheme { Char, Word, BPE };

inline std::string scheme_name(Scheme s) {
  switch (s) {
    case Scheme::Char: return "char";
    case Scheme::Word: return "word";
    case Scheme::BPE: return "bpe";
  }
  return "?";
}

inline Scheme scheme_parse(const std::string& s) {
  if (s == "char") return Scheme::Char;
  if (s == "word") return Scheme::Word;
  if (s == "bpe") return Scheme::BPE;
  throw ConfigError("unknown vocab scheme: " + s);
}

// Reserved ids, fixed prefix of every vocabulary.
inline constexpr std::uint32_t kPad = 0;
inline constexpr std::uint32_t kUnk = 1;
inline constexpr std::uint32_t kBos = 2;
inline constexpr std::uint32_t kEos = 3;
inline constexpr std::uint32_t kSpaceMark = 4;
inline constexpr std::uint32_t kNumReserved = 5;

inline const char* kUnkRendered = "⁇";  // shown by decode for UNK

// End-of-word marker: a private-use codepoint so it cannot collide with
// real text; rendered as </w> in the model file.
inline constexpr char32_t kEowCp = 0xE000;
inline const std::string kEow = [] {
  std::string s;
  utf8_append(s, kEowCp);
  return s;
}();

using EncodedSeq = std::vector<std::uint32_t>;

/// Pulls lines one at a time; returns false at end of corpus.
using LineSource = std::function<bool(std::string&)>;

inline LineSource lines_of(const std::vector<std::string>& v) {
  auto i = std::make_shared<std::size_t>(0);
  return [&v, i](std::string& out) {
    if (*i >= v.size()) return false;
    out = v[(*i)++];
    return true;
  };
}

inline LineSource lines_of_file(const fs::path& p) {
  auto in = std::make_shared<std::ifstream>(p);
  if (!*in) throw DataError("cannot open corpus: " + p.string());
  return [in](std::string& out) {
    return static_cast<bool>(std::getline(*in, out));
  };
}

struct VocabType {
  std::uint32_t id;
  std::string surface;
  std::uint64_t freq;
};

/// A trained vocabulary: reserved prefix + learned types (+ ordered merge
/// rules for BPE). Immutable once built; encode/decode are const and safe
/// for unrestricted concurrent use.
class Vocab {
 public:
  Vocab(Scheme scheme, std::vector<VocabType> types,
        std::vector<std::pair<std::string, std::string>> merges = {})
      : scheme_(scheme), types_(std::move(types)), merges_(std::move(merges)) {
    for (const auto& t : types_)
      if (t.id >= kNumReserved) by_surface_.emplace(t.surface, t.id);
    for (std::size_t r = 0; r < merges_.size(); ++r)
      ranks_.emplace(merge_key(merges_[r].first, merges_[r].second), r);
  }

  Scheme scheme() const { return scheme_; }
  std::uint32_t size() const { return static_cast<std::uint32_t>(types_.size()); }
  const std::vector<VocabType>& types() const { return types_; }
  const std::vector<std::pair<std::string, std::string>>& merges() const {
    return merges_;
  }

  std::uint32_t id_of(const std::string& surface) const {
    auto it = by_surface_.find(surface);
    return it == by_surface_.end() ? kUnk : it->second;
  }

  // --- encode ---

  EncodedSeq encode(std::string_view line) const {
    switch (scheme_) {
      case Scheme::Char: return encode_char(line);
      case Scheme::Word: return encode_word(line);
      case Scheme::BPE: return encode_bpe(line);
    }
    return {};
  }

  /// BPE segmentation of a single word, as surfaces (ends with the EOW
  /// marker unless everything merged through it).
  std::vector<std::string> segment_word(std::string_view word) const {
    std::vector<std::string> syms;
    for (char32_t cp : utf8_decode(word)) {
      std::string s;
      utf8_append(s, cp);
      syms.push_back(std::move(s));
    }
    syms.push_back(kEow);
    // repeatedly apply the earliest-learned merge present in the word;
    // equivalent to replaying the merge list in order
    while (syms.size() > 1) {
      std::size_t best_rank = SIZE_MAX, best_at = 0;
      for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
        auto it = ranks_.find(merge_key(syms[i], syms[i + 1]));
        if (it != ranks_.end() && it->second < best_rank) {
          best_rank = it->second;
          best_at = i;
        }
      }
      if (best_rank == SIZE_MAX) break;
      const auto& rule = merges_[best_rank];
      std::vector<std::string> next;
      next.reserve(syms.size());
      for (std::size_t i = 0; i < syms.size();) {
        if (i + 1 < syms.size() && syms[i] == rule.first &&
            syms[i + 1] == rule.second) {
          next.push_back(syms[i] + syms[i + 1]);
          i += 2;
        } else {
          next.push_back(syms[i]);
          ++i;
        }
      }
      syms = std::move(next);
    }
    return syms;
  }

  // --- decode ---

  std::string decode(const EncodedSeq& ids) const {
    std::string out;
    bool word_scheme_sep = false;
    for (std::uint32_t id : ids) {
      if (id >= types_.size())
        throw IdOutOfRange("id " + std::to_string(id) + " >= vocab size " +
                           std::to_string(types_.size()));
      switch (id) {
        case kPad:
        case kBos:
        case kEos:
          continue;
        case kUnk:
          append_sep(out, word_scheme_sep);
          out += kUnkRendered;
          if (scheme_ == Scheme::Word) word_scheme_sep = true;
          continue;
        case kSpaceMark:
          out.push_back(' ');
          word_scheme_sep = false;
          continue;
        default: break;
      }
      append_sep(out, word_scheme_sep);
      out += types_[id].surface;
      if (scheme_ == Scheme::Word) word_scheme_sep = true;
    }
    if (scheme_ == Scheme::BPE) {
      // end-of-word markers render as spaces
      std::string rendered;
      rendered.reserve(out.size());
      for (char32_t cp : utf8_decode(out)) {
        if (cp == kEowCp) rendered.push_back(' ');
        else utf8_append(rendered, cp);
      }
      while (!rendered.empty() && rendered.back() == ' ') rendered.pop_back();
      out = std::move(rendered);
    }
    return out;
  }

  // --- persistence: plain text, one type per line, merges after #MERGES ---

  void save(const fs::path& file) const {
    std::string out = "#forge-vocab\tscheme=" + scheme_name(scheme_) + "\n";
    for (const auto& t : types_) {
      out += std::to_string(t.id);
      out.push_back('\t');
      out += escape(t.surface);
      out.push_back('\t');
      out += std::to_string(t.freq);
      out.push_back('\n');
    }
    if (scheme_ == Scheme::BPE) {
      out += "#MERGES\n";
      for (const auto& [l, r] : merges_)
        out += escape(l) + "\t" + escape(r) + "\n";
    }
    atomic_write(file, out);
  }

  static Vocab load(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw DataError("cannot open vocab model: " + file.string());
    std::string line;
    if (!std::getline(in, line) || !starts_with(line, "#forge-vocab"))
      throw DataError("not a vocab model: " + file.string());
    auto eq = line.find("scheme=");
    Scheme scheme = scheme_parse(line.substr(eq + 7));
    std::vector<VocabType> types;
    std::vector<std::pair<std::string, std::string>> merges;
    bool in_merges = false;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (line == "#MERGES") {
        in_merges = true;
        continue;
      }
      auto cols = split(line, '\t');
      if (in_merges) {
        if (cols.size() != 2)
          throw DataError("bad merge row: " + line);
        merges.emplace_back(unescape(cols[0]), unescape(cols[1]));
      } else {
        if (cols.size() != 3) throw DataError("bad vocab row: " + line);
        types.push_back({static_cast<std::uint32_t>(std::stoul(cols[0])),
                         unescape(cols[1]),
                         static_cast<std::uint64_t>(std::stoull(cols[2]))});
      }
    }
    for (std::size_t i = 0; i < types.size(); ++i)
      if (types[i].id != i)
        throw DataError("vocab ids are not contiguous in " + file.string());
    return Vocab(scheme, std::move(types), std::move(merges));
  }

  static std::vector<VocabType> reserved_types() {
    return {{kPad, "<pad>", 0},
            {kUnk, "<unk>", 0},
            {kBos, "<s>", 0},
            {kEos, "</s>", 0},
            {kSpaceMark, "<spc>", 0}};
  }

 private:
  static void append_sep(std::string& out, bool& sep) {
    if (sep) out.push_back(' ');
    sep = false;
  }

  static std::string merge_key(const std::string& l, const std::string& r) {
    return l + '\x1e' + r;
  }

  static std::string escape(const std::string& s) {
    std::string out;
    for (char32_t cp : utf8_decode(s)) {
      if (cp == kEowCp) out += "</w>";
      else utf8_append(out, cp);
    }
    return out;
  }

  static std::string unescape(const std::string& s) {
    std::string out;
    std::size_t pos = 0;
    while (true) {
      std::size_t m = s.find("</w>", pos);
      if (m == std::string::npos) {
        out += s.substr(pos);
        break;
      }
      out += s.substr(pos, m - pos);
      out += kEow;
      pos = m + 4;
    }
    return out;
  }

  EncodedSeq encode_char(std::string_view line) const {
    EncodedSeq out;
    for (char32_t cp : utf8_decode(line)) {
      if (cp == U' ') {
        out.push_back(kSpaceMark);
        continue;
      }
      std::string s;
      utf8_append(s, cp);
      out.push_back(id_of(s));
    }
    return out;
  }

  EncodedSeq encode_word(std::string_view line) const {
    EncodedSeq out;
    for (const auto& w : split_ws(line)) out.push_back(id_of(w));
    return out;
  }

  EncodedSeq encode_bpe(std::string_view line) const {
    EncodedSeq out;
    for (const auto& w : split_ws(line))
      for (const auto& piece : segment_word(w)) out.push_back(id_of(piece));
    return out;
  }

  Scheme scheme_;
  std::vector<VocabType> types_;
  std::vector<std::pair<std::string, std::string>> merges_;
  std::unordered_map<std::string, std::uint32_t> by_surface_;
  std::unordered_map<std::string, std::size_t> ranks_;
};

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace detail {

/// Word-frequency counting, the map-reduce workhorse shared by all three
/// schemes. Chunks are counted independently and the maps merged; the
/// reduce is additive, so worker count cannot change the result.
inline std::unordered_map<std::string, std::uint64_t> count_words(
    const LineSource& src, int workers = env_workers()) {
  std::unordered_map<std::string, std::uint64_t> total;
  std::vector<std::string> block;
  std::string line;
  bool more = true;
  while (more) {
    block.clear();
    while (block.size() < 65536 && (more = src(line))) block.push_back(line);
    if (block.empty()) break;
    if (workers <= 1 || block.size() < 4096) {
      for (const auto& l : block)
        for (const auto& w : split_ws(l)) ++total[w];
    } else {
      std::size_t chunk = (block.size() + workers - 1) / workers;
      std::vector<std::future<std::unordered_map<std::string, std::uint64_t>>>
          futs;
      for (int w = 0; w < workers; ++w) {
        std::size_t lo = w * chunk, hi = std::min(block.size(), lo + chunk);
        if (lo >= hi) break;
        futs.push_back(std::async(std::launch::async, [&block, lo, hi] {
          std::unordered_map<std::string, std::uint64_t> m;
          for (std::size_t i = lo; i < hi; ++i)
            for (const auto& ww : split_ws(block[i])) ++m[ww];
          return m;
        }));
      }
      for (auto& f : futs)
        for (auto& [k, v] : f.get()) total[k] += v;
    }
  }
  return total;
}

inline void sort_by_freq(std::vector<VocabType>& learned) {
  std::sort(learned.begin(), learned.end(),
            [](const VocabType& a, const VocabType& b) {
              if (a.freq != b.freq) return a.freq > b.freq;
              return a.surface < b.surface;
            });
}

}  // namespace detail

inline Vocab train_char(const LineSource& src, int workers = env_workers()) {
  auto words = detail::count_words(src, workers);
  if (words.empty()) throw EmptyCorpus();
  std::unordered_map<std::string, std::uint64_t> chars;
  for (const auto& [w, f] : words) {
    for (char32_t cp : utf8_decode(w)) {
      std::string s;
      utf8_append(s, cp);
      chars[s] += f;
    }
  }
  std::vector<VocabType> learned;
  for (auto& [s, f] : chars) learned.push_back({0, s, f});
  detail::sort_by_freq(learned);
  auto types = Vocab::reserved_types();
  for (auto& t : learned) {
    t.id = static_cast<std::uint32_t>(types.size());
    types.push_back(t);
  }
  return Vocab(Scheme::Char, std::move(types));
}

inline Vocab train_word(const LineSource& src, std::uint32_t max_types,
                        int workers = env_workers()) {
  if (max_types <= kNumReserved)
    throw TargetTooSmall("max_types must exceed the reserved count");
  auto words = detail::count_words(src, workers);
  if (words.empty()) throw EmptyCorpus();
  std::vector<VocabType> learned;
  for (auto& [s, f] : words) learned.push_back({0, s, f});
  detail::sort_by_freq(learned);
  if (learned.size() > max_types - kNumReserved)
    learned.resize(max_types - kNumReserved);
  auto types = Vocab::reserved_types();
  for (auto& t : learned) {
    t.id = static_cast<std::uint32_t>(types.size());
    types.push_back(t);
  }
  return Vocab(Scheme::Word, std::move(types));
}

namespace detail {

struct PairCount {
  std::uint64_t freq = 0;
  std::unordered_set<std::size_t> words;  // indices of words containing pair
};

}  // namespace detail

/// Classic BPE. Words become codepoint sequences plus a terminal
/// end-of-word marker; the most frequent adjacent symbol pair is merged
/// until the type count reaches target_size or no pair occurs twice.
/// Ties break toward the lexicographically smaller concatenated surface.
/// The caller is expected to pass deduplicated lines.
inline Vocab train_bpe(const LineSource& src, std::uint32_t target_size,
                       int workers = env_workers()) {
  auto word_freqs = detail::count_words(src, workers);
  if (word_freqs.empty()) throw EmptyCorpus();

  // deterministic word order for the merge bookkeeping
  std::vector<std::pair<std::string, std::uint64_t>> words(word_freqs.begin(),
                                                           word_freqs.end());
  std::sort(words.begin(), words.end());

  std::vector<std::vector<std::string>> syms(words.size());
  std::unordered_map<std::string, std::uint64_t> char_freqs;
  for (std::size_t i = 0; i < words.size(); ++i) {
    for (char32_t cp : utf8_decode(words[i].first)) {
      std::string s;
      utf8_append(s, cp);
      char_freqs[s] += words[i].second;
      syms[i].push_back(std::move(s));
    }
    syms[i].push_back(kEow);
    char_freqs[kEow] += words[i].second;
  }

  if (target_size <= kNumReserved + char_freqs.size())
    throw TargetTooSmall(
        "target_size " + std::to_string(target_size) +
        " does not exceed reserved + base symbols (" +
        std::to_string(kNumReserved + char_freqs.size()) + ")");

  std::vector<VocabType> learned;
  for (auto& [s, f] : char_freqs) learned.push_back({0, s, f});
  detail::sort_by_freq(learned);
  auto types = Vocab::reserved_types();
  for (auto& t : learned) {
    t.id = static_cast<std::uint32_t>(types.size());
    types.push_back(t);
  }

  // adjacent-pair counts; overlapping occurrences all count
  std::map<std::pair<std::string, std::string>, detail::PairCount> counts;
  for (std::size_t i = 0; i < syms.size(); ++i) {
    for (std::size_t k = 0; k + 1 < syms[i].size(); ++k) {
      auto& pc = counts[{syms[i][k], syms[i][k + 1]}];
      pc.freq += words[i].second;
      pc.words.insert(i);
    }
  }

  std::vector<std::pair<std::string, std::string>> merges;
  while (types.size() < target_size) {
    // best pair: highest freq, then smaller concatenated surface, then
    // smaller left part
    const std::pair<std::string, std::string>* best = nullptr;
    std::uint64_t best_freq = 0;
    std::string best_concat;
    for (const auto& [pair, pc] : counts) {
      if (pc.freq == 0) continue;
      std::string concat = pair.first + pair.second;
      if (!best || pc.freq > best_freq ||
          (pc.freq == best_freq &&
           (concat < best_concat ||
            (concat == best_concat && pair.first < best->first)))) {
        best = &pair;
        best_freq = pc.freq;
        best_concat = concat;
      }
    }
    if (!best || best_freq < 2) break;  // merges of frequency 1 are noise

    auto rule = *best;
    merges.push_back(rule);
    types.push_back({static_cast<std::uint32_t>(types.size()),
                     rule.first + rule.second, best_freq});

    // rewrite affected words and update pair counts incrementally
    auto affected = counts[rule].words;
    for (std::size_t wi : affected) {
      const auto& w = syms[wi];
      std::uint64_t f = words[wi].second;
      for (std::size_t k = 0; k + 1 < w.size(); ++k) {
        auto it = counts.find({w[k], w[k + 1]});
        it->second.freq -= f;
        it->second.words.erase(wi);
      }
      std::vector<std::string> next;
      next.reserve(w.size());
      for (std::size_t k = 0; k < w.size();) {
        if (k + 1 < w.size() && w[k] == rule.first && w[k + 1] == rule.second) {
          next.push_back(w[k] + w[k + 1]);
          k += 2;
        } else {
          next.push_back(w[k]);
          ++k;
        }
      }
      syms[wi] = std::move(next);
      for (std::size_t k = 0; k + 1 < syms[wi].size(); ++k) {
        auto& pc = counts[{syms[wi][k], syms[wi][k + 1]}];
        pc.freq += f;
        pc.words.insert(wi);
      }
    }
    counts.erase(rule);
  }

  return Vocab(Scheme::BPE, std::move(types), std::move(merges));
}

/// Deduplicates lines, keeping first occurrences; BPE training learns its
/// merges from deduplicated sentences.
inline LineSource dedup_lines(const LineSource& src) {
  auto seen = std::make_shared<
      std::unordered_set<Digest128, Digest128Hash>>();
  return [src, seen](std::string& out) {
    std::string line;
    while (src(line)) {
      if (seen->insert(digest128(line)).second) {
        out = line;
        return true;
      }
    }
    return false;
  };
}

inline Vocab train(Scheme scheme, const LineSource& src, std::uint32_t size,
                   int workers = env_workers()) {
  switch (scheme) {
    case Scheme::Char: return train_char(src, workers);
    case Scheme::Word: return train_word(src, size, workers);
    case Scheme::BPE: return train_bpe(src, size, workers);
  }
  throw ConfigError("bad scheme");
}

}  // namespace forge
