// Acceptance suite: one self-contained check per release criterion, each
// printing a single PASS/FAIL line. Exits nonzero if any check fails.
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <unistd.h>

#include "forge/catalog.hpp"
#include "forge/langid.hpp"
#include "forge/pipeline.hpp"
#include "forge/store.hpp"
#include "forge/textprep.hpp"
#include "forge/vocab.hpp"
#include "oracles.hpp"

using namespace forge;

namespace {

int failures = 0;

void report(int number, const std::string& name, bool ok,
            const std::string& detail = "") {
  std::printf("%s  %2d. %s%s%s\n", ok ? "PASS" : "FAIL", number, name.c_str(),
              detail.empty() ? "" : " -- ", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

void run(int number, const std::string& name,
         const std::function<void(std::string&)>& body) {
  std::string detail;
  bool ok = false;
  try {
    body(detail);
    ok = detail.empty() || detail.substr(0, 5) != "FAIL:";
    if (!ok) detail = detail.substr(5);
  } catch (const std::exception& e) {
    detail = std::string("exception: ") + e.what();
  }
  report(number, name, ok, detail);
}

fs::path temp_dir() {
  static int n = 0;
  fs::path d = fs::temp_directory_path() /
               ("forge-accept-" + std::to_string(::getpid()) + "-" +
                std::to_string(n++));
  fs::create_directories(d);
  return d;
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  out << content;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

std::string rand_word(SplitMix64& rng, int alphabet, std::size_t max_len) {
  std::size_t len = 1 + rng.below(max_len);
  std::string w;
  for (std::size_t i = 0; i < len; ++i)
    w.push_back(static_cast<char>('a' + rng.below(alphabet)));
  return w;
}

const Registry& reg() {
  static Registry r = Registry::load_default();
  return r;
}

// ---------------------------------------------------------------------------

void c1_bpe_oracle(std::string& detail) {
  auto t0 = std::chrono::steady_clock::now();
  // the classic fixture
  {
    std::vector<std::string> lines;
    for (int i = 0; i < 5; ++i) lines.push_back("low");
    for (int i = 0; i < 2; ++i) lines.push_back("lower");
    for (int i = 0; i < 6; ++i) lines.push_back("newest");
    for (int i = 0; i < 3; ++i) lines.push_back("widest");
    Vocab v = train_bpe(lines_of(lines), 40, 1);
    if (v.merges() != oracle::bpe_merges(lines, 40)) {
      detail = "FAIL:classic fixture merges differ from oracle";
      return;
    }
  }
  SplitMix64 rng(2024);
  for (int round = 0; round < 50; ++round) {
    int alphabet = 2 + static_cast<int>(rng.below(9));  // <= 10 letters
    std::size_t n_words = 5 + rng.below(196);           // <= 200 words
    std::vector<std::string> lines;
    std::string line;
    for (std::size_t i = 0; i < n_words; ++i) {
      if (!line.empty()) line += " ";
      line += rand_word(rng, alphabet, 6);
      if (i % 8 == 7) {
        lines.push_back(line);
        line.clear();
      }
    }
    if (!line.empty()) lines.push_back(line);
    std::uint32_t target = 40 + static_cast<std::uint32_t>(rng.below(40));
    Vocab v = train_bpe(lines_of(lines), target, 1);
    auto expect = oracle::bpe_merges(lines, target);
    if (v.merges() != expect) {
      detail = "FAIL:fuzz round " + std::to_string(round) +
               " merges differ from oracle";
      return;
    }
    // segmentation agrees with replaying the merge list
    for (int k = 0; k < 5; ++k) {
      std::string w = rand_word(rng, alphabet, 8);
      if (v.segment_word(w) != oracle::bpe_segment(w, expect)) {
        detail = "FAIL:segmentation differs from oracle on '" + w + "'";
        return;
      }
    }
  }
  double dt = seconds_since(t0);
  if (dt >= 10.0) {
    detail = "FAIL:took " + std::to_string(dt) + "s (budget 10s)";
    return;
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "50 corpora + fixture in %.2fs", dt);
  detail = buf;
}

void c2_round_trip(std::string& detail) {
  SplitMix64 rng(7);
  // a fixed word list so the word scheme sees no unknowns
  std::vector<std::string> word_list;
  for (int i = 0; i < 300; ++i) word_list.push_back(rand_word(rng, 10, 7));
  std::vector<std::string> corpus;
  for (const auto& w : word_list) corpus.push_back(w + " " + w);
  auto sentence = [&] {
    std::size_t n = 1 + rng.below(10);
    std::string s;
    for (std::size_t i = 0; i < n; ++i) {
      if (i) s += " ";
      s += word_list[rng.below(word_list.size())];
    }
    return s;
  };
  for (Scheme scheme : {Scheme::Char, Scheme::Word, Scheme::BPE}) {
    Vocab v = train(scheme, lines_of(corpus),
                    scheme == Scheme::BPE ? 200 : 400, 1);
    for (int i = 0; i < 10000; ++i) {
      std::string s = sentence();
      EncodedSeq ids = v.encode(s);
      for (std::uint32_t id : ids)
        if (id == kUnk) {
          detail = "FAIL:" + scheme_name(scheme) + " produced UNK for '" + s +
                   "'";
          return;
        }
      if (v.decode(ids) != s) {
        detail = "FAIL:" + scheme_name(scheme) + " round trip broke '" + s +
                 "'";
        return;
      }
    }
  }
  detail = "10000 sentences per scheme, UNK-free";
}

void c3_widths(std::string& detail) {
  struct { std::uint64_t size; int width; } cases[] = {
      {250, 1}, {64000, 2}, {512000, 4}, {256, 1}, {65536, 2}};
  for (const auto& c : cases)
    if (width_for(c.size) != c.width) {
      detail = "FAIL:width_for(" + std::to_string(c.size) + ") = " +
               std::to_string(width_for(c.size)) + ", want " +
               std::to_string(c.width);
      return;
    }
}

void c4_shard_golden(std::string& detail) {
  std::string bytes = encode_shard({{{1, 2, 3}, {4}}}, 2, 1);
  const unsigned char expect[31] = {
      'N', 'L', 'D', 'B', '1', 1, 2, 1,
      1, 0, 0, 0, 0, 0, 0, 0,
      3, 0, 0, 0, 1, 0, 0, 0,
      1, 0, 2, 0, 3, 0, 4};
  if (bytes.size() != 31 ||
      std::memcmp(bytes.data(), expect, 31) != 0) {
    detail = "FAIL:golden 31-byte shard mismatch";
    return;
  }
  auto dir = temp_dir();
  fs::path f = dir / "fuzz.nldb";
  SplitMix64 rng(99);
  const int widths[3] = {1, 2, 4};
  const std::uint64_t id_caps[3] = {1ull << 8, 1ull << 16, 1ull << 32};
  for (int round = 0; round < 1000; ++round) {
    int sw = widths[rng.below(3)], tw = widths[rng.below(3)];
    std::uint64_t scap = id_caps[sw / 2], tcap = id_caps[tw / 2];
    std::vector<Record> recs(rng.below(20) + 1);
    for (auto& r : recs) {
      r.src.resize(rng.below(11));  // empty sides are legal
      r.tgt.resize(rng.below(11));
      for (auto& id : r.src)
        id = static_cast<std::uint32_t>(rng.below(scap));
      for (auto& id : r.tgt)
        id = static_cast<std::uint32_t>(rng.below(tcap));
    }
    atomic_write(f, encode_shard(recs, sw, tw));
    std::vector<Record> back;
    read_shard(f, [&](Record&& r) { back.push_back(std::move(r)); });
    if (back != recs) {
      detail = "FAIL:fuzz round " + std::to_string(round) +
               " read(write(X)) != X";
      return;
    }
  }
  detail = "golden + 1000 fuzzed shards";
}

void c5_compactness(std::string& detail) {
  // 25k records x (20 + 20) ids = 1M tokens at 2 bytes each
  auto dir = temp_dir();
  DbWriter w(dir, 50000, 50000, 1);
  SplitMix64 rng(3);
  for (int i = 0; i < 25000; ++i) {
    Record r;
    r.src.resize(20);
    r.tgt.resize(20);
    for (auto& id : r.src) id = static_cast<std::uint32_t>(rng.below(50000));
    for (auto& id : r.tgt) id = static_cast<std::uint32_t>(rng.below(50000));
    w.add(std::move(r));
  }
  DbMeta meta = w.finish(1);
  std::uint64_t total = 0;
  for (const auto& e : fs::directory_iterator(dir))
    total += fs::file_size(e.path());
  std::uint64_t overhead = kShardHeaderBytes + 25000ull * 8;  // header+lengths
  std::uint64_t payload = fs::file_size(dir / meta.shards[0].first) - overhead;
  if (payload > 2'000'000) {
    detail = "FAIL:id payload " + std::to_string(payload) + " > 2.0 MB";
    return;
  }
  if (total > std::uint64_t(2.2 * 1024 * 1024)) {
    detail = "FAIL:total " + std::to_string(total) + " > 2.2 MB";
    return;
  }
  detail = "payload " + std::to_string(payload) + " B, total " +
           std::to_string(total) + " B";
}

void c6_batching(std::string& detail) {
  SplitMix64 rng(11);
  std::vector<Record> recs(10000);
  for (auto& r : recs) {
    r.src.resize(1 + rng.below(60));
    r.tgt.resize(1 + rng.below(60));
    for (auto& id : r.src) id = static_cast<std::uint32_t>(rng.below(100));
    for (auto& id : r.tgt) id = static_cast<std::uint32_t>(rng.below(100));
  }
  auto rec_hash = [](const Record& r) {
    std::uint64_t h = 0x9e3779b97f4a7c15ull;
    auto mix = [&](std::uint64_t v) {
      h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    };
    mix(r.src.size());
    for (auto id : r.src) mix(id);
    mix(0xffffffffull);
    for (auto id : r.tgt) mix(id);
    return h;
  };
  std::vector<std::uint64_t> want;
  for (const auto& r : recs) want.push_back(rec_hash(r));
  std::sort(want.begin(), want.end());

  const std::uint64_t budget = 18000;
  double bucketed_range_sum = 0;
  std::size_t bucketed_batches = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    auto batches = batch_epoch(recs, BatchConfig{budget, seed, 2});
    std::vector<std::uint64_t> got;
    for (const auto& b : batches) {
      if (b.src_padded_tokens > budget || b.tgt_padded_tokens > budget) {
        detail = "FAIL:seed " + std::to_string(seed) + " batch over budget";
        return;
      }
      std::size_t lo = SIZE_MAX, hi = 0;
      for (const auto& r : b.records) {
        got.push_back(rec_hash(r));
        lo = std::min(lo, r.tgt.size());
        hi = std::max(hi, r.tgt.size());
      }
      bucketed_range_sum += double(hi - lo);
      ++bucketed_batches;
    }
    std::sort(got.begin(), got.end());
    if (got != want) {
      detail = "FAIL:seed " + std::to_string(seed) +
               " epoch is not a partition of the records";
      return;
    }
  }

  // uniform-random baseline: same greedy fill, no length bucketing
  double uniform_range_sum = 0;
  std::size_t uniform_batches = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    SplitMix64 r2(seed * 7919 + 1);
    std::vector<std::size_t> order(recs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    deterministic_shuffle(order, r2);
    std::size_t max_src = 0, max_tgt = 0, count = 0, lo = SIZE_MAX, hi = 0;
    auto flush = [&] {
      if (!count) return;
      uniform_range_sum += double(hi - lo);
      ++uniform_batches;
      max_src = max_tgt = count = hi = 0;
      lo = SIZE_MAX;
    };
    for (std::size_t idx : order) {
      const auto& r = recs[idx];
      std::size_t ns = std::max(max_src, r.src.size());
      std::size_t nt = std::max(max_tgt, r.tgt.size());
      if (count && (ns * (count + 1) > budget || nt * (count + 1) > budget))
        flush();
      max_src = std::max(max_src, r.src.size());
      max_tgt = std::max(max_tgt, r.tgt.size());
      lo = std::min(lo, r.tgt.size());
      hi = std::max(hi, r.tgt.size());
      ++count;
    }
    flush();
  }
  double bucketed = bucketed_range_sum / double(bucketed_batches);
  double uniform = uniform_range_sum / double(uniform_batches);
  if (!(bucketed < uniform)) {
    detail = "FAIL:mean within-batch range " + std::to_string(bucketed) +
             " not below uniform baseline " + std::to_string(uniform);
    return;
  }
  char buf[96];
  std::snprintf(buf, sizeof buf,
                "100 seeds; mean tgt-length range %.2f vs uniform %.2f",
                bucketed, uniform);
  detail = buf;
}

void c7_clean_oracle(std::string& detail) {
  NormalizeTable norm = NormalizeTable::load_default();
  CleanConfig cfg;  // defaults

  std::vector<std::pair<std::string, std::string>> heldout;
  for (int i = 0; i < 25; ++i)
    heldout.emplace_back("geheim quelle " + std::to_string(i),
                         "secret source " + std::to_string(i));

  // plants with known counts
  const std::size_t n_dup = 50, n_url = 30, n_ratio = 30, n_nonascii = 20,
                    n_overlap = 25, n_empty = 10, n_len = 15;
  std::vector<std::pair<std::string, std::string>> pairs;
  std::size_t n_base =
      10000 - (n_dup + n_url + n_ratio + n_nonascii + n_overlap + n_empty +
               n_len);
  for (std::size_t i = 0; i < n_base; ++i)
    pairs.emplace_back("quelle satz nummer " + std::to_string(i),
                       "source sentence number " + std::to_string(i));
  for (std::size_t i = 0; i < n_dup; ++i) pairs.push_back(pairs[i]);
  for (std::size_t i = 0; i < n_url; ++i)
    pairs.emplace_back("siehe http://beispiel.de/" + std::to_string(i),
                       "see the linked page " + std::to_string(i));
  for (std::size_t i = 0; i < n_ratio; ++i)
    pairs.emplace_back(
        "ein zwei drei vier fuenf sechs sieben acht neun zehn elf zwoelf",
        "w" + std::to_string(i));
  for (std::size_t i = 0; i < n_nonascii; ++i)
    pairs.emplace_back("quelle " + std::to_string(i),
                       "好 好 好 " + std::to_string(i));
  for (std::size_t i = 0; i < n_overlap; ++i) pairs.push_back(heldout[i]);
  for (std::size_t i = 0; i < n_empty; ++i)
    pairs.emplace_back("   ", "kept side " + std::to_string(i));
  for (std::size_t i = 0; i < n_len; ++i) {
    std::string longside;
    for (int k = 0; k < 600; ++k) longside += "wort ";
    pairs.emplace_back(longside + std::to_string(i),
                       "short " + std::to_string(i));
  }
  // deterministic interleave so plants are not grouped at the end
  SplitMix64 rng(55);
  deterministic_shuffle(pairs, rng);

  std::vector<SegmentPair> seg, held_seg;
  for (const auto& [s, t] : pairs) seg.push_back({s, t, "plant", 0});
  for (const auto& [s, t] : heldout) held_seg.push_back({s, t, "held", 0});
  auto [kept, stats] = clean(seg, cfg, held_seg, norm, 1);
  oracle::CleanCounts want = oracle::clean_filter(pairs, cfg, norm, heldout);

  auto eq = [&](const char* name, std::size_t got, std::size_t exp) {
    if (got != exp)
      detail = "FAIL:" + std::string(name) + " = " + std::to_string(got) +
               ", oracle/plant says " + std::to_string(exp);
    return got == exp;
  };
  if (!eq("n_input", stats.n_input, pairs.size())) return;
  if (!eq("n_empty", stats.n_empty, want.empty)) return;
  if (!eq("n_len", stats.n_len, want.len)) return;
  if (!eq("n_ratio", stats.n_ratio, want.ratio)) return;
  if (!eq("n_nonascii", stats.n_nonascii, want.nonascii)) return;
  if (!eq("n_url", stats.n_url, want.url)) return;
  if (!eq("n_overlap", stats.n_overlap, want.overlap)) return;
  if (!eq("n_dup", stats.n_dup, want.dup)) return;
  if (!eq("n_kept", stats.n_kept, want.kept)) return;
  // the plants land in the intended buckets
  if (!eq("planted dup", stats.n_dup, n_dup)) return;
  if (!eq("planted url", stats.n_url, n_url)) return;
  if (!eq("planted ratio", stats.n_ratio, n_ratio)) return;
  if (!eq("planted nonascii", stats.n_nonascii, n_nonascii)) return;
  if (!eq("planted overlap", stats.n_overlap, n_overlap)) return;
  if (!eq("planted empty", stats.n_empty, n_empty)) return;
  if (!eq("planted len", stats.n_len, n_len)) return;

  // idempotence: cleaning the survivors drops nothing
  auto [kept2, stats2] = clean(kept, cfg, held_seg, norm, 1);
  if (stats2.n_kept != kept.size() || stats2.dropped() != 0) {
    detail = "FAIL:clean is not idempotent (" +
             std::to_string(stats2.dropped()) + " drops on second pass)";
    return;
  }
  detail = "10000 pairs, all counters match the oracle";
}

void c8_reproducibility(std::string& detail) {
  auto dir = temp_dir();
  std::string a, b;
  for (int i = 0; i < 30; ++i) {
    a += "quelle zeile " + std::to_string(i) + "\tsource line " +
         std::to_string(i) + "\n";
    b += "andere zeile " + std::to_string(i) + "\tother line " +
         std::to_string(i) + "\n";
  }
  write_file(dir / "a.tsv", a);
  write_file(dir / "b.tsv", b);
  write_file(dir / "held.tsv", "pruefung\texam\n");
  write_file(dir / "index.tsv",
             "set_a\tdeu\teng\tfile://" + (dir / "a.tsv").string() +
                 "\ttsv\teuroparl\n"
                 "set_b\tdeu\teng\tfile://" + (dir / "b.tsv").string() +
                 "\ttsv\topus\n"
                 "held_x\tdeu\teng\tfile://" + (dir / "held.tsv").string() +
                 "\ttsv\topus\n");
  Index idx = Index::load(dir / "index.tsv", reg());
  FileTransport transport;
  Cache cache(temp_dir());
  Bibliography bib = Bibliography::load_default();
  LangPair pair = reg().parse_pair("deu-eng");
  std::vector<DatasetEntry> train = {idx.by_id("set_a"), idx.by_id("set_b")};
  std::vector<DatasetEntry> tests = {idx.by_id("held_x")};

  Merger m1(reg(), bib, cache, transport);
  Merger m2(reg(), bib, cache, transport);
  fs::path out1 = temp_dir(), out2 = temp_dir();
  Signature s1 = m1.get_and_merge(train, tests, pair, out1);
  Signature s2 = m2.get_and_merge(train, tests, pair, out2);
  if (s1.file_digests != s2.file_digests ||
      s1.to_json().dump() != s2.to_json().dump()) {
    detail = "FAIL:reruns produced different signatures";
    return;
  }
  if (!s1.verify(out1).empty()) {
    detail = "FAIL:fresh merge fails its own signature";
    return;
  }
  // flip one byte of an output; verification must name the file
  {
    std::fstream f(out1 / "train.src",
                   std::ios::in | std::ios::out | std::ios::binary);
    char c;
    f.read(&c, 1);
    f.seekp(0);
    c = (c == 'x') ? 'y' : 'x';
    f.write(&c, 1);
  }
  auto bad = s1.verify(out1);
  if (bad != std::vector<std::string>{"train.src"}) {
    detail = "FAIL:1-byte tamper not pinned to train.src";
    return;
  }

  // full pipeline rerun: 100% cache hit, identical manifest digest
  PipelineConfig cfg;
  cfg.pair = "deu-eng";
  cfg.train_ids = {"set_a", "set_b"};
  cfg.test_ids = {"held_x"};
  cfg.vocab_scheme = Scheme::Char;
  cfg.db_shards = 2;
  fs::path pout = temp_dir();
  PipelineResult r1 =
      Pipeline(cfg, pout, reg(), idx, transport, cache, 1).run();
  PipelineResult r2 =
      Pipeline(cfg, pout, reg(), idx, transport, cache, 1).run();
  if (!r2.stages_run.empty() || r2.stages_cached.size() != 4) {
    detail = "FAIL:pipeline rerun was not a full cache hit";
    return;
  }
  if (r2.manifest_digest != r1.manifest_digest) {
    detail = "FAIL:pipeline rerun changed the manifest digest";
    return;
  }
}

void c9_sanity_checks(std::string& detail) {
  auto dir = temp_dir();
  Cache cache(temp_dir());
  FileTransport transport;
  Bibliography bib = Bibliography::load_default();
  LangPair pair = reg().parse_pair("deu-eng");

  // count mismatch aborts, naming the dataset
  write_file(dir / "stem.deu", "eins\nzwei\ndrei\n");
  write_file(dir / "stem.eng", "one\ntwo\n");
  write_file(dir / "index.tsv",
             "bad_counts\tdeu\teng\tfile://" + (dir / "stem").string() +
                 "\tmoses\teuroparl\n"
                 "holey\tdeu\teng\tfile://" + (dir / "holey.tsv").string() +
                 "\ttsv\topus\n");
  write_file(dir / "holey.tsv", "eins\tone\n\t\nzwei\ttwo\n \tblank\n");
  Index idx = Index::load(dir / "index.tsv", reg());
  bool threw = false;
  try {
    Merger m(reg(), bib, cache, transport);
    m.get_and_merge({idx.by_id("bad_counts")}, {}, pair, temp_dir());
  } catch (const SanityCheckFailed& e) {
    threw = e.id == "bad_counts";
  }
  if (!threw) {
    detail = "FAIL:count mismatch did not raise with the offending id";
    return;
  }

  // empty segments drop with an exact count (2 of 4 rows above)
  Merger m(reg(), bib, cache, transport);
  m.get_and_merge({idx.by_id("holey")}, {}, pair, temp_dir());
  const CheckReport& rep = m.reports().at("train");
  if (rep.n_read != 4 || rep.n_empty_removed != 2) {
    detail = "FAIL:empty-segment count is " +
             std::to_string(rep.n_empty_removed) + " of " +
             std::to_string(rep.n_read) + ", want 2 of 4";
    return;
  }
}

void c10_langid(std::string& detail) {
  for (const auto& row : reg().rows()) {
    if (reg().normalize(row.code3).code != row.code3 ||
        reg().normalize(row.name).code != row.code3 ||
        (!row.code1.empty() &&
         reg().normalize(row.code1).code != row.code3)) {
      detail = "FAIL:three-key property broken for " + row.code3;
      return;
    }
  }
  if (reg().normalize("eng").name != "English") {
    detail = "FAIL:eng does not display as English";
    return;
  }
  std::string stripped;
  LangCode en_us = reg().normalize("en-US", &stripped);
  if (en_us.code != "eng" || stripped != "US") {
    detail = "FAIL:en-US did not normalize to eng";
    return;
  }
  detail = std::to_string(reg().rows().size()) + " registry rows";
}

void c11_throughput(std::string& detail) {
  auto t0 = std::chrono::steady_clock::now();
  // a synthetic corpus of 10M tokens, encoded and written in a stream
  SplitMix64 rng(21);
  std::vector<std::string> word_list;
  for (int i = 0; i < 2000; ++i) word_list.push_back(rand_word(rng, 20, 8));
  std::vector<std::string> sample(word_list.begin(), word_list.begin() + 2000);
  Vocab v = train_word(lines_of(sample), 4000, 1);

  auto dir = temp_dir();
  DbWriter w(dir, v.size(), v.size(), 8);
  std::uint64_t tokens = 0;
  std::string line;
  while (tokens < 10'000'000) {
    line.clear();
    std::size_t n = 10 + rng.below(30);
    for (std::size_t i = 0; i < n; ++i) {
      if (i) line += " ";
      line += word_list[rng.below(word_list.size())];
    }
    EncodedSeq ids = v.encode(line);
    tokens += ids.size() * 2;  // same ids on both sides
    w.add({ids, ids});
  }
  w.finish(1);
  double dt = seconds_since(t0);
  if (dt >= 300.0) {
    detail = "FAIL:took " + std::to_string(dt) + "s (budget 300s)";
    return;
  }
  // peak memory per /proc self-report, when available
  std::uint64_t peak_kb = 0;
  std::ifstream status("/proc/self/status");
  std::string l;
  while (std::getline(status, l))
    if (l.rfind("VmPeak:", 0) == 0) peak_kb = std::stoull(l.substr(7));
  if (peak_kb > 2ull * 1024 * 1024) {
    detail = "FAIL:peak memory " + std::to_string(peak_kb) + " kB > 2 GB";
    return;
  }
  char buf[96];
  std::snprintf(buf, sizeof buf, "%llu tokens in %.1fs, peak %.2f GB",
                static_cast<unsigned long long>(tokens), dt,
                double(peak_kb) / (1024.0 * 1024.0));
  detail = buf;
}

}  // namespace

int main() {
  run(1, "BPE training matches the brute-force oracle", c1_bpe_oracle);
  run(2, "encode/decode round trip, every scheme", c2_round_trip);
  run(3, "id width thresholds", c3_widths);
  run(4, "shard format golden bytes and fuzzed round trips", c4_shard_golden);
  run(5, "storage compactness at 1M tokens", c5_compactness);
  run(6, "bucketed batching: partition, budget, tighter lengths",
      c6_batching);
  run(7, "cleaning counters match the independent filter", c7_clean_oracle);
  run(8, "reproducible merges, tamper detection, cached reruns",
      c8_reproducibility);
  run(9, "sanity checker: count mismatch and empty segments",
      c9_sanity_checks);
  run(10, "language registry three-key normalization", c10_langid);
  run(11, "desk-scale throughput for encode + db write", c11_throughput);
  if (failures) {
    std::printf("%d criterion(s) failed\n", failures);
    return 1;
  }
  std::printf("all 11 criteria passed\n");
  return 0;
}
