#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "forge/catalog.hpp"
#include "forge/common.hpp"
#include "forge/langid.hpp"
#include "forge/store.hpp"
#include "forge/textprep.hpp"
#include "forge/vocab.hpp"

namespace forge {

/// One flat document holding every stage's knobs. Round-trips losslessly
/// through its file form; each run writes the resolved (default-filled)
/// config next to its outputs.
struct PipelineConfig {
  std::string pair = "deu-eng";
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
  std::string index_file;  // empty = bundled index
  CleanConfig clean;
  Scheme vocab_scheme = Scheme::BPE;
  std::uint32_t src_size = 8000;
  std::uint32_t tgt_size = 8000;
  bool vocab_dedup = true;  // learn merges from deduplicated sentences
  int db_shards = 8;
  std::uint64_t max_toks = 18000;
  std::uint64_t seed = 1;

  static PipelineConfig parse_text(const std::string& text) {
    PipelineConfig cfg;
    for (const auto& raw : split(text, '\n')) {
      std::string line = trim(raw);
      if (line.empty() || line[0] == '#') continue;
      auto colon = line.find(':');
      if (colon == std::string::npos)
        throw ConfigError("bad config line: " + line);
      std::string key = trim(line.substr(0, colon));
      std::string val = trim(line.substr(colon + 1));
      if (key == "pair") cfg.pair = val;
      else if (key == "train") cfg.train_ids = split_ws(val);
      else if (key == "tests") cfg.test_ids = split_ws(val);
      else if (key == "index") cfg.index_file = val;
      else if (key == "clean.max_ratio") cfg.clean.max_ratio = std::stod(val);
      else if (key == "clean.max_len") cfg.clean.max_len = std::stoul(val);
      else if (key == "clean.nonascii_max_frac")
        cfg.clean.nonascii_max_frac = std::stod(val);
      else if (key == "vocab.scheme") cfg.vocab_scheme = scheme_parse(val);
      else if (key == "vocab.src_size") cfg.src_size = std::stoul(val);
      else if (key == "vocab.tgt_size") cfg.tgt_size = std::stoul(val);
      else if (key == "vocab.dedup") cfg.vocab_dedup = (val == "true");
      else if (key == "db.shards") cfg.db_shards = std::stoi(val);
      else if (key == "batch.max_toks") cfg.max_toks = std::stoull(val);
      else if (key == "seed") cfg.seed = std::stoull(val);
      else throw ConfigError("unknown config key: " + key);
    }
    if (cfg.train_ids.empty())
      throw ConfigError("config selects no training datasets (train:)");
    return cfg;
  }

  static PipelineConfig load(const fs::path& file) {
    return parse_text(read_file(file));
  }

  std::string serialize() const {
    std::string out;
    auto kv = [&](const std::string& k, const std::string& v) {
      out += k + ": " + v + "\n";
    };
    kv("pair", pair);
    std::string tr, ts;
    for (const auto& id : train_ids) tr += (tr.empty() ? "" : " ") + id;
    for (const auto& id : test_ids) ts += (ts.empty() ? "" : " ") + id;
    kv("train", tr);
    kv("tests", ts);
    if (!index_file.empty()) kv("index", index_file);
    kv("clean.max_ratio", std::to_string(clean.max_ratio));
    kv("clean.max_len", std::to_string(clean.max_len));
    kv("clean.nonascii_max_frac", std::to_string(clean.nonascii_max_frac));
    kv("vocab.scheme", scheme_name(vocab_scheme));
    kv("vocab.src_size", std::to_string(src_size));
    kv("vocab.tgt_size", std::to_string(tgt_size));
    kv("vocab.dedup", vocab_dedup ? "true" : "false");
    kv("db.shards", std::to_string(db_shards));
    kv("batch.max_toks", std::to_string(max_toks));
    kv("seed", std::to_string(seed));
    return out;
  }
};

struct PipelineResult {
  std::string manifest_digest;
  std::vector<std::string> stages_run;      // stages that did work this run
  std::vector<std::string> stages_cached;   // stages satisfied from cache
};

/// Runs get -> clean -> vocab -> db, each stage keyed by a fingerprint of
/// its config slice and input digests so unchanged stages are skipped.
class Pipeline {
 public:
  Pipeline(PipelineConfig cfg, fs::path out_dir, const Registry& reg,
           const Index& index, Transport& transport, Cache& cache,
           int workers = env_workers())
      : cfg_(std::move(cfg)),
        out_(std::move(out_dir)),
        reg_(reg),
        index_(index),
        transport_(transport),
        cache_(cache),
        workers_(workers),
        norm_(NormalizeTable::load_default()) {}

  PipelineResult run() {
    fs::create_directories(out_ / ".stages");
    atomic_write(out_ / "forge.conf", cfg_.serialize());
    LangPair pair = reg_.parse_pair(cfg_.pair);

    run_stage("get", fingerprint_get(), {"get/train.src", "get/train.tgt"},
              [&] { stage_get(pair); });
    run_stage("clean", fingerprint_after("get", "clean"),
              {"clean/train.src", "clean/train.tgt", "clean/clean.stats.json"},
              [&] { stage_clean(); });
    run_stage("vocab", fingerprint_after("clean", "vocab"),
              {"vocab/src.model.tsv", "vocab/tgt.model.tsv"},
              [&] { stage_vocab(); });
    run_stage("db", fingerprint_after("vocab", "db"), {"db/meta.json"},
              [&] { stage_db(); });

    result_.manifest_digest = write_manifest();
    return result_;
  }

 private:
  void run_stage(const std::string& name, const std::string& fingerprint,
                 const std::vector<std::string>& outputs,
                 const std::function<void()>& body) {
    fs::path fp_file = out_ / ".stages" / (name + ".fp");
    bool hit = fs::exists(fp_file) && trim(read_file(fp_file)) == fingerprint;
    if (hit)
      for (const auto& o : outputs)
        if (!fs::exists(out_ / o)) hit = false;
    if (hit) {
      result_.stages_cached.push_back(name);
      return;
    }
    try {
      body();
    } catch (const ForgeError&) {
      throw;
    } catch (const std::exception& e) {
      throw DataError("stage '" + name + "' failed: " + e.what());
    }
    atomic_write(fp_file, fingerprint + "\n");
    result_.stages_run.push_back(name);
  }

  std::string fingerprint_get() const {
    Sha256 h;
    h.update(cfg_.pair);
    for (const auto& id : cfg_.train_ids) {
      h.update(id);
      h.update(index_.by_id(id).url);
    }
    for (const auto& id : cfg_.test_ids) {
      h.update(id);
      h.update(index_.by_id(id).url);
    }
    return h.finish_hex();
  }

  /// Fingerprint of a stage = its config slice + the previous stage's
  /// fingerprint (which transitively covers all upstream inputs).
  std::string fingerprint_after(const std::string& prev,
                                const std::string& stage) const {
    Sha256 h;
    std::string prev_fp = trim(read_file(out_ / ".stages" / (prev + ".fp")));
    h.update(prev_fp);
    if (stage == "clean") {
      h.update(std::to_string(cfg_.clean.max_ratio));
      h.update(std::to_string(cfg_.clean.max_len));
      h.update(std::to_string(cfg_.clean.nonascii_max_frac));
    } else if (stage == "vocab") {
      h.update(scheme_name(cfg_.vocab_scheme));
      h.update(std::to_string(cfg_.src_size));
      h.update(std::to_string(cfg_.tgt_size));
      h.update(cfg_.vocab_dedup ? "dedup" : "nodedup");
    } else if (stage == "db") {
      h.update(std::to_string(cfg_.db_shards));
    }
    return h.finish_hex();
  }

  void stage_get(const LangPair& pair) {
    std::vector<DatasetEntry> train, tests;
    for (const auto& id : cfg_.train_ids) train.push_back(index_.by_id(id));
    for (const auto& id : cfg_.test_ids) tests.push_back(index_.by_id(id));
    Bibliography bib = Bibliography::load_default();
    Merger merger(reg_, bib, cache_, transport_);
    merger.get_and_merge(train, tests, pair, out_ / "get");
  }

  void stage_clean() {
    std::vector<SegmentPair> heldout;
    for (const auto& id : cfg_.test_ids) {
      std::ifstream s(out_ / "get" / ("test." + id + ".src"));
      std::ifstream t(out_ / "get" / ("test." + id + ".tgt"));
      std::string ls, lt;
      while (std::getline(s, ls) && std::getline(t, lt))
        heldout.push_back({ls, lt, id, 0});
    }
    Cleaner cleaner(cfg_.clean, norm_, HeldoutSets::build(heldout, norm_),
                    workers_);
    fs::create_directories(out_ / "clean");
    fs::path src_tmp = out_ / "clean" / "train.src.tmp";
    fs::path tgt_tmp = out_ / "clean" / "train.tgt.tmp";
    {
      std::ofstream src_out(src_tmp, std::ios::trunc);
      std::ofstream tgt_out(tgt_tmp, std::ios::trunc);
      std::ifstream s(out_ / "get" / "train.src");
      std::ifstream t(out_ / "get" / "train.tgt");
      std::string ls, lt;
      std::vector<SegmentPair> block;
      auto flush = [&] {
        cleaner.run_block(block, [&](const SegmentPair& p) {
          src_out << p.src << '\n';
          tgt_out << p.tgt << '\n';
        });
        block.clear();
      };
      std::size_t line_no = 0;
      while (std::getline(s, ls) && std::getline(t, lt)) {
        block.push_back({ls, lt, "train", ++line_no});
        if (block.size() >= 65536) flush();
      }
      flush();
    }
    fs::rename(src_tmp, out_ / "clean" / "train.src");
    fs::rename(tgt_tmp, out_ / "clean" / "train.tgt");
    const auto& st = cleaner.stats();
    nlohmann::ordered_json j;
    j["n_input"] = st.n_input;
    j["n_empty"] = st.n_empty;
    j["n_len"] = st.n_len;
    j["n_ratio"] = st.n_ratio;
    j["n_nonascii"] = st.n_nonascii;
    j["n_url"] = st.n_url;
    j["n_overlap"] = st.n_overlap;
    j["n_dup"] = st.n_dup;
    j["n_kept"] = st.n_kept;
    atomic_write(out_ / "clean" / "clean.stats.json", j.dump(2) + "\n");
  }

  void stage_vocab() {
    fs::create_directories(out_ / "vocab");
    // source and target vocabularies are separate objects
    for (const char* side : {"src", "tgt"}) {
      bool is_src = std::string(side) == "src";
      fs::path corpus = out_ / "clean" / (std::string("train.") + side);
      LineSource lines = lines_of_file(corpus);
      if (cfg_.vocab_scheme == Scheme::BPE && cfg_.vocab_dedup)
        lines = dedup_lines(lines);
      Vocab v = train(cfg_.vocab_scheme, lines,
                      is_src ? cfg_.src_size : cfg_.tgt_size, workers_);
      v.save(out_ / "vocab" / (std::string(side) + ".model.tsv"));
    }
  }

  void stage_db() {
    Vocab src_v = Vocab::load(out_ / "vocab" / "src.model.tsv");
    Vocab tgt_v = Vocab::load(out_ / "vocab" / "tgt.model.tsv");
    DbWriter writer(out_ / "db", src_v.size(), tgt_v.size(), cfg_.db_shards);
    std::ifstream s(out_ / "clean" / "train.src");
    std::ifstream t(out_ / "clean" / "train.tgt");
    std::string ls, lt;
    while (std::getline(s, ls) && std::getline(t, lt))
      writer.add({src_v.encode(ls), tgt_v.encode(lt)});
    writer.finish(workers_);
  }

  std::string write_manifest() {
    std::vector<std::string> artifacts = {
        "get/train.src",          "get/train.tgt",
        "get/signature.json",     "get/citations.bib",
        "clean/train.src",        "clean/train.tgt",
        "clean/clean.stats.json", "vocab/src.model.tsv",
        "vocab/tgt.model.tsv",    "db/meta.json"};
    for (const auto& id : cfg_.test_ids) {
      artifacts.push_back("get/test." + id + ".src");
      artifacts.push_back("get/test." + id + ".tgt");
    }
    DbMeta meta = DbMeta::load(out_ / "db");
    for (const auto& [name, count] : meta.shards)
      artifacts.push_back("db/" + name);
    std::sort(artifacts.begin(), artifacts.end());
    nlohmann::ordered_json j;
    Sha256 h;
    for (const auto& a : artifacts) {
      std::string d = sha256_hex_file(out_ / a);
      j["files"][a] = d;
      h.update(a);
      h.update(d);
    }
    std::string digest = h.finish_hex();
    j["manifest_digest"] = digest;
    atomic_write(out_ / "manifest.json", j.dump(2) + "\n");
    return digest;
  }

  PipelineConfig cfg_;
  fs::path out_;
  const Registry& reg_;
  const Index& index_;
  Transport& transport_;
  Cache& cache_;
  int workers_;
  NormalizeTable norm_;
  PipelineResult result_;
};

}  // namespace forge
