// forge: corpus codec and storage toolkit for MT data engineering.
// Subcommands: iso, list, get, clean, vocab, db, pipeline, stats.

#include <iostream>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <CLI11.hpp>
#include <httplib.h>

#include "forge/catalog.hpp"
#include "forge/common.hpp"
#include "forge/langid.hpp"
#include "forge/parsers.hpp"
#include "forge/pipeline.hpp"
#include "forge/store.hpp"
#include "forge/textprep.hpp"
#include "forge/vocab.hpp"

namespace {

using namespace forge;

/// Dispatches on URL scheme: file:// and bare paths copy locally,
/// http(s):// goes over the wire.
class DefaultTransport : public Transport {
 public:
  void fetch(const std::string& url, const fs::path& dest) override {
    if (starts_with(url, "http://") || starts_with(url, "https://")) {
      fetch_http(url, dest);
      return;
    }
    file_.fetch(url, dest);
  }

 private:
  static void fetch_http(const std::string& url, const fs::path& dest) {
    bool tls = starts_with(url, "https://");
    std::string rest = url.substr(tls ? 8 : 7);
    auto slash = rest.find('/');
    std::string host = slash == std::string::npos ? rest : rest.substr(0, slash);
    std::string path = slash == std::string::npos ? "/" : rest.substr(slash);
    httplib::Client cli((tls ? "https://" : "http://") + host);
    cli.set_follow_location(true);
    cli.set_read_timeout(120, 0);
    std::ofstream out(dest, std::ios::binary | std::ios::trunc);
    auto res = cli.Get(path, [&](const char* data, size_t n) {
      out.write(data, static_cast<std::streamsize>(n));
      return true;
    });
    if (!res || res->status != 200)
      throw DownloadFailed(url, res ? "HTTP " + std::to_string(res->status)
                                    : httplib::to_string(res.error()));
  }

  FileTransport file_;
};

Index load_index(const std::string& index_file, const Registry& reg) {
  return index_file.empty() ? Index::load_default(reg)
                            : Index::load(index_file, reg);
}

int cmd_iso(const std::string& token) {
  Registry reg = Registry::load_default();
  std::string stripped;
  LangCode lc = reg.normalize(token, &stripped);
  if (!stripped.empty())
    std::cerr << "warning: dropped region/script subtag '" << stripped
              << "' from '" << token << "'\n";
  std::cout << lc.code << '\t' << lc.name << '\n';
  return 0;
}

int cmd_list(const std::string& pair_str, const std::string& name_sub,
             const std::string& index_file) {
  Registry reg = Registry::load_default();
  Index index = load_index(index_file, reg);
  for (const auto& e : index.list(reg.parse_pair(pair_str), name_sub))
    std::cout << e.id << '\t' << e.pair.str() << '\t' << e.format.str()
              << '\t' << e.url << '\n';
  return 0;
}

int cmd_get(const std::string& pair_str, const std::vector<std::string>& tr,
            const std::vector<std::string>& ts, const std::string& out_dir,
            const std::string& index_file) {
  Registry reg = Registry::load_default();
  Index index = load_index(index_file, reg);
  std::vector<DatasetEntry> train, tests;
  for (const auto& id : tr) train.push_back(index.by_id(id));
  for (const auto& id : ts) tests.push_back(index.by_id(id));
  Bibliography bib = Bibliography::load_default();
  Cache cache(Cache::default_dir());
  DefaultTransport transport;
  Merger merger(reg, bib, cache, transport);
  Signature sig =
      merger.get_and_merge(train, tests, reg.parse_pair(pair_str), out_dir);
  std::cout << "merged " << sig.line_counts.at("train")
            << " training pairs into " << out_dir << "\n";
  return 0;
}

int cmd_clean(const std::string& src_file, const std::string& tgt_file,
              const std::string& heldout_dir, const std::string& out_dir,
              const CleanConfig& cfg) {
  NormalizeTable norm = NormalizeTable::load_default();
  std::vector<SegmentPair> heldout;
  if (!heldout_dir.empty()) {
    std::map<std::string, fs::path> stems;  // stem -> src path, tgt found later
    for (const auto& ent : fs::directory_iterator(heldout_dir)) {
      auto p = ent.path();
      if (p.extension() == ".src") {
        fs::path tgt = p;
        tgt.replace_extension(".tgt");
        if (!fs::exists(tgt)) continue;
        std::ifstream s(p), t(tgt);
        std::string ls, lt;
        while (std::getline(s, ls) && std::getline(t, lt))
          heldout.push_back({ls, lt, p.stem().string(), 0});
      }
    }
  }
  Cleaner cleaner(cfg, norm, HeldoutSets::build(heldout, norm));
  fs::create_directories(out_dir);
  fs::path out(out_dir);
  std::ofstream src_out(out / "train.src"), tgt_out(out / "train.tgt");
  std::ifstream s(src_file), t(tgt_file);
  if (!s) throw DataError("cannot open " + src_file);
  if (!t) throw DataError("cannot open " + tgt_file);
  std::string ls, lt;
  std::vector<SegmentPair> block;
  std::size_t line_no = 0;
  auto flush = [&] {
    cleaner.run_block(block, [&](const SegmentPair& p) {
      src_out << p.src << '\n';
      tgt_out << p.tgt << '\n';
    });
    block.clear();
  };
  while (std::getline(s, ls) && std::getline(t, lt)) {
    block.push_back({ls, lt, "cli", ++line_no});
    if (block.size() >= 65536) flush();
  }
  flush();
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
  atomic_write(out / "clean.stats.json", j.dump(2) + "\n");
  std::cout << j.dump(2) << '\n';
  return 0;
}

bool g_error_json = false;

int run(int argc, char** argv) {
  CLI::App app{"forge: corpus codec and storage toolkit for MT data"};
  app.require_subcommand(1);
  app.add_flag("--error-json", g_error_json,
               "report failures as one JSON object on stderr");

  // iso
  std::string iso_token;
  auto* iso = app.add_subcommand("iso", "normalize a language name/code");
  iso->add_option("token", iso_token)->required();

  // list
  std::string pair_str = "deu-eng", name_sub, index_file;
  auto* list = app.add_subcommand("list", "list datasets for a pair");
  list->add_option("-l,--langs", pair_str)->required();
  list->add_option("-n,--name", name_sub);
  list->add_option("--index", index_file);

  // get
  std::vector<std::string> tr_ids, ts_ids;
  std::string out_dir = "data-out";
  bool merge_flag = true;
  auto* get = app.add_subcommand("get", "fetch and merge datasets");
  get->add_option("-l,--langs", pair_str)->required();
  get->add_flag("--merge", merge_flag, "merge training sets (always on)");
  get->add_option("-t,--train", tr_ids)->required();
  get->add_option("-s,--tests", ts_ids);
  get->add_option("-o,--out", out_dir)->required();
  get->add_option("--index", index_file);

  // clean
  std::string src_file, tgt_file, heldout_dir;
  CleanConfig clean_cfg;
  auto* cl = app.add_subcommand("clean", "clean a parallel corpus");
  cl->add_option("--src", src_file)->required();
  cl->add_option("--tgt", tgt_file)->required();
  cl->add_option("--heldout-dir", heldout_dir);
  cl->add_option("--out-dir", out_dir)->required();
  cl->add_option("--max-ratio", clean_cfg.max_ratio);
  cl->add_option("--max-len", clean_cfg.max_len);
  cl->add_option("--nonascii-max-frac", clean_cfg.nonascii_max_frac);

  // vocab
  auto* vo = app.add_subcommand("vocab", "train/apply vocabularies");
  std::string scheme_str = "bpe", model_file, corpus_file;
  std::uint32_t vocab_size = 8000;
  bool no_dedup = false;
  auto* vt = vo->add_subcommand("train", "train a vocabulary");
  vt->add_option("--scheme", scheme_str);
  vt->add_option("--size", vocab_size);
  vt->add_option("--in", corpus_file)->required();
  vt->add_option("--out", model_file)->required();
  vt->add_flag("--no-dedup", no_dedup,
               "learn BPE merges from raw (not deduplicated) lines");
  auto* ve = vo->add_subcommand("encode", "encode stdin lines to id rows");
  ve->add_option("--model", model_file)->required();
  auto* vd = vo->add_subcommand("decode", "decode id rows from stdin");
  vd->add_option("--model", model_file)->required();

  // db
  auto* db = app.add_subcommand("db", "sharded sequence database");
  std::string src_model, tgt_model, in_spec, db_dir;
  int n_shards = 8;
  std::uint64_t max_toks = 18000, seed = 1;
  auto* dw = db->add_subcommand("write", "encode a corpus into a db");
  dw->add_option("--src-model", src_model)->required();
  dw->add_option("--tgt-model", tgt_model)->required();
  dw->add_option("--in", in_spec, "train.src,train.tgt")->required();
  dw->add_option("--shards", n_shards);
  dw->add_option("--out", db_dir)->required();
  auto* ds = db->add_subcommand("stats", "summarize a db");
  ds->add_option("db", db_dir)->required();
  auto* dsm = db->add_subcommand("sample", "print one epoch of batch shapes");
  dsm->add_option("--max-toks", max_toks);
  dsm->add_option("--seed", seed);
  dsm->add_option("db", db_dir)->required();

  // stats (alias for db stats)
  auto* st = app.add_subcommand("stats", "summarize a db");
  st->add_option("db", db_dir)->required();

  // pipeline
  std::string conf_file;
  auto* pl = app.add_subcommand("pipeline", "run the full pipeline");
  pl->add_option("-c,--config", conf_file)->required();
  pl->add_option("-o,--out", out_dir)->required();

  CLI11_PARSE(app, argc, argv);

  if (iso->parsed()) return cmd_iso(iso_token);
  if (list->parsed()) return cmd_list(pair_str, name_sub, index_file);
  if (get->parsed())
    return cmd_get(pair_str, tr_ids, ts_ids, out_dir, index_file);
  if (cl->parsed())
    return cmd_clean(src_file, tgt_file, heldout_dir, out_dir, clean_cfg);

  if (vo->parsed()) {
    if (vt->parsed()) {
      LineSource lines = lines_of_file(corpus_file);
      Scheme scheme = scheme_parse(scheme_str);
      if (scheme == Scheme::BPE && !no_dedup) lines = dedup_lines(lines);
      Vocab v = train(scheme, lines, vocab_size, env_workers());
      v.save(model_file);
      std::cout << "trained " << scheme_str << " vocab of " << v.size()
                << " types -> " << model_file << '\n';
      return 0;
    }
    Vocab v = Vocab::load(model_file);
    std::string line;
    if (ve->parsed()) {
      while (std::getline(std::cin, line)) {
        auto ids = v.encode(line);
        for (std::size_t i = 0; i < ids.size(); ++i)
          std::cout << (i ? " " : "") << ids[i];
        std::cout << '\n';
      }
    } else {
      while (std::getline(std::cin, line)) {
        EncodedSeq ids;
        for (const auto& tok : split_ws(line))
          ids.push_back(static_cast<std::uint32_t>(std::stoul(tok)));
        std::cout << v.decode(ids) << '\n';
      }
    }
    return 0;
  }

  if (db->parsed()) {
    if (dw->parsed()) {
      auto files = split(in_spec, ',');
      if (files.size() != 2)
        throw ConfigError("--in expects train.src,train.tgt");
      Vocab src_v = Vocab::load(src_model);
      Vocab tgt_v = Vocab::load(tgt_model);
      DbWriter writer(db_dir, src_v.size(), tgt_v.size(), n_shards);
      std::ifstream s(files[0]), t(files[1]);
      if (!s) throw DataError("cannot open " + files[0]);
      if (!t) throw DataError("cannot open " + files[1]);
      std::string ls, lt;
      while (std::getline(s, ls) && std::getline(t, lt))
        writer.add({src_v.encode(ls), tgt_v.encode(lt)});
      DbMeta meta = writer.finish();
      std::cout << "wrote " << meta.n_records << " records across "
                << meta.shards.size() << " shards -> " << db_dir << '\n';
      return 0;
    }
    if (ds->parsed()) {
      std::cout << db_stats(db_dir).to_json().dump(2) << '\n';
      return 0;
    }
    // sample
    auto batches = batch_epoch(fs::path(db_dir),
                               BatchConfig{max_toks, seed, 2});
    std::uint64_t n = 0;
    for (const auto& b : batches) {
      std::cout << "batch " << n++ << ": " << b.records.size()
                << " records, padded src=" << b.src_padded_tokens
                << " tgt=" << b.tgt_padded_tokens << '\n';
    }
    return 0;
  }

  if (st->parsed()) {
    std::cout << db_stats(db_dir).to_json().dump(2) << '\n';
    return 0;
  }

  if (pl->parsed()) {
    PipelineConfig cfg = PipelineConfig::load(conf_file);
    Registry reg = Registry::load_default();
    Index index = load_index(cfg.index_file, reg);
    Cache cache(Cache::default_dir());
    DefaultTransport transport;
    Pipeline pipeline(cfg, out_dir, reg, index, transport, cache);
    PipelineResult res = pipeline.run();
    for (const auto& s : res.stages_run)
      std::cout << "stage " << s << ": ran\n";
    for (const auto& s : res.stages_cached)
      std::cout << "stage " << s << ": cache hit\n";
    std::cout << "manifest digest: " << res.manifest_digest << '\n';
    return 0;
  }

  return 0;
}

}  // namespace

namespace {

int fail(const char* kind, const std::string& message, int code) {
  if (g_error_json) {
    nlohmann::ordered_json j;
    j["error"] = {{"kind", kind}, {"message", message}, {"exit_code", code}};
    std::cerr << j.dump() << '\n';
  } else {
    std::cerr << kind << " error: " << message << '\n';
  }
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const forge::ConfigError& e) {
    return fail("config", e.what(), 2);
  } catch (const forge::NetworkError& e) {
    return fail("network", e.what(), 4);
  } catch (const forge::DataError& e) {
    return fail("data", e.what(), 3);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 1);
  }
}
