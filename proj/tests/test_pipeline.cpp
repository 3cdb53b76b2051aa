#include <catch2/catch_amalgamated.hpp>

#include <unistd.h>

#include "forge/pipeline.hpp"

using namespace forge;

namespace {

const Registry& reg() {
  static Registry r = Registry::load_default();
  return r;
}

fs::path temp_dir() {
  static int n = 0;
  fs::path d = fs::temp_directory_path() /
               ("forge-pipeline-" + std::to_string(::getpid()) + "-" +
                std::to_string(n++));
  fs::create_directories(d);
  return d;
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  out << content;
}

class CountingTransport : public Transport {
 public:
  int calls = 0;
  void fetch(const std::string& url, const fs::path& dest) override {
    ++calls;
    FileTransport{}.fetch(url, dest);
  }
};

/// Two training sets plus one held-out set, served from local files.
struct Fixture {
  fs::path dir = temp_dir();
  Index index;

  Fixture() {
    std::string a, b;
    // enough repetition that BPE finds merges with freq >= 2
    for (int i = 0; i < 40; ++i) {
      a += "die katze sitzt hier " + std::to_string(i) +
           "\tthe cat sits here " + std::to_string(i) + "\n";
      b += "der hund rennt schnell " + std::to_string(i) +
           "\tthe dog runs fast " + std::to_string(i) + "\n";
    }
    write_file(dir / "a.tsv", a);
    write_file(dir / "b.tsv", b);
    write_file(dir / "held.tsv", "die pruefung\tthe exam\n");
    std::string idx =
        "train_a\tdeu\teng\tfile://" + (dir / "a.tsv").string() +
        "\ttsv\teuroparl\n"
        "train_b\tdeu\teng\tfile://" + (dir / "b.tsv").string() +
        "\ttsv\topus\n"
        "held_z\tdeu\teng\tfile://" + (dir / "held.tsv").string() +
        "\ttsv\topus\n";
    write_file(dir / "index.tsv", idx);
    index = Index::load(dir / "index.tsv", reg());
  }

  PipelineConfig config() const {
    PipelineConfig cfg;
    cfg.pair = "deu-eng";
    cfg.train_ids = {"train_a", "train_b"};
    cfg.test_ids = {"held_z"};
    cfg.src_size = 120;
    cfg.tgt_size = 120;
    cfg.db_shards = 3;
    return cfg;
  }
};

}  // namespace

TEST_CASE("config text round-trips through serialize/parse") {
  PipelineConfig cfg;
  cfg.pair = "fra-eng";
  cfg.train_ids = {"x1", "x2"};
  cfg.test_ids = {"t1"};
  cfg.clean.max_ratio = 3.5;
  cfg.clean.max_len = 200;
  cfg.vocab_scheme = Scheme::Word;
  cfg.src_size = 500;
  cfg.tgt_size = 600;
  cfg.vocab_dedup = false;
  cfg.db_shards = 2;
  cfg.max_toks = 4096;
  cfg.seed = 99;
  PipelineConfig back = PipelineConfig::parse_text(cfg.serialize());
  CHECK(back.pair == cfg.pair);
  CHECK(back.train_ids == cfg.train_ids);
  CHECK(back.test_ids == cfg.test_ids);
  CHECK(back.clean.max_ratio == cfg.clean.max_ratio);
  CHECK(back.clean.max_len == cfg.clean.max_len);
  CHECK(back.vocab_scheme == cfg.vocab_scheme);
  CHECK(back.src_size == cfg.src_size);
  CHECK(back.tgt_size == cfg.tgt_size);
  CHECK(back.vocab_dedup == cfg.vocab_dedup);
  CHECK(back.db_shards == cfg.db_shards);
  CHECK(back.max_toks == cfg.max_toks);
  CHECK(back.seed == cfg.seed);
}

TEST_CASE("config rejects unknown keys and empty selections") {
  CHECK_THROWS_AS(PipelineConfig::parse_text("train: a\nbogus.key: 1\n"),
                  ConfigError);
  CHECK_THROWS_AS(PipelineConfig::parse_text("pair: deu-eng\n"), ConfigError);
  CHECK_THROWS_AS(PipelineConfig::parse_text("train: a\nno colon here\n"),
                  ConfigError);
}

TEST_CASE("comments and blank lines are ignored") {
  PipelineConfig cfg = PipelineConfig::parse_text(
      "# a comment\n\ntrain: a b\n  seed:  7  \n");
  CHECK(cfg.train_ids == std::vector<std::string>{"a", "b"});
  CHECK(cfg.seed == 7);
}

TEST_CASE("pipeline produces every artifact") {
  Fixture fx;
  CountingTransport transport;
  Cache cache(temp_dir());
  fs::path out = temp_dir();
  Pipeline p(fx.config(), out, reg(), fx.index, transport, cache, 1);
  PipelineResult res = p.run();

  CHECK(res.stages_run ==
        std::vector<std::string>{"get", "clean", "vocab", "db"});
  CHECK(res.stages_cached.empty());
  for (const char* f :
       {"forge.conf", "get/train.src", "get/train.tgt", "get/signature.json",
        "get/citations.bib", "get/test.held_z.src", "get/test.held_z.tgt",
        "clean/train.src", "clean/train.tgt", "clean/clean.stats.json",
        "vocab/src.model.tsv", "vocab/tgt.model.tsv", "db/meta.json",
        "manifest.json"}) {
    CAPTURE(f);
    CHECK(fs::exists(out / f));
  }

  // the database round-trips through the saved vocabularies
  DbMeta meta = DbMeta::load(out / "db");
  CHECK(meta.n_records == 80);
  auto st = db_stats(out / "db");
  CHECK(st.n_records == meta.n_records);

  // the manifest lists a digest per artifact plus its own digest
  auto j = nlohmann::json::parse(read_file(out / "manifest.json"));
  CHECK(j.at("manifest_digest").get<std::string>() == res.manifest_digest);
  CHECK(j.at("files").size() >= 12);
}

TEST_CASE("second run is satisfied entirely from cache") {
  Fixture fx;
  CountingTransport transport;
  Cache cache(temp_dir());
  fs::path out = temp_dir();

  Pipeline first(fx.config(), out, reg(), fx.index, transport, cache, 1);
  PipelineResult r1 = first.run();
  int fetches = transport.calls;
  CHECK(fetches > 0);

  Pipeline second(fx.config(), out, reg(), fx.index, transport, cache, 1);
  PipelineResult r2 = second.run();
  CHECK(transport.calls == fetches);  // no new downloads
  CHECK(r2.stages_run.empty());
  CHECK(r2.stages_cached ==
        std::vector<std::string>{"get", "clean", "vocab", "db"});
  CHECK(r2.manifest_digest == r1.manifest_digest);
}

TEST_CASE("changing a downstream knob reruns only downstream stages") {
  Fixture fx;
  CountingTransport transport;
  Cache cache(temp_dir());
  fs::path out = temp_dir();

  Pipeline first(fx.config(), out, reg(), fx.index, transport, cache, 1);
  first.run();

  PipelineConfig cfg = fx.config();
  cfg.db_shards = 1;
  Pipeline second(cfg, out, reg(), fx.index, transport, cache, 1);
  PipelineResult r2 = second.run();
  CHECK(r2.stages_cached == std::vector<std::string>{"get", "clean", "vocab"});
  CHECK(r2.stages_run == std::vector<std::string>{"db"});
  CHECK(DbMeta::load(out / "db").shards.size() == 1);
}

TEST_CASE("a deleted artifact forces its stage to rerun") {
  Fixture fx;
  CountingTransport transport;
  Cache cache(temp_dir());
  fs::path out = temp_dir();

  Pipeline first(fx.config(), out, reg(), fx.index, transport, cache, 1);
  first.run();
  fs::remove(out / "vocab" / "src.model.tsv");

  Pipeline second(fx.config(), out, reg(), fx.index, transport, cache, 1);
  PipelineResult r2 = second.run();
  CHECK(std::find(r2.stages_run.begin(), r2.stages_run.end(), "vocab") !=
        r2.stages_run.end());
  CHECK(fs::exists(out / "vocab" / "src.model.tsv"));
}

TEST_CASE("an unknown dataset id fails naming the id") {
  Fixture fx;
  CountingTransport transport;
  Cache cache(temp_dir());
  PipelineConfig cfg = fx.config();
  cfg.train_ids.push_back("missing_set");
  Pipeline p(cfg, temp_dir(), reg(), fx.index, transport, cache, 1);
  try {
    p.run();
    FAIL("expected InvalidSelection");
  } catch (const InvalidSelection& e) {
    CHECK(std::string(e.what()).find("missing_set") != std::string::npos);
  }
}

TEST_CASE("clean stats account for every input pair") {
  Fixture fx;
  CountingTransport transport;
  Cache cache(temp_dir());
  fs::path out = temp_dir();
  Pipeline p(fx.config(), out, reg(), fx.index, transport, cache, 1);
  p.run();
  auto j = nlohmann::json::parse(read_file(out / "clean" / "clean.stats.json"));
  std::uint64_t dropped = j.at("n_empty").get<std::uint64_t>() +
                          j.at("n_len").get<std::uint64_t>() +
                          j.at("n_ratio").get<std::uint64_t>() +
                          j.at("n_nonascii").get<std::uint64_t>() +
                          j.at("n_url").get<std::uint64_t>() +
                          j.at("n_overlap").get<std::uint64_t>() +
                          j.at("n_dup").get<std::uint64_t>();
  CHECK(j.at("n_input").get<std::uint64_t>() ==
        dropped + j.at("n_kept").get<std::uint64_t>());
  CHECK(j.at("n_input").get<std::uint64_t>() == 80);
}
