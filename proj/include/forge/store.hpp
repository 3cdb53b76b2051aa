#pragma once

#include <cstdint>
#include <functional>
#include <future>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "forge/common.hpp"

namespace forge {

// Shard layout (all integers little-endian):
//   magic "NLDB1" (5 bytes), format_version u8, src_width u8, tgt_width u8,
//   n u64, then n x (src_len u32, tgt_len u32), then all src ids
//   (src_width bytes each), then all tgt ids.
inline constexpr char kShardMagic[5] = {'N', 'L', 'D', 'B', '1'};
inline constexpr std::uint8_t kFormatVersion = 1;
inline constexpr std::size_t kShardHeaderBytes = 16;

/// Smallest of {1,2,4} bytes whose unsigned range covers ids 0..size-1.
inline int width_for(std::uint64_t vocab_size) {
  if (vocab_size > (1ull << 32))
    throw VocabTooLarge("vocab size " + std::to_string(vocab_size) +
                        " exceeds 4-byte id range");
  if (vocab_size <= (1ull << 8)) return 1;
  if (vocab_size <= (1ull << 16)) return 2;
  return 4;
}

struct DbMeta {
  std::uint64_t src_vocab_size = 0;
  std::uint64_t tgt_vocab_size = 0;
  int src_width = 1;
  int tgt_width = 1;
  std::uint64_t n_records = 0;
  std::vector<std::pair<std::string, std::uint64_t>> shards;  // name, count
  int format_version = kFormatVersion;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["format_version"] = format_version;
    j["n_records"] = n_records;
    nlohmann::ordered_json sh = nlohmann::ordered_json::array();
    for (const auto& [name, count] : shards)
      sh.push_back({{"count", count}, {"file", name}});
    j["shards"] = sh;
    j["src_vocab_size"] = src_vocab_size;
    j["src_width"] = src_width;
    j["tgt_vocab_size"] = tgt_vocab_size;
    j["tgt_width"] = tgt_width;
    return j;
  }

  static DbMeta from_json(const nlohmann::json& j) {
    DbMeta m;
    m.format_version = j.at("format_version");
    m.n_records = j.at("n_records");
    m.src_vocab_size = j.at("src_vocab_size");
    m.src_width = j.at("src_width");
    m.tgt_vocab_size = j.at("tgt_vocab_size");
    m.tgt_width = j.at("tgt_width");
    for (const auto& sh : j.at("shards"))
      m.shards.emplace_back(sh.at("file"), sh.at("count"));
    return m;
  }

  static DbMeta load(const fs::path& db_dir) {
    fs::path meta = db_dir / "meta.json";
    if (!fs::exists(meta))
      throw DataError("no database at " + db_dir.string() +
                      " (meta.json missing)");
    return from_json(nlohmann::json::parse(read_file(meta)));
  }
};

using IdSeq = std::vector<std::uint32_t>;

struct Record {
  IdSeq src;
  IdSeq tgt;
  bool operator==(const Record&) const = default;
};

namespace detail {

inline void put_le(std::string& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i)
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint64_t get_le(const unsigned char* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i)
    v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace detail

/// Serializes one shard's records to the fixed binary layout.
inline std::string encode_shard(const std::vector<Record>& records,
                                int src_width, int tgt_width) {
  std::string out;
  out.append(kShardMagic, 5);
  out.push_back(static_cast<char>(kFormatVersion));
  out.push_back(static_cast<char>(src_width));
  out.push_back(static_cast<char>(tgt_width));
  detail::put_le(out, records.size(), 8);
  for (const auto& r : records) {
    detail::put_le(out, r.src.size(), 4);
    detail::put_le(out, r.tgt.size(), 4);
  }
  for (const auto& r : records)
    for (std::uint32_t id : r.src) detail::put_le(out, id, src_width);
  for (const auto& r : records)
    for (std::uint32_t id : r.tgt) detail::put_le(out, id, tgt_width);
  return out;
}

/// Streaming shard reader; checks magic/version and the exact byte length
/// implied by the header before yielding records.
inline void read_shard(const fs::path& file,
                       const std::function<void(Record&&)>& sink) {
  std::string data = read_file(file);
  if (data.size() < kShardHeaderBytes ||
      std::memcmp(data.data(), kShardMagic, 5) != 0)
    throw BadMagic("bad shard magic: " + file.string());
  const auto* p = reinterpret_cast<const unsigned char*>(data.data());
  if (p[5] != kFormatVersion)
    throw BadMagic("unsupported shard version in " + file.string());
  int src_width = p[6], tgt_width = p[7];
  std::uint64_t n = detail::get_le(p + 8, 8);
  std::uint64_t expect = kShardHeaderBytes + n * 8;
  if (data.size() < expect)
    throw TruncatedShard("shard shorter than its length table: " +
                         file.string());
  std::vector<std::pair<std::uint32_t, std::uint32_t>> lens(n);
  std::uint64_t src_total = 0, tgt_total = 0;
  for (std::uint64_t i = 0; i < n; ++i) {
    lens[i].first = static_cast<std::uint32_t>(
        detail::get_le(p + kShardHeaderBytes + i * 8, 4));
    lens[i].second = static_cast<std::uint32_t>(
        detail::get_le(p + kShardHeaderBytes + i * 8 + 4, 4));
    src_total += lens[i].first;
    tgt_total += lens[i].second;
  }
  expect += src_total * src_width + tgt_total * tgt_width;
  if (data.size() != expect)
    throw TruncatedShard("shard byte length mismatch: " + file.string() +
                         " (expected " + std::to_string(expect) + ", got " +
                         std::to_string(data.size()) + ")");
  std::size_t src_off = kShardHeaderBytes + n * 8;
  std::size_t tgt_off = src_off + src_total * src_width;
  for (std::uint64_t i = 0; i < n; ++i) {
    Record r;
    r.src.resize(lens[i].first);
    r.tgt.resize(lens[i].second);
    for (auto& id : r.src) {
      id = static_cast<std::uint32_t>(detail::get_le(p + src_off, src_width));
      src_off += src_width;
    }
    for (auto& id : r.tgt) {
      id = static_cast<std::uint32_t>(detail::get_le(p + tgt_off, tgt_width));
      tgt_off += tgt_width;
    }
    sink(std::move(r));
  }
}

/// Writes a sharded database: record i goes to shard i mod n_shards, the
/// meta file lands last as the commit point.
class DbWriter {
 public:
  DbWriter(fs::path out_dir, std::uint64_t src_vocab_size,
           std::uint64_t tgt_vocab_size, int n_shards)
      : out_dir_(std::move(out_dir)), n_shards_(n_shards) {
    if (n_shards < 1) throw ConfigError("n_shards must be >= 1");
    meta_.src_vocab_size = src_vocab_size;
    meta_.tgt_vocab_size = tgt_vocab_size;
    meta_.src_width = width_for(src_vocab_size);
    meta_.tgt_width = width_for(tgt_vocab_size);
    buckets_.resize(n_shards);
    fs::create_directories(out_dir_);
  }

  void add(Record&& r) {
    for (std::uint32_t id : r.src)
      if (id >= meta_.src_vocab_size)
        throw IdOverflow("src id " + std::to_string(id) + " at record " +
                         std::to_string(meta_.n_records));
    for (std::uint32_t id : r.tgt)
      if (id >= meta_.tgt_vocab_size)
        throw IdOverflow("tgt id " + std::to_string(id) + " at record " +
                         std::to_string(meta_.n_records));
    buckets_[meta_.n_records % n_shards_].push_back(std::move(r));
    ++meta_.n_records;
  }

  DbMeta finish(int workers = env_workers()) {
    std::vector<std::future<void>> futs;
    for (int s = 0; s < n_shards_; ++s) {
      std::string name = "part-" + std::to_string(s) + ".nldb";
      meta_.shards.emplace_back(name, buckets_[s].size());
      auto task = [this, s, name] {
        atomic_write(out_dir_ / name,
                     encode_shard(buckets_[s], meta_.src_width,
                                  meta_.tgt_width));
      };
      if (workers > 1)
        futs.push_back(std::async(std::launch::async, task));
      else
        task();
    }
    for (auto& f : futs) f.get();  // any shard failure aborts before meta
    atomic_write(out_dir_ / "meta.json", meta_.to_json().dump(2) + "\n");
    return meta_;
  }

 private:
  fs::path out_dir_;
  int n_shards_;
  DbMeta meta_;
  std::vector<std::vector<Record>> buckets_;
};

/// Reads all records of a database, shard by shard in shard order.
inline void db_read_all(const fs::path& db_dir,
                        const std::function<void(Record&&)>& sink) {
  DbMeta meta = DbMeta::load(db_dir);
  for (const auto& [name, count] : meta.shards) read_shard(db_dir / name, sink);
}

struct DbStats {
  std::uint64_t n_records = 0;
  std::uint64_t src_tokens = 0;
  std::uint64_t tgt_tokens = 0;
  std::map<std::uint32_t, std::uint64_t> tgt_len_histogram;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["n_records"] = n_records;
    j["src_tokens"] = src_tokens;
    j["tgt_tokens"] = tgt_tokens;
    nlohmann::ordered_json h;
    for (const auto& [len, n] : tgt_len_histogram)
      h[std::to_string(len)] = n;
    j["tgt_len_histogram"] = h;
    return j;
  }
};

inline DbStats db_stats(const fs::path& db_dir) {
  DbStats st;
  db_read_all(db_dir, [&](Record&& r) {
    ++st.n_records;
    st.src_tokens += r.src.size();
    st.tgt_tokens += r.tgt.size();
    ++st.tgt_len_histogram[static_cast<std::uint32_t>(r.tgt.size())];
  });
  return st;
}

// ---------------------------------------------------------------------------
// Batching
// ---------------------------------------------------------------------------

struct Batch {
  std::vector<Record> records;
  std::uint64_t src_padded_tokens = 0;  // count * max src len in batch
  std::uint64_t tgt_padded_tokens = 0;
};

struct BatchConfig {
  std::uint64_t max_toks = 18000;  // padded-token budget per side
  std::uint64_t seed = 1;
  std::uint32_t bucket_width = 2;  // target-length bucket granularity
};

/// One epoch of length-bucketed random batches. Records bucket by target
/// length, buckets and their contents shuffle under the seed, and batches
/// fill greedily while padded tokens (batch size x max length) stay within
/// budget on both sides. Every record appears in exactly one batch.
inline std::vector<Batch> batch_epoch(std::vector<Record> records,
                                      const BatchConfig& cfg) {
  std::map<std::uint32_t, std::vector<std::size_t>> buckets;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.src.size() > cfg.max_toks || r.tgt.size() > cfg.max_toks)
      throw SequenceTooLong("record of lengths (" +
                            std::to_string(r.src.size()) + ", " +
                            std::to_string(r.tgt.size()) +
                            ") exceeds the batch budget alone");
    std::uint32_t key =
        static_cast<std::uint32_t>(r.tgt.size()) / cfg.bucket_width;
    buckets[key].push_back(i);
  }

  SplitMix64 rng(cfg.seed);
  std::vector<std::uint32_t> bucket_keys;
  for (const auto& [k, v] : buckets) bucket_keys.push_back(k);
  deterministic_shuffle(bucket_keys, rng);
  std::vector<std::size_t> order;
  order.reserve(records.size());
  for (std::uint32_t k : bucket_keys) {
    auto& v = buckets[k];
    deterministic_shuffle(v, rng);
    order.insert(order.end(), v.begin(), v.end());
  }

  std::vector<Batch> out;
  Batch cur;
  std::uint64_t max_src = 0, max_tgt = 0;
  auto flush = [&] {
    if (cur.records.empty()) return;
    cur.src_padded_tokens = max_src * cur.records.size();
    cur.tgt_padded_tokens = max_tgt * cur.records.size();
    out.push_back(std::move(cur));
    cur = Batch{};
    max_src = max_tgt = 0;
  };
  for (std::size_t idx : order) {
    const auto& r = records[idx];
    std::uint64_t ns = std::max<std::uint64_t>(max_src, r.src.size());
    std::uint64_t nt = std::max<std::uint64_t>(max_tgt, r.tgt.size());
    std::uint64_t n = cur.records.size() + 1;
    if (!cur.records.empty() && (ns * n > cfg.max_toks || nt * n > cfg.max_toks))
      flush();
    max_src = std::max<std::uint64_t>(max_src, r.src.size());
    max_tgt = std::max<std::uint64_t>(max_tgt, r.tgt.size());
    cur.records.push_back(records[idx]);
  }
  flush();
  return out;
}

inline std::vector<Batch> batch_epoch(const fs::path& db_dir,
                                      const BatchConfig& cfg) {
  std::vector<Record> records;
  db_read_all(db_dir, [&](Record&& r) { records.push_back(std::move(r)); });
  return batch_epoch(std::move(records), cfg);
}

}  // namespace forge
