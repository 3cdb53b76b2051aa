#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include <zlib.h>

#include "forge/common.hpp"
#include "forge/langid.hpp"
#include "forge/textprep.hpp"

namespace forge {

struct FormatTag {
  enum Kind { MosesPair, TSV, TMX, Archive } kind = TSV;
  std::shared_ptr<FormatTag> inner;  // set when kind == Archive

  static FormatTag moses() { return {MosesPair, nullptr}; }
  static FormatTag tsv() { return {TSV, nullptr}; }
  static FormatTag tmx() { return {TMX, nullptr}; }
  static FormatTag archive_of(FormatTag in) {
    return {Archive, std::make_shared<FormatTag>(std::move(in))};
  }

  std::string str() const {
    switch (kind) {
      case MosesPair: return "moses";
      case TSV: return "tsv";
      case TMX: return "tmx";
      case Archive: return "archive(" + inner->str() + ")";
    }
    return "?";
  }

  static FormatTag parse(const std::string& s) {
    if (s == "moses") return moses();
    if (s == "tsv") return tsv();
    if (s == "tmx") return tmx();
    throw ConfigError("unknown format tag: " + s);
  }
};

struct ParseOptions {
  LangPair pair;       // required for TMX and MosesPair
  bool strict = true;  // abort on malformed rows vs skip-with-count
};

struct ParseReport {
  std::size_t n_pairs = 0;
  std::size_t n_skipped = 0;
  std::size_t n_encoding_fixes = 0;  // invalid UTF-8 bytes replaced
  bool count_mismatch = false;       // Moses side files of unequal length
};

using PairSink = std::function<void(SegmentPair&&)>;

namespace detail {

/// Buffered line reader over an abstract byte source; strips \r and
/// replaces invalid UTF-8 so downstream code sees clean text.
class LineReader {
 public:
  using ReadFn = std::function<std::size_t(char*, std::size_t)>;
  explicit LineReader(ReadFn read) : read_(std::move(read)) {}

  bool next(std::string& line, std::size_t* n_fixed) {
    line.clear();
    for (;;) {
      if (pos_ == len_) {
        len_ = read_(buf_, sizeof(buf_));
        pos_ = 0;
        if (len_ == 0) break;
      }
      char* nl = static_cast<char*>(
          std::memchr(buf_ + pos_, '\n', len_ - pos_));
      if (nl) {
        line.append(buf_ + pos_, nl);
        pos_ = static_cast<std::size_t>(nl - buf_) + 1;
        return finish(line, n_fixed), true;
      }
      line.append(buf_ + pos_, buf_ + len_);
      pos_ = len_;
    }
    if (line.empty()) return false;
    finish(line, n_fixed);
    return true;
  }

 private:
  static void finish(std::string& line, std::size_t* n_fixed) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::size_t fixed = 0;
    auto cps = utf8_decode(line, &fixed);
    if (fixed > 0) {
      line = utf8_encode(cps);
      if (n_fixed) *n_fixed += fixed;
    }
  }

  ReadFn read_;
  char buf_[1 << 16];
  std::size_t pos_ = 0, len_ = 0;
};

inline LineReader::ReadFn file_source(const fs::path& p) {
  auto in = std::make_shared<std::ifstream>(p, std::ios::binary);
  if (!*in) throw DataError("cannot open: " + p.string());
  return [in](char* buf, std::size_t n) -> std::size_t {
    in->read(buf, static_cast<std::streamsize>(n));
    return static_cast<std::size_t>(in->gcount());
  };
}

/// Streaming gzip decompressor wrapped around zlib's gzFile.
inline LineReader::ReadFn gzip_source(const fs::path& p) {
  gzFile f = gzopen(p.string().c_str(), "rb");
  if (!f) throw DataError("cannot open gzip: " + p.string());
  auto holder = std::shared_ptr<gzFile_s>(f, [](gzFile g) { gzclose(g); });
  return [holder, p](char* buf, std::size_t n) -> std::size_t {
    int got = gzread(holder.get(), buf, static_cast<unsigned>(n));
    if (got < 0) throw DataError("gzip read error: " + p.string());
    return static_cast<std::size_t>(got);
  };
}

// --- minimal zip reader: first file entry, stored or deflate ---

inline std::string zip_extract_first(const fs::path& p) {
  std::string data = read_file(p);
  // locate end-of-central-directory
  const std::string eocd_sig = "PK\x05\x06";
  std::size_t eocd = data.rfind(eocd_sig);
  if (eocd == std::string::npos || eocd + 22 > data.size())
    throw DataError("not a zip file: " + p.string());
  auto u16 = [&](std::size_t off) {
    return static_cast<unsigned>(static_cast<unsigned char>(data[off])) |
           (static_cast<unsigned>(static_cast<unsigned char>(data[off + 1])) << 8);
  };
  auto u32 = [&](std::size_t off) {
    return static_cast<std::uint32_t>(u16(off)) |
           (static_cast<std::uint32_t>(u16(off + 2)) << 16);
  };
  std::size_t n_entries = u16(eocd + 10);
  std::size_t cd_off = u32(eocd + 16);
  for (std::size_t e = 0, off = cd_off; e < n_entries; ++e) {
    if (off + 46 > data.size() || data.compare(off, 4, "PK\x01\x02") != 0)
      throw DataError("corrupt zip central directory: " + p.string());
    unsigned method = u16(off + 10);
    std::uint32_t csize = u32(off + 20);
    std::uint32_t usize = u32(off + 24);
    unsigned nlen = u16(off + 28), xlen = u16(off + 30), clen = u16(off + 32);
    std::uint32_t lho = u32(off + 42);
    std::string name = data.substr(off + 46, nlen);
    off += 46 + nlen + xlen + clen;
    if (!name.empty() && name.back() == '/') continue;  // directory entry
    // local header: skip its (possibly different) name/extra lengths
    if (lho + 30 > data.size() || data.compare(lho, 4, "PK\x03\x04") != 0)
      throw DataError("corrupt zip local header: " + p.string());
    auto lu16 = [&](std::size_t o) { return u16(lho + o); };
    std::size_t payload = lho + 30 + lu16(26) + lu16(28);
    if (payload + csize > data.size())
      throw DataError("truncated zip: " + p.string());
    if (method == 0) return data.substr(payload, csize);
    if (method != 8)
      throw DataError("unsupported zip compression method in " + p.string());
    std::string out(usize, '\0');
    z_stream zs{};
    if (inflateInit2(&zs, -MAX_WBITS) != Z_OK)
      throw DataError("zlib init failed");
    zs.next_in = reinterpret_cast<Bytef*>(data.data() + payload);
    zs.avail_in = csize;
    zs.next_out = reinterpret_cast<Bytef*>(out.data());
    zs.avail_out = usize;
    int rc = inflate(&zs, Z_FINISH);
    inflateEnd(&zs);
    if (rc != Z_STREAM_END)
      throw DataError("zip inflate failed: " + p.string());
    return out;
  }
  throw DataError("zip has no file entries: " + p.string());
}

inline LineReader::ReadFn string_source(std::string data) {
  auto holder = std::make_shared<std::string>(std::move(data));
  auto pos = std::make_shared<std::size_t>(0);
  return [holder, pos](char* buf, std::size_t n) -> std::size_t {
    std::size_t left = holder->size() - *pos;
    std::size_t take = std::min(n, left);
    std::memcpy(buf, holder->data() + *pos, take);
    *pos += take;
    return take;
  };
}

// --- TMX: streaming scan for <tu>...</tu> blocks ---

inline std::string xml_unescape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '&') {
      out.push_back(s[i]);
      continue;
    }
    std::size_t semi = s.find(';', i);
    if (semi == std::string_view::npos || semi - i > 10) {
      out.push_back('&');
      continue;
    }
    std::string_view ent = s.substr(i + 1, semi - i - 1);
    if (ent == "amp") out.push_back('&');
    else if (ent == "lt") out.push_back('<');
    else if (ent == "gt") out.push_back('>');
    else if (ent == "quot") out.push_back('"');
    else if (ent == "apos") out.push_back('\'');
    else if (!ent.empty() && ent[0] == '#') {
      char32_t cp = ent[1] == 'x' || ent[1] == 'X'
                        ? static_cast<char32_t>(
                              std::stoul(std::string(ent.substr(2)), nullptr, 16))
                        : static_cast<char32_t>(
                              std::stoul(std::string(ent.substr(1))));
      utf8_append(out, cp);
    } else {
      out.append(s.substr(i, semi - i + 1));
      i = semi;
      continue;
    }
    i = semi;
  }
  return out;
}

inline std::string tmx_attr(std::string_view tag, std::string_view name) {
  // attribute values in TMX are double- or single-quoted
  std::size_t pos = 0;
  while ((pos = tag.find(name, pos)) != std::string_view::npos) {
    std::size_t eq = pos + name.size();
    while (eq < tag.size() && std::isspace(static_cast<unsigned char>(tag[eq])))
      ++eq;
    if (eq >= tag.size() || tag[eq] != '=') {
      ++pos;
      continue;
    }
    ++eq;
    while (eq < tag.size() && std::isspace(static_cast<unsigned char>(tag[eq])))
      ++eq;
    if (eq >= tag.size() || (tag[eq] != '"' && tag[eq] != '\'')) {
      ++pos;
      continue;
    }
    char q = tag[eq];
    std::size_t end = tag.find(q, eq + 1);
    if (end == std::string_view::npos) return {};
    return std::string(tag.substr(eq + 1, end - eq - 1));
  }
  return {};
}

}  // namespace detail

inline FormatTag detect_format(const std::string& filename) {
  std::string lower = to_lower(filename);
  if (ends_with(lower, ".gz") || ends_with(lower, ".zip")) {
    std::string inner = filename.substr(0, filename.rfind('.'));
    return FormatTag::archive_of(detect_format(inner));
  }
  if (ends_with(lower, ".tmx")) return FormatTag::tmx();
  if (ends_with(lower, ".tsv")) return FormatTag::tsv();
  // extension that is a known language code: Moses side file
  auto dot = lower.rfind('.');
  if (dot != std::string::npos) {
    static const auto codes = [] {
      std::unordered_set<std::string> s;
      Registry reg = Registry::load_default();
      for (const auto& r : reg.rows()) {
        s.insert(r.code3);
        if (!r.code1.empty()) s.insert(r.code1);
      }
      return s;
    }();
    if (codes.count(lower.substr(dot + 1))) return FormatTag::moses();
  }
  throw UnknownFormat(filename);
}

/// Streams SegmentPairs out of a payload file. Pairs arrive in file order;
/// archives decompress then recurse on the inner format.
class Parser {
 public:
  Parser(LangPair pair, bool strict = true) : opts_{pair, strict} {}
  explicit Parser(ParseOptions opts) : opts_(std::move(opts)) {}

  ParseReport parse(const fs::path& payload, const FormatTag& tag,
                    const std::string& origin_id, const PairSink& sink) const {
    ParseReport rep;
    parse_into(payload, tag, origin_id, sink, rep);
    return rep;
  }

 private:
  void parse_into(const fs::path& payload, const FormatTag& tag,
                  const std::string& origin_id, const PairSink& sink,
                  ParseReport& rep) const {
    switch (tag.kind) {
      case FormatTag::Archive: {
        std::string lower = to_lower(payload.string());
        if (ends_with(lower, ".gz")) {
          detail::LineReader rd(detail::gzip_source(payload));
          parse_lines(rd, *tag.inner, origin_id, sink, rep);
        } else if (ends_with(lower, ".zip")) {
          detail::LineReader rd(
              detail::string_source(detail::zip_extract_first(payload)));
          parse_lines(rd, *tag.inner, origin_id, sink, rep);
        } else {
          throw UnknownFormat(payload.string());
        }
        break;
      }
      case FormatTag::MosesPair:
        parse_moses(payload, origin_id, sink, rep);
        break;
      default: {
        detail::LineReader rd(detail::file_source(payload));
        parse_lines(rd, tag, origin_id, sink, rep);
      }
    }
  }

  void parse_lines(detail::LineReader& rd, const FormatTag& tag,
                   const std::string& origin_id, const PairSink& sink,
                   ParseReport& rep) const {
    if (tag.kind == FormatTag::TSV) {
      parse_tsv(rd, origin_id, sink, rep);
    } else if (tag.kind == FormatTag::TMX) {
      parse_tmx(rd, origin_id, sink, rep);
    } else {
      throw UnknownFormat("nested archive of " + tag.str());
    }
  }

  void parse_tsv(detail::LineReader& rd, const std::string& origin_id,
                 const PairSink& sink, ParseReport& rep) const {
    std::string line;
    std::size_t line_no = 0;
    while (rd.next(line, &rep.n_encoding_fixes)) {
      ++line_no;
      auto tab = line.find('\t');
      if (tab == std::string::npos) {
        if (opts_.strict)
          throw ParseError(origin_id, line_no, "TSV row has no TAB");
        ++rep.n_skipped;
        continue;
      }
      ++rep.n_pairs;
      sink(SegmentPair{line.substr(0, tab), line.substr(tab + 1), origin_id,
                       line_no});
    }
  }

  void parse_moses(const fs::path& payload, const std::string& origin_id,
                   const PairSink& sink, ParseReport& rep) const {
    // sibling files <stem>.<src-code> / <stem>.<tgt-code>
    fs::path stem = payload;
    stem.replace_extension();
    fs::path src_file = stem;
    src_file += "." + opts_.pair.src.code;
    fs::path tgt_file = stem;
    tgt_file += "." + opts_.pair.tgt.code;
    detail::LineReader src_rd(detail::file_source(src_file));
    detail::LineReader tgt_rd(detail::file_source(tgt_file));
    std::string s, t;
    std::size_t line_no = 0;
    for (;;) {
      bool has_s = src_rd.next(s, &rep.n_encoding_fixes);
      bool has_t = tgt_rd.next(t, &rep.n_encoding_fixes);
      if (!has_s && !has_t) break;
      ++line_no;
      if (has_s != has_t) {
        // unequal side files; the caller's sanity check decides the abort
        rep.count_mismatch = true;
        break;
      }
      ++rep.n_pairs;
      sink(SegmentPair{s, t, origin_id, line_no});
    }
  }

  void parse_tmx(detail::LineReader& rd, const std::string& origin_id,
                 const PairSink& sink, ParseReport& rep) const {
    std::string line, buf;
    std::size_t line_no = 0, tu_no = 0;
    bool in_tu = false;
    while (rd.next(line, &rep.n_encoding_fixes)) {
      ++line_no;
      std::string_view rest = line;
      while (!rest.empty()) {
        if (!in_tu) {
          std::size_t open = rest.find("<tu");
          if (open == std::string_view::npos) break;
          // require a real <tu> tag, not <tuv>
          std::string_view after = rest.substr(open + 3);
          if (!after.empty() && after[0] != ' ' && after[0] != '>') {
            rest = rest.substr(open + 3);
            continue;
          }
          in_tu = true;
          buf.clear();
          rest = rest.substr(open);
        }
        std::size_t close = rest.find("</tu>");
        if (close == std::string_view::npos) {
          buf.append(rest);
          buf.push_back(' ');
          if (buf.size() > (1u << 22))
            throw ParseError(origin_id, line_no, "unterminated <tu> block");
          break;
        }
        buf.append(rest.substr(0, close + 5));
        in_tu = false;
        ++tu_no;
        handle_tu(buf, origin_id, tu_no, sink, rep);
        rest = rest.substr(close + 5);
      }
    }
  }

  void handle_tu(std::string_view tu, const std::string& origin_id,
                 std::size_t tu_no, const PairSink& sink,
                 ParseReport& rep) const {
    std::string src_text, tgt_text;
    bool have_src = false, have_tgt = false;
    std::size_t pos = 0;
    while ((pos = tu.find("<tuv", pos)) != std::string_view::npos) {
      std::size_t tag_end = tu.find('>', pos);
      if (tag_end == std::string_view::npos) break;
      std::string_view tag = tu.substr(pos, tag_end - pos);
      std::string lang = detail::tmx_attr(tag, "xml:lang");
      if (lang.empty()) lang = detail::tmx_attr(tag, "lang");
      std::size_t seg_open = tu.find("<seg", tag_end);
      std::size_t tuv_end = tu.find("</tuv>", tag_end);
      pos = tag_end + 1;
      if (seg_open == std::string_view::npos ||
          (tuv_end != std::string_view::npos && seg_open > tuv_end))
        continue;
      std::size_t text_start = tu.find('>', seg_open);
      std::size_t seg_close = tu.find("</seg>", seg_open);
      if (text_start == std::string_view::npos ||
          seg_close == std::string_view::npos)
        continue;
      std::string text = detail::xml_unescape(
          tu.substr(text_start + 1, seg_close - text_start - 1));
      std::string code = to_lower(lang);
      auto cut = code.find_first_of("-_");
      if (cut != std::string::npos) code = code.substr(0, cut);
      if (matches(code, opts_.pair.src)) {
        src_text = std::move(text);
        have_src = true;
      } else if (matches(code, opts_.pair.tgt)) {
        tgt_text = std::move(text);
        have_tgt = true;
      }
    }
    if (!have_src || !have_tgt) {
      if (opts_.strict)
        throw ParseError(origin_id, tu_no,
                         "<tu> missing a requested language");
      ++rep.n_skipped;
      return;
    }
    ++rep.n_pairs;
    sink(SegmentPair{std::move(src_text), std::move(tgt_text), origin_id,
                     tu_no});
  }

  static bool matches(const std::string& code, const LangCode& lang) {
    if (code == lang.code) return true;
    // two-letter tags match when the registry maps them to the same code
    if (code.size() == 2) {
      static const auto two = [] {
        std::unordered_map<std::string, std::string> m;
        Registry reg = Registry::load_default();
        for (const auto& r : reg.rows())
          if (!r.code1.empty()) m.emplace(r.code1, r.code3);
        return m;
      }();
      auto it = two.find(code);
      return it != two.end() && it->second == lang.code;
    }
    return false;
  }

  ParseOptions opts_;
};

}  // namespace forge
