#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "clem/rng.hpp"
#include "clem/serialize.hpp"

namespace clem {

struct RawExample {
  int label = 0;
  std::string text;
};

struct RawDataset {
  std::string name;
  int num_classes = 0;
  std::vector<RawExample> records;
};

enum class TokenizerKind : uint8_t { Regex = 0, Simple = 1 };

// ---------------------------------------------------------------------------
// tokenizers
// ---------------------------------------------------------------------------

namespace detail {

inline std::string lowercase_ascii(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) out.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : c);
  return out;
}

inline void replace_all(std::string& s, std::string_view from, std::string_view to) {
  size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
}

inline std::vector<std::string> whitespace_split(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream iss(s);
  std::string tok;
  while (iss >> tok) out.push_back(tok);
  return out;
}

}  // namespace detail

/// Word-level tokenizer for the CSV topic/sentiment corpora. The exact rule
/// set, applied in order:
///   1. lowercase; normalize the UTF-8 right single quote to ASCII '
///   2. replace any character outside [a-z0-9(),!?'`.:;-] and space with space
///   3. detach the contraction suffixes 's 've 'd 'll 're 'm 't as tokens
///   4. pad , ! ? ( ) . : ; with spaces so they become standalone tokens
///   5. split on whitespace
inline std::vector<std::string> tokenize_regex(std::string_view text) {
  std::string s = detail::lowercase_ascii(text);
  detail::replace_all(s, "\xe2\x80\x99", "'");
  for (char& c : s) {
    bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') ||
              std::string_view("(),!?'`.:;- ").find(c) != std::string_view::npos;
    if (!ok) c = ' ';
  }
  for (const char* suf : {"'s", "'ve", "'d", "'ll", "'re", "'m", "'t"})
    detail::replace_all(s, suf, std::string(" ") + suf);
  for (char p : {',', '!', '?', '(', ')', '.', ':', ';'})
    detail::replace_all(s, std::string(1, p), std::string(" ") + p + " ");
  return detail::whitespace_split(s);
}

/// Simple lowercasing tokenizer for the review corpora: detaches sentence
/// punctuation, splits on whitespace, truncates to max_len tokens.
inline std::vector<std::string> tokenize_simple(std::string_view text, int max_len = 400) {
  std::string s = detail::lowercase_ascii(text);
  detail::replace_all(s, "\xe2\x80\x99", "'");
  detail::replace_all(s, "<br />", " ");
  for (char p : {',', '!', '?', '(', ')', '.', ':', ';', '"'})
    detail::replace_all(s, std::string(1, p), std::string(" ") + p + " ");
  auto toks = detail::whitespace_split(s);
  if (max_len > 0 && static_cast<int>(toks.size()) > max_len) toks.resize(max_len);
  return toks;
}

inline std::vector<std::string> tokenize(std::string_view text, TokenizerKind kind,
                                         int max_len = 0) {
  if (kind == TokenizerKind::Simple) return tokenize_simple(text, max_len > 0 ? max_len : 400);
  return tokenize_regex(text);
}

// ---------------------------------------------------------------------------
// vocabulary
// ---------------------------------------------------------------------------

/// Top-v training words by frequency. Reserved ids: PAD=0, UNK=1; corpus words
/// occupy ids [2, v+2) in descending frequency order (ties lexicographic), so
/// the u most frequent words are exactly ids 2..u+1.
struct Vocab {
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  std::vector<std::string> words;   // index i <-> id i+2
  std::vector<uint64_t> freqs;      // training frequency, same order
  std::unordered_map<std::string, int> index;  // word -> id

  int v() const { return static_cast<int>(words.size()); }
  int num_ids() const { return v() + 2; }

  int id(const std::string& w) const {
    auto it = index.find(w);
    return it == index.end() ? kUnk : it->second;
  }
  const std::string& word(int id) const { return words[static_cast<size_t>(id) - 2]; }
};

inline Vocab build_vocab(const std::vector<std::vector<std::string>>& docs, int v) {
  if (v < 1) throw std::invalid_argument("build_vocab: v must be >= 1");
  std::unordered_map<std::string, uint64_t> counts;
  for (const auto& doc : docs)
    for (const auto& tok : doc) ++counts[tok];
  std::vector<std::pair<std::string, uint64_t>> order(counts.begin(), counts.end());
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (static_cast<int>(order.size()) > v) order.resize(v);
  Vocab vocab;
  for (auto& [w, c] : order) {
    vocab.index[w] = static_cast<int>(vocab.words.size()) + 2;
    vocab.words.push_back(w);
    vocab.freqs.push_back(c);
  }
  return vocab;
}

// ---------------------------------------------------------------------------
// encoding
// ---------------------------------------------------------------------------

struct EncodedDataset {
  std::vector<std::vector<int>> seqs;
  std::vector<int> labels;
  int num_classes = 0;
  int max_len = 0;

  size_t size() const { return seqs.size(); }
};

inline std::vector<int> encode_tokens(const std::vector<std::string>& toks, const Vocab& vocab,
                                      int max_len) {
  std::vector<int> ids;
  ids.reserve(toks.size());
  for (const auto& t : toks) {
    ids.push_back(vocab.id(t));
    if (max_len > 0 && static_cast<int>(ids.size()) >= max_len) break;
  }
  if (ids.empty()) ids.push_back(Vocab::kUnk);  // empty text becomes [UNK]
  return ids;
}

inline EncodedDataset encode(const RawDataset& raw, const Vocab& vocab, TokenizerKind kind,
                             int max_len) {
  EncodedDataset out;
  out.num_classes = raw.num_classes;
  out.max_len = max_len;
  for (const auto& r : raw.records) {
    out.seqs.push_back(encode_tokens(tokenize(r.text, kind, max_len), vocab, max_len));
    out.labels.push_back(r.label);
  }
  return out;
}

// ---------------------------------------------------------------------------
// splits
// ---------------------------------------------------------------------------

inline std::pair<RawDataset, RawDataset> split_dev(const RawDataset& train, int n_dev,
                                                   uint64_t seed) {
  const int n = static_cast<int>(train.records.size());
  if (n_dev <= 0 || n_dev >= n) throw std::invalid_argument("split_dev: n_dev out of range");
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  rng.shuffle(idx);
  std::vector<char> is_dev(n, 0);
  for (int i = 0; i < n_dev; ++i) is_dev[idx[i]] = 1;
  RawDataset tr{train.name, train.num_classes, {}};
  RawDataset dev{train.name + "-dev", train.num_classes, {}};
  for (int i = 0; i < n; ++i) (is_dev[i] ? dev : tr).records.push_back(train.records[i]);
  return {std::move(tr), std::move(dev)};
}

/// Class-stratified subsample of floor(fraction*N) examples. Per-class counts
/// follow largest-remainder rounding so the total is exact.
inline RawDataset subsample(const RawDataset& train, double fraction, uint64_t seed) {
  if (fraction <= 0.0 || fraction > 1.0) throw std::invalid_argument("subsample: fraction");
  const int n = static_cast<int>(train.records.size());
  if (fraction == 1.0) return train;
  const long target = static_cast<long>(fraction * n);

  std::vector<std::vector<int>> by_class(static_cast<size_t>(train.num_classes));
  for (int i = 0; i < n; ++i) by_class[static_cast<size_t>(train.records[i].label)].push_back(i);

  struct Slot {
    int cls;
    long base;
    double rem;
  };
  std::vector<Slot> slots;
  long total = 0;
  for (int c = 0; c < train.num_classes; ++c) {
    double exact = fraction * static_cast<double>(by_class[c].size());
    long base = static_cast<long>(exact);
    slots.push_back({c, base, exact - static_cast<double>(base)});
    total += base;
  }
  std::sort(slots.begin(), slots.end(), [](const Slot& a, const Slot& b) {
    if (a.rem != b.rem) return a.rem > b.rem;
    return a.cls < b.cls;
  });
  for (size_t i = 0; total < target && i < slots.size(); ++i, ++total) slots[i].base += 1;

  Rng rng(seed);
  std::vector<int> chosen;
  for (const auto& s : slots) {
    auto idx = by_class[static_cast<size_t>(s.cls)];
    rng.shuffle(idx);
    long take = std::min<long>(s.base, static_cast<long>(idx.size()));
    chosen.insert(chosen.end(), idx.begin(), idx.begin() + take);
  }
  std::sort(chosen.begin(), chosen.end());
  RawDataset out{train.name, train.num_classes, {}};
  for (int i : chosen) out.records.push_back(train.records[i]);
  return out;
}

// ---------------------------------------------------------------------------
// loaders
// ---------------------------------------------------------------------------

namespace detail {

/// One CSV record; supports quoted fields with "" escapes and embedded commas.
inline std::vector<std::string> parse_csv_row(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

}  // namespace detail

/// Label-first CSV (label,title,body); 1-based labels become 0-based and the
/// remaining fields are joined by a space.
inline RawDataset load_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open: " + path);
  RawDataset out{std::filesystem::path(path).stem().string(), 0, {}};
  std::string line;
  long lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto fields = detail::parse_csv_row(line);
    if (fields.size() < 2)
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": malformed row");
    int label;
    try {
      size_t used = 0;
      label = std::stoi(fields[0], &used);
      if (used != fields[0].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": unknown label '" +
                               fields[0] + "'");
    }
    if (label < 1)
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": unknown label " +
                               std::to_string(label));
    std::string text;
    for (size_t i = 1; i < fields.size(); ++i) {
      if (i > 1) text += ' ';
      text += fields[i];
    }
    out.records.push_back({label - 1, std::move(text)});
    out.num_classes = std::max(out.num_classes, label);
  }
  if (out.records.empty()) throw std::runtime_error(path + ": empty file");
  return out;
}

/// IMDB-style layout: <path>/pos/*.txt and <path>/neg/*.txt; neg=0, pos=1.
inline RawDataset load_review_dirs(const std::string& path) {
  namespace fs = std::filesystem;
  RawDataset out{fs::path(path).filename().string(), 2, {}};
  for (auto [sub, label] : {std::pair<const char*, int>{"neg", 0}, {"pos", 1}}) {
    fs::path dir = fs::path(path) / sub;
    if (!fs::is_directory(dir)) throw std::runtime_error("missing directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file() && e.path().extension() == ".txt") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& p : files) {
      std::ifstream f(p);
      std::stringstream ss;
      ss << f.rdbuf();
      out.records.push_back({label, ss.str()});
    }
  }
  if (out.records.empty()) throw std::runtime_error(path + ": no review files found");
  return out;
}

// ---------------------------------------------------------------------------
// encoded-dataset cache
// ---------------------------------------------------------------------------

/// Everything a training run needs, pre-tokenized. The cache file lets sweeps
/// skip re-tokenization.
struct DatasetBundle {
  Vocab vocab;
  EncodedDataset train, dev, test;
  TokenizerKind tok = TokenizerKind::Regex;
  int num_classes = 0;
};

namespace detail {

inline void write_encoded(ByteWriter& w, const EncodedDataset& d) {
  w.u32(static_cast<uint32_t>(d.seqs.size()));
  w.u32(static_cast<uint32_t>(d.num_classes));
  w.u32(static_cast<uint32_t>(d.max_len));
  for (size_t i = 0; i < d.seqs.size(); ++i) {
    w.u32(static_cast<uint32_t>(d.labels[i]));
    w.u32(static_cast<uint32_t>(d.seqs[i].size()));
    for (int id : d.seqs[i]) w.u32(static_cast<uint32_t>(id));
  }
}

inline EncodedDataset read_encoded(ByteReader& r) {
  EncodedDataset d;
  uint32_t n = r.u32();
  d.num_classes = static_cast<int>(r.u32());
  d.max_len = static_cast<int>(r.u32());
  for (uint32_t i = 0; i < n; ++i) {
    d.labels.push_back(static_cast<int>(r.u32()));
    uint32_t len = r.u32();
    std::vector<int> seq(len);
    for (auto& id : seq) id = static_cast<int>(r.u32());
    d.seqs.push_back(std::move(seq));
  }
  return d;
}

}  // namespace detail

inline constexpr uint32_t kCacheMagic = 0x43444C43;  // "CLDC"
inline constexpr uint16_t kCacheVersion = 1;

inline void save_cache(const DatasetBundle& b, const std::string& path) {
  ByteWriter w;
  w.u32(kCacheMagic);
  w.u16(kCacheVersion);
  w.u8(static_cast<uint8_t>(b.tok));
  w.u32(static_cast<uint32_t>(b.num_classes));
  w.u32(static_cast<uint32_t>(b.vocab.words.size()));
  for (size_t i = 0; i < b.vocab.words.size(); ++i) {
    w.str(b.vocab.words[i]);
    w.u64(b.vocab.freqs[i]);
  }
  detail::write_encoded(w, b.train);
  detail::write_encoded(w, b.dev);
  detail::write_encoded(w, b.test);
  auto body = w.take();
  ByteWriter tail;
  tail.u32(crc32(body));
  body.insert(body.end(), tail.data().begin(), tail.data().end());
  write_file(path, body);
}

inline DatasetBundle load_cache(const std::string& path) {
  auto bytes = read_file(path);
  if (bytes.size() < 10) throw std::runtime_error("cache: truncated");
  uint32_t stored_crc = ByteReader(std::span(bytes).subspan(bytes.size() - 4)).u32();
  if (crc32(std::span(bytes).first(bytes.size() - 4)) != stored_crc)
    throw std::runtime_error("cache: checksum failure");
  std::span<const uint8_t> body_span(bytes.data(), bytes.size() - 4);
  ByteReader r(body_span);
  if (r.u32() != kCacheMagic) throw std::runtime_error("cache: bad magic");
  if (r.u16() != kCacheVersion) throw std::runtime_error("cache: version mismatch");
  DatasetBundle b;
  b.tok = static_cast<TokenizerKind>(r.u8());
  b.num_classes = static_cast<int>(r.u32());
  uint32_t nwords = r.u32();
  for (uint32_t i = 0; i < nwords; ++i) {
    std::string word = r.str();
    uint64_t freq = r.u64();
    b.vocab.index[word] = static_cast<int>(b.vocab.words.size()) + 2;
    b.vocab.words.push_back(std::move(word));
    b.vocab.freqs.push_back(freq);
  }
  b.train = detail::read_encoded(r);
  b.dev = detail::read_encoded(r);
  b.test = detail::read_encoded(r);
  return b;
}

}  // namespace clem
