#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "clem/model_io.hpp"

namespace clem {

// ---------------------------------------------------------------------------
// size accounting
// ---------------------------------------------------------------------------

/// LSTM + softmax-head parameter count for input width d, hidden H, classes C.
inline long other_param_count(int d, int H, int C) {
  return 4L * (static_cast<long>(H) * (d + H) + H) + static_cast<long>(H) * C + C;
}

/// Exact bit accounting: pointers at ceil(log2 k) bits each, every float at
/// 32 bits. MB reported under both the 2^20-byte convention (matches the
/// published model-size columns) and the 10^6 convention.
struct SizeReport {
  long emb_bits = 0;    // pointer bits + embedding floats
  long other_bits = 0;  // o * 32
  long total_bits = 0;
  double emb_mb_pow2 = 0, total_mb_pow2 = 0;
  double emb_mb_dec = 0, total_mb_dec = 0;

  static double round3(double x) { return std::round(x * 1000.0) / 1000.0; }
};

inline SizeReport model_size_bits(const EmbedMode& mode, long o_other_params) {
  auto pc = param_counts(mode);
  SizeReport r;
  r.emb_bits = pc.emb_floats * 32 + pc.ptr_entries * pc.ptr_bits;
  r.other_bits = o_other_params * 32;
  r.total_bits = r.emb_bits + r.other_bits;
  auto mb2 = [](long bits) { return static_cast<double>(bits) / 8.0 / (1 << 20); };
  auto mb10 = [](long bits) { return static_cast<double>(bits) / 8.0 / 1e6; };
  r.emb_mb_pow2 = SizeReport::round3(mb2(r.emb_bits));
  r.total_mb_pow2 = SizeReport::round3(mb2(r.total_bits));
  r.emb_mb_dec = SizeReport::round3(mb10(r.emb_bits));
  r.total_mb_dec = SizeReport::round3(mb10(r.total_bits));
  return r;
}

inline SizeReport model_size_bits(const EmbedMode& mode, int H, int C) {
  return model_size_bits(mode, other_param_count(mode.width(), H, C));
}

// ---------------------------------------------------------------------------
// compact model
// ---------------------------------------------------------------------------

inline constexpr uint32_t kCompactMagic = 0x4D454C43;  // "CLEM"
inline constexpr uint16_t kCompactVersion = 1;

/// Deployment artifact: cluster logits replaced by argmax pointers. Pointer
/// tables cover UNK plus every non-unique corpus word, in word-id order.
struct CompactModel {
  EmbedMode mode;
  TokenizerKind tok = TokenizerKind::Regex;
  int max_len = 0;
  int H = 0, C = 0;

  std::vector<std::vector<uint32_t>> pointers;  // one table (CE/CAE/ME), books tables (CC)
  Tensor<float> clusters;                       // k x m; SE: (v+1) x m full table
  Tensor<float> scalars;                        // CAE: (v+1) x 1
  Tensor<float> unique;                         // ME: u x m
  std::vector<Tensor<float>> books;             // CC: codes x m each
  Tensor<float> Wx, Wh, lb;                     // LSTM
  Tensor<float> headW, headb;
  std::vector<std::string> words;  // id order (ids 2..v+1)

  /// Embedding lookup through the pointer table; exact match for embed_eval.
  void embed(int id, float* out) const {
    const int m = mode.m;
    std::fill(out, out + mode.width(), 0.0f);
    if (id == Vocab::kPad) return;
    switch (mode.kind) {
      case EmbedKind::SE: {
        const float* src = clusters.row(id - 1);
        std::copy(src, src + m, out);
        break;
      }
      case EmbedKind::CE:
      case EmbedKind::CAE:
      case EmbedKind::ME: {
        if (mode.is_unique_id(id)) {
          const float* src = unique.row(id - 2);
          std::copy(src, src + m, out);
        } else {
          const uint32_t j = pointers[0][static_cast<size_t>(mode.cluster_row(id))];
          const float* src = clusters.row(static_cast<int>(j));
          std::copy(src, src + m, out);
        }
        if (mode.kind == EmbedKind::CAE) out[m] = scalars.at(id - 1, 0);
        break;
      }
      case EmbedKind::CC: {
        for (int b = 0; b < mode.books; ++b) {
          const uint32_t j = pointers[static_cast<size_t>(b)][static_cast<size_t>(id - 1)];
          const float* src = books[static_cast<size_t>(b)].row(static_cast<int>(j));
          for (int d = 0; d < m; ++d) out[d] += src[d];
        }
        break;
      }
    }
  }

  int word_id(const std::string& w) const {
    for (size_t i = 0; i < words.size(); ++i)
      if (words[i] == w) return static_cast<int>(i) + 2;
    return Vocab::kUnk;
  }
};

/// Pointerize a trained model: argmax the logits, drop them. Lossless with
/// respect to evaluation-time behavior.
inline CompactModel finalize(const TrainedModel& tm) {
  const Classifier<float>& c = tm.model;
  if (c.arch != Arch::Lstm) throw std::invalid_argument("finalize: LSTM classifiers only");
  CompactModel cm;
  cm.mode = c.emb.mode;
  cm.tok = tm.tok;
  cm.max_len = tm.max_len;
  cm.H = c.hidden();
  cm.C = c.num_classes();
  cm.pointers = pointer_tables(c.emb);
  switch (cm.mode.kind) {
    case EmbedKind::SE:
      cm.clusters = c.emb.table.val;
      break;
    case EmbedKind::CE:
      cm.clusters = c.emb.clusters.val;
      break;
    case EmbedKind::CAE:
      cm.clusters = c.emb.clusters.val;
      cm.scalars = c.emb.scalars.val;
      break;
    case EmbedKind::ME:
      cm.clusters = c.emb.clusters.val;
      cm.unique = c.emb.table.val;
      break;
    case EmbedKind::CC:
      for (const auto& b : c.emb.books) cm.books.push_back(b.val);
      break;
  }
  cm.Wx = c.lstm.Wx.val;
  cm.Wh = c.lstm.Wh.val;
  cm.lb = c.lstm.b.val;
  cm.headW = c.head.W.val;
  cm.headb = c.head.b.val;
  cm.words = tm.vocab.words;
  return cm;
}

// ---------------------------------------------------------------------------
// binary format
// ---------------------------------------------------------------------------

inline std::vector<uint8_t> serialize(const CompactModel& cm) {
  ByteWriter w;
  w.u32(kCompactMagic);
  w.u16(kCompactVersion);
  w.u8(static_cast<uint8_t>(cm.mode.kind));
  w.u8(static_cast<uint8_t>(cm.tok));
  w.u32(static_cast<uint32_t>(cm.mode.v));
  w.u32(static_cast<uint32_t>(cm.mode.m));
  w.u32(static_cast<uint32_t>(cm.mode.k));
  w.u32(static_cast<uint32_t>(cm.mode.u));
  w.u32(static_cast<uint32_t>(cm.mode.books));
  w.u32(static_cast<uint32_t>(cm.mode.codes));
  w.u32(static_cast<uint32_t>(cm.H));
  w.u32(static_cast<uint32_t>(cm.C));
  w.u32(static_cast<uint32_t>(cm.max_len));
  // pointer tables, bit-packed
  const int bits = cm.mode.kind == EmbedKind::CC ? bits_for(cm.mode.codes) : bits_for(cm.mode.k);
  w.u32(static_cast<uint32_t>(cm.pointers.size()));
  for (const auto& tab : cm.pointers) {
    w.u32(static_cast<uint32_t>(tab.size()));
    auto packed = pack_bits(tab, bits);
    w.bytes(packed);
  }
  w.tensor(cm.clusters);
  w.tensor(cm.scalars);
  w.tensor(cm.unique);
  w.u32(static_cast<uint32_t>(cm.books.size()));
  for (const auto& b : cm.books) w.tensor(b);
  w.tensor(cm.Wx);
  w.tensor(cm.Wh);
  w.tensor(cm.lb);
  w.tensor(cm.headW);
  w.tensor(cm.headb);
  w.u32(static_cast<uint32_t>(cm.words.size()));
  for (const auto& word : cm.words) w.str(word);
  auto body = w.take();
  ByteWriter tail;
  tail.u32(crc32(body));
  body.insert(body.end(), tail.data().begin(), tail.data().end());
  return body;
}

inline CompactModel deserialize(std::span<const uint8_t> bytes) {
  if (bytes.size() < 10) throw std::runtime_error("compact model: truncated buffer");
  uint32_t stored = ByteReader(bytes.subspan(bytes.size() - 4)).u32();
  if (crc32(bytes.first(bytes.size() - 4)) != stored)
    throw std::runtime_error("compact model: checksum failure");
  ByteReader r(bytes.first(bytes.size() - 4));
  if (r.u32() != kCompactMagic) throw std::runtime_error("compact model: bad magic");
  if (r.u16() != kCompactVersion) throw std::runtime_error("compact model: version mismatch");
  CompactModel cm;
  cm.mode.kind = static_cast<EmbedKind>(r.u8());
  cm.tok = static_cast<TokenizerKind>(r.u8());
  cm.mode.v = static_cast<int>(r.u32());
  cm.mode.m = static_cast<int>(r.u32());
  cm.mode.k = static_cast<int>(r.u32());
  cm.mode.u = static_cast<int>(r.u32());
  cm.mode.books = static_cast<int>(r.u32());
  cm.mode.codes = static_cast<int>(r.u32());
  cm.H = static_cast<int>(r.u32());
  cm.C = static_cast<int>(r.u32());
  cm.max_len = static_cast<int>(r.u32());
  const int bits = cm.mode.kind == EmbedKind::CC ? bits_for(cm.mode.codes) : bits_for(cm.mode.k);
  uint32_t ntab = r.u32();
  for (uint32_t t = 0; t < ntab; ++t) {
    uint32_t entries = r.u32();
    size_t nbytes = (static_cast<size_t>(entries) * bits + 7) / 8;
    auto raw = r.raw(nbytes);
    cm.pointers.push_back(unpack_bits(raw, entries, bits));
  }
  cm.clusters = r.tensor();
  cm.scalars = r.tensor();
  cm.unique = r.tensor();
  uint32_t nbooks = r.u32();
  for (uint32_t b = 0; b < nbooks; ++b) cm.books.push_back(r.tensor());
  cm.Wx = r.tensor();
  cm.Wh = r.tensor();
  cm.lb = r.tensor();
  cm.headW = r.tensor();
  cm.headb = r.tensor();
  uint32_t nwords = r.u32();
  for (uint32_t i = 0; i < nwords; ++i) cm.words.push_back(r.str());
  return cm;
}

// ---------------------------------------------------------------------------
// standalone inference
// ---------------------------------------------------------------------------

struct InferResult {
  int label = 0;
  std::vector<float> probs;
};

inline InferResult infer_ids(const CompactModel& cm, std::span<const int> ids) {
  std::vector<float> h(static_cast<size_t>(cm.H), 0.0f);
  std::vector<float> c(static_cast<size_t>(cm.H), 0.0f);
  std::vector<float> x(static_cast<size_t>(cm.mode.width()));
  for (int id : ids) {
    if (id == Vocab::kPad) continue;
    cm.embed(id, x.data());
    lstm_step_eval(cm.Wx, cm.Wh, cm.lb, std::span<const float>(x), std::span<float>(h),
                   std::span<float>(c));
  }
  auto logits = head_eval(cm.headW, cm.headb, std::span<const float>(h));
  std::vector<double> lp(logits.size());
  log_softmax_row(logits.data(), static_cast<int>(logits.size()), lp.data());
  InferResult res;
  res.label = argmax_row(logits.data(), static_cast<int>(logits.size()));
  for (double l : lp) res.probs.push_back(static_cast<float>(std::exp(l)));
  return res;
}

/// Tokenizes with the model's recorded tokenizer, maps OOV to UNK, runs the
/// packed model. Empty text becomes [UNK].
inline InferResult infer(const CompactModel& cm, std::string_view text) {
  auto toks = tokenize(text, cm.tok, cm.max_len);
  std::vector<int> ids;
  std::unordered_map<std::string, int> index;
  for (size_t i = 0; i < cm.words.size(); ++i) index[cm.words[i]] = static_cast<int>(i) + 2;
  for (const auto& t : toks) {
    auto it = index.find(t);
    ids.push_back(it == index.end() ? Vocab::kUnk : it->second);
    if (cm.max_len > 0 && static_cast<int>(ids.size()) >= cm.max_len) break;
  }
  if (ids.empty()) ids.push_back(Vocab::kUnk);
  return infer_ids(cm, ids);
}

}  // namespace clem
