#pragma once

#include <string>

#include "clem/model.hpp"
#include "clem/serialize.hpp"

namespace clem {

inline constexpr uint32_t kTrainedMagic = 0x52544C43;  // "CLTR"
inline constexpr uint16_t kTrainedVersion = 1;

/// A trained (pre-finalization) model: full parameters including cluster
/// logits, plus the vocabulary needed to run on raw text.
struct TrainedModel {
  Classifier<float> model;
  Vocab vocab;
  TokenizerKind tok = TokenizerKind::Regex;
  int max_len = 0;
};

inline std::vector<uint8_t> serialize_trained(const TrainedModel& tm) {
  ByteWriter w;
  w.u32(kTrainedMagic);
  w.u16(kTrainedVersion);
  const auto& c = tm.model;
  w.u8(static_cast<uint8_t>(c.arch));
  w.u8(static_cast<uint8_t>(c.emb.mode.kind));
  w.u8(static_cast<uint8_t>(tm.tok));
  w.u32(static_cast<uint32_t>(c.emb.mode.v));
  w.u32(static_cast<uint32_t>(c.emb.mode.m));
  w.u32(static_cast<uint32_t>(c.emb.mode.k));
  w.u32(static_cast<uint32_t>(c.emb.mode.u));
  w.u32(static_cast<uint32_t>(c.emb.mode.books));
  w.u32(static_cast<uint32_t>(c.emb.mode.codes));
  w.u32(static_cast<uint32_t>(c.hidden()));
  w.u32(static_cast<uint32_t>(c.num_classes()));
  w.u32(static_cast<uint32_t>(tm.max_len));
  auto params = const_cast<Classifier<float>&>(c).params();
  w.u32(static_cast<uint32_t>(params.size()));
  for (auto* p : params) w.tensor(p->val);
  w.u32(static_cast<uint32_t>(tm.vocab.words.size()));
  for (size_t i = 0; i < tm.vocab.words.size(); ++i) {
    w.str(tm.vocab.words[i]);
    w.u64(tm.vocab.freqs[i]);
  }
  auto body = w.take();
  ByteWriter tail;
  tail.u32(crc32(body));
  body.insert(body.end(), tail.data().begin(), tail.data().end());
  return body;
}

inline TrainedModel deserialize_trained(std::span<const uint8_t> bytes) {
  if (bytes.size() < 10) throw std::runtime_error("trained model: truncated");
  uint32_t stored = ByteReader(bytes.subspan(bytes.size() - 4)).u32();
  if (crc32(bytes.first(bytes.size() - 4)) != stored)
    throw std::runtime_error("trained model: checksum failure");
  ByteReader r(bytes.first(bytes.size() - 4));
  if (r.u32() != kTrainedMagic) throw std::runtime_error("trained model: bad magic");
  if (r.u16() != kTrainedVersion) throw std::runtime_error("trained model: version mismatch");
  TrainedModel tm;
  Arch arch = static_cast<Arch>(r.u8());
  EmbedMode mode;
  mode.kind = static_cast<EmbedKind>(r.u8());
  tm.tok = static_cast<TokenizerKind>(r.u8());
  mode.v = static_cast<int>(r.u32());
  mode.m = static_cast<int>(r.u32());
  mode.k = static_cast<int>(r.u32());
  mode.u = static_cast<int>(r.u32());
  mode.books = static_cast<int>(r.u32());
  mode.codes = static_cast<int>(r.u32());
  int H = static_cast<int>(r.u32());
  int C = static_cast<int>(r.u32());
  tm.max_len = static_cast<int>(r.u32());
  tm.model = Classifier<float>::make(mode, H, C, arch);
  auto params = tm.model.params();
  uint32_t np = r.u32();
  if (np != params.size()) throw std::runtime_error("trained model: parameter count mismatch");
  for (auto* p : params) {
    Tensor<float> t = r.tensor();
    if (t.shape != p->val.shape) throw std::runtime_error("trained model: tensor shape mismatch");
    p->val = std::move(t);
  }
  uint32_t nwords = r.u32();
  for (uint32_t i = 0; i < nwords; ++i) {
    std::string word = r.str();
    uint64_t freq = r.u64();
    tm.vocab.index[word] = static_cast<int>(tm.vocab.words.size()) + 2;
    tm.vocab.words.push_back(std::move(word));
    tm.vocab.freqs.push_back(freq);
  }
  return tm;
}

inline void save_trained(const TrainedModel& tm, const std::string& path) {
  auto bytes = serialize_trained(tm);
  write_file(path, bytes);
}

inline TrainedModel load_trained(const std::string& path) {
  auto bytes = read_file(path);
  return deserialize_trained(bytes);
}

}  // namespace clem
