#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <unistd.h>

#include "clem/deploy.hpp"

using namespace clem;

namespace {

Vocab make_vocab(int v) {
  std::vector<std::vector<std::string>> docs(1);
  for (int i = 0; i < v; ++i)
    for (int rep = 0; rep <= v - i; ++rep) docs[0].push_back("w" + std::to_string(i));
  Vocab vb = build_vocab(docs, v);
  REQUIRE(vb.v() == v);
  return vb;
}

TrainedModel random_trained(const EmbedMode& mode, int H, int C, uint64_t seed) {
  TrainedModel tm;
  tm.model = Classifier<float>::make(mode, H, C, Arch::Lstm);
  Rng rng(seed);
  tm.model.init(rng);
  tm.vocab = make_vocab(mode.v);
  tm.tok = TokenizerKind::Regex;
  tm.max_len = 32;
  return tm;
}

std::vector<int> random_seq(Rng& rng, int v, int max_len) {
  int len = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(max_len)));
  std::vector<int> ids;
  for (int t = 0; t < len; ++t) ids.push_back(1 + static_cast<int>(rng.below(static_cast<uint64_t>(v) + 1)));
  return ids;
}

}  // namespace

TEST_CASE("model sizes reproduce the published SE/CE/CAE/ME numbers") {
  // H=50, two classes throughout
  auto se = model_size_bits({EmbedKind::SE, 3000, 8}, 50, 2);
  CHECK(se.total_mb_pow2 == 0.137);

  auto ce = model_size_bits({EmbedKind::CE, 3000, 5, 50}, 50, 2);
  CHECK(ce.emb_bits == 26000);
  CHECK(ce.total_mb_pow2 == 0.046);
  CHECK_THAT(static_cast<double>(ce.total_bits) / 8.0 / (1 << 20),
             Catch::Matchers::WithinAbs(0.0462, 1e-3));

  auto cae = model_size_bits({EmbedKind::CAE, 3000, 5, 50}, 50, 2);
  CHECK_THAT(static_cast<double>(cae.total_bits) / 8.0 / (1 << 20),
             Catch::Matchers::WithinAbs(0.0584, 1e-3));

  auto me = model_size_bits({EmbedKind::ME, 3000, 5, 50, 300}, 50, 2);
  CHECK_THAT(static_cast<double>(me.total_bits) / 8.0 / (1 << 20),
             Catch::Matchers::WithinAbs(0.051, 1.1e-3));
}

TEST_CASE("size accounting details") {
  // 26000 embedding bits is 3250 bytes exactly
  auto ce = model_size_bits({EmbedKind::CE, 3000, 5, 50}, 50, 2);
  CHECK(ce.emb_bits / 8 == 3250);
  // o for d=5, H=50, C=2: 4*(50*55+50) + 50*2 + 2
  CHECK(other_param_count(5, 50, 2) == 11302);
  CHECK(ce.other_bits == 11302L * 32);
  // k=1 clusters cost zero pointer bits
  auto k1 = model_size_bits({EmbedKind::CE, 1000, 4, 1}, 10, 2);
  CHECK(k1.emb_bits == 4 * 32);
  // decimal-MB convention differs from the 2^20 one
  CHECK(ce.total_mb_dec >= ce.total_mb_pow2);
}

TEST_CASE("pack_bits: worked example and k=1 degenerate case") {
  std::vector<uint32_t> ptr{1, 0, 1, 1};
  auto packed = pack_bits(ptr, 1);
  REQUIRE(packed.size() == 1);
  CHECK(packed[0] == 13);  // 0b00001101, LSB-first
  CHECK(unpack_bits(packed, 4, 1) == ptr);

  auto empty = pack_bits(ptr, 0);
  CHECK(empty.empty());
  CHECK(unpack_bits(empty, 4, 0) == std::vector<uint32_t>{0, 0, 0, 0});
}

TEST_CASE("pack_bits: round-trips at every width") {
  Rng rng(31);
  for (int bits = 1; bits <= 12; ++bits) {
    std::vector<uint32_t> vals;
    for (int i = 0; i < 100; ++i)
      vals.push_back(static_cast<uint32_t>(rng.below(1ull << bits)));
    auto packed = pack_bits(vals, bits);
    CHECK(packed.size() == (vals.size() * static_cast<size_t>(bits) + 7) / 8);
    CHECK(unpack_bits(packed, vals.size(), bits) == vals);
  }
}

TEST_CASE("bits_for") {
  CHECK(bits_for(1) == 0);
  CHECK(bits_for(2) == 1);
  CHECK(bits_for(3) == 2);
  CHECK(bits_for(50) == 6);
  CHECK(bits_for(256) == 8);
  CHECK(bits_for(257) == 9);
}

TEST_CASE("finalize preserves every prediction exactly, all modes") {
  std::vector<EmbedMode> modes{
      {EmbedKind::SE, 12, 4},
      {EmbedKind::CE, 12, 4, 3},
      {EmbedKind::CAE, 12, 4, 3},
      {EmbedKind::ME, 12, 4, 3, 4},
      {EmbedKind::CC, 12, 4, 0, 0, 2, 3},
  };
  Rng rng(41);
  for (const auto& mode : modes) {
    CAPTURE(to_string(mode.kind));
    auto tm = random_trained(mode, 6, 3, 42);
    auto cm = finalize(tm);
    // exhaustive single-word sequences plus random longer ones
    for (int id = 1; id <= mode.v + 1; ++id) {
      std::vector<int> one{id};
      CHECK(infer_ids(cm, one).label == tm.model.predict(one));
    }
    for (int trial = 0; trial < 30; ++trial) {
      auto seq = random_seq(rng, mode.v, 20);
      auto got = infer_ids(cm, seq);
      auto logits = tm.model.logits_eval(seq);
      CHECK(got.label == argmax_row(logits.data(), static_cast<int>(logits.size())));
      std::vector<double> lp(logits.size());
      log_softmax_row(logits.data(), static_cast<int>(logits.size()), lp.data());
      for (size_t i = 0; i < lp.size(); ++i)
        CHECK(got.probs[i] == static_cast<float>(std::exp(lp[i])));  // bit-identical path
    }
  }
}

TEST_CASE("finalize rejects RNN classifiers") {
  TrainedModel tm;
  tm.model = Classifier<float>::make({EmbedKind::CE, 4, 2, 2}, 3, 2, Arch::Rnn);
  CHECK_THROWS_AS(finalize(tm), std::invalid_argument);
}

TEST_CASE("compact model serialization round-trips byte-identically") {
  std::vector<EmbedMode> modes{
      {EmbedKind::SE, 9, 3},
      {EmbedKind::CE, 9, 3, 2},
      {EmbedKind::CAE, 9, 3, 5},
      {EmbedKind::ME, 9, 3, 2, 3},
      {EmbedKind::CC, 9, 3, 0, 0, 3, 4},
  };
  uint64_t seed = 50;
  for (const auto& mode : modes) {
    CAPTURE(to_string(mode.kind));
    auto cm = finalize(random_trained(mode, 4, 2, seed++));
    auto bytes = serialize(cm);
    auto back = deserialize(bytes);
    CHECK(serialize(back) == bytes);
    CHECK(back.words == cm.words);
    CHECK(back.mode.kind == cm.mode.kind);
    CHECK(back.pointers == cm.pointers);
    CHECK(back.Wx.v == cm.Wx.v);
  }
}

TEST_CASE("deserialize: corruption, truncation, magic and version errors") {
  auto cm = finalize(random_trained({EmbedKind::CE, 6, 3, 2}, 4, 2, 60));
  auto bytes = serialize(cm);

  auto corrupt = bytes;
  corrupt[bytes.size() / 2] ^= 0x5A;
  CHECK_THROWS_WITH(deserialize(corrupt), Catch::Matchers::ContainsSubstring("checksum"));

  std::vector<uint8_t> tiny(bytes.begin(), bytes.begin() + 6);
  CHECK_THROWS_WITH(deserialize(tiny), Catch::Matchers::ContainsSubstring("truncated"));

  auto badmagic = bytes;
  badmagic[0] ^= 0xFF;
  // fix up the trailer so the magic check is what fires
  std::span<const uint8_t> body(badmagic.data(), badmagic.size() - 4);
  uint32_t crc = crc32(body);
  for (int i = 0; i < 4; ++i)
    badmagic[badmagic.size() - 4 + static_cast<size_t>(i)] = static_cast<uint8_t>(crc >> (8 * i));
  CHECK_THROWS_WITH(deserialize(badmagic), Catch::Matchers::ContainsSubstring("magic"));

  auto badver = bytes;
  badver[4] = 0xEE;
  std::span<const uint8_t> body2(badver.data(), badver.size() - 4);
  crc = crc32(body2);
  for (int i = 0; i < 4; ++i)
    badver[badver.size() - 4 + static_cast<size_t>(i)] = static_cast<uint8_t>(crc >> (8 * i));
  CHECK_THROWS_WITH(deserialize(badver), Catch::Matchers::ContainsSubstring("version"));
}

TEST_CASE("infer: raw text path, OOV words, empty input") {
  auto tm = random_trained({EmbedKind::CE, 12, 4, 3}, 6, 2, 70);
  auto cm = finalize(tm);

  auto res = infer(cm, "w0 w1 w2");
  CHECK(res.probs.size() == 2);
  double sum = 0;
  for (float p : res.probs) sum += p;
  CHECK_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-5));

  // OOV words behave exactly like UNK
  auto oov = infer(cm, "zzz qqq");
  std::vector<int> unk2{Vocab::kUnk, Vocab::kUnk};
  CHECK(oov.probs == infer_ids(cm, unk2).probs);

  // empty text becomes a single UNK
  auto empty = infer(cm, "");
  std::vector<int> unk1{Vocab::kUnk};
  CHECK(empty.probs == infer_ids(cm, unk1).probs);
}

TEST_CASE("infer: respects the recorded max_len") {
  auto tm = random_trained({EmbedKind::CE, 12, 4, 3}, 6, 2, 71);
  tm.max_len = 2;
  auto cm = finalize(tm);
  auto truncated = infer(cm, "w0 w1 w2 w3 w4");
  auto direct = infer(cm, "w0 w1");
  CHECK(truncated.probs == direct.probs);
}

TEST_CASE("trained model save/load round-trip") {
  auto tm = random_trained({EmbedKind::CAE, 8, 3, 2}, 4, 3, 80);
  auto path = (std::filesystem::temp_directory_path() /
               ("clem_trained_" + std::to_string(::getpid()) + ".bin"))
                  .string();
  save_trained(tm, path);
  auto back = load_trained(path);
  CHECK(back.vocab.words == tm.vocab.words);
  CHECK(back.max_len == tm.max_len);
  CHECK(back.model.emb.logits.val.v == tm.model.emb.logits.val.v);
  CHECK(back.model.head.W.val.v == tm.model.head.W.val.v);
  Rng rng(81);
  for (int trial = 0; trial < 20; ++trial) {
    auto seq = random_seq(rng, 8, 10);
    CHECK(back.model.predict(seq) == tm.model.predict(seq));
  }
  // corrupting a payload byte trips the checksum
  auto bytes = read_file(path);
  bytes[12] ^= 0x01;
  write_file(path, bytes);
  CHECK_THROWS_WITH(load_trained(path), Catch::Matchers::ContainsSubstring("checksum"));
  std::filesystem::remove(path);
}

TEST_CASE("serialized compact size tracks the bit accounting for the embedding") {
  // the dominant term (packed pointers + cluster floats) must match the
  // Appendix-style accounting; headers, vocab text and LSTM floats are extra
  EmbedMode mode{EmbedKind::CE, 500, 4, 8};
  auto cm = finalize(random_trained(mode, 4, 2, 90));
  auto bytes = serialize(cm);
  auto pc = param_counts(mode);
  long packed_ptr_bytes = ((mode.v + 1) * pc.ptr_bits + 7) / 8;
  long cluster_bytes = pc.emb_floats * 4;
  CHECK(static_cast<long>(bytes.size()) > packed_ptr_bytes + cluster_bytes);
  auto o_bytes = other_param_count(mode.width(), 4, 2) * 4;
  // overhead beyond payload+weights stays modest (vocab strings dominate it)
  long payload = packed_ptr_bytes + cluster_bytes + o_bytes;
  CHECK(static_cast<long>(bytes.size()) < payload + 16 * mode.v + 1024);
}
