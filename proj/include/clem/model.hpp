#pragma once

#include <span>
#include <vector>

#include "clem/embedder.hpp"
#include "clem/sequence.hpp"
#include "clem/tape.hpp"

namespace clem {

enum class Arch : uint8_t { Lstm = 0, Rnn = 1 };

/// A padded minibatch: ids is B x T row-major, PAD-filled to the batch max
/// length; labels length B.
struct Batch {
  int B = 0, T = 0;
  std::vector<int> ids;
  std::vector<int> labels;

  int id_at(int r, int t) const { return ids[static_cast<size_t>(r) * T + t]; }
};

inline Batch make_batch(const EncodedDataset& data, std::span<const int> indices) {
  Batch b;
  b.B = static_cast<int>(indices.size());
  b.T = 1;
  for (int i : indices) b.T = std::max(b.T, static_cast<int>(data.seqs[static_cast<size_t>(i)].size()));
  b.ids.assign(static_cast<size_t>(b.B) * b.T, Vocab::kPad);
  for (int r = 0; r < b.B; ++r) {
    const auto& seq = data.seqs[static_cast<size_t>(indices[static_cast<size_t>(r)])];
    std::copy(seq.begin(), seq.end(), b.ids.begin() + static_cast<size_t>(r) * b.T);
    b.labels.push_back(data.labels[static_cast<size_t>(indices[static_cast<size_t>(r)])]);
  }
  return b;
}

/// Full classifier: embedder -> (LSTM | RNN) -> softmax head.
template <class T = float>
struct Classifier {
  Arch arch = Arch::Lstm;
  EmbedderParams<T> emb;
  LstmParams<T> lstm;
  RnnParams<T> rnn;
  HeadParams<T> head;

  static Classifier make(const EmbedMode& mode, int hidden, int num_classes,
                         Arch arch = Arch::Lstm) {
    Classifier c;
    c.arch = arch;
    c.emb = EmbedderParams<T>::make(mode);
    if (arch == Arch::Lstm)
      c.lstm = LstmParams<T>::make(mode.width(), hidden);
    else
      c.rnn = RnnParams<T>::make(mode.width(), hidden);
    c.head = HeadParams<T>::make(hidden, num_classes);
    return c;
  }

  int hidden() const { return arch == Arch::Lstm ? lstm.H : rnn.H; }
  int num_classes() const { return head.C; }

  void init(Rng& rng) {
    emb.init(rng);
    if (arch == Arch::Lstm)
      lstm.init(rng);
    else
      rnn.init(rng);
    head.init(rng);
  }

  std::vector<Value<T>*> params() {
    std::vector<Value<T>*> out = emb.params();
    auto seq = arch == Arch::Lstm ? lstm.params() : rnn.params();
    out.insert(out.end(), seq.begin(), seq.end());
    auto hd = head.params();
    out.insert(out.end(), hd.begin(), hd.end());
    return out;
  }

  template <class U>
  Classifier<U> cast() const {
    Classifier<U> out;
    out.arch = arch;
    out.emb = emb.template cast<U>();
    out.lstm = lstm.template cast<U>();
    out.rnn = rnn.template cast<U>();
    out.head = head.template cast<U>();
    return out;
  }

  /// Training forward: fresh Gumbel noise per token, PAD masked out of the
  /// recurrence; returns label logits B x C on the tape.
  Value<T>* forward_train(Tape<T>& tape, const Batch& batch, Rng& rng, double tau) {
    const int B = batch.B, H = hidden();
    Value<T>* h = tape.make(Tensor<T>({B, H}));
    Value<T>* c = arch == Arch::Lstm ? tape.make(Tensor<T>({B, H})) : nullptr;
    std::vector<int> column(static_cast<size_t>(B));
    std::vector<uint8_t> mask(static_cast<size_t>(B));
    for (int t = 0; t < batch.T; ++t) {
      for (int r = 0; r < B; ++r) {
        column[static_cast<size_t>(r)] = batch.id_at(r, t);
        mask[static_cast<size_t>(r)] = batch.id_at(r, t) != Vocab::kPad;
      }
      Value<T>* x = embed_train(tape, emb, column, rng, tau);
      if (arch == Arch::Lstm) {
        auto s = lstm_step(tape, lstm, x, h, c, mask);
        h = s.h;
        c = s.c;
      } else {
        h = rnn_step(tape, rnn, x, h, mask);
      }
    }
    return affine(tape, h, &head.W, &head.b);
  }

  Value<T>* loss_train(Tape<T>& tape, const Batch& batch, Rng& rng, double tau) {
    Value<T>* logits = forward_train(tape, batch, rng, tau);
    return softmax_cross_entropy_mean(tape, logits, batch.labels);
  }

  /// Deterministic evaluation forward for one sequence (hard cluster
  /// assignments, no RNG, no tape). Returns the final hidden state.
  std::vector<T> encode_eval(std::span<const int> ids) const {
    if (ids.empty()) throw std::invalid_argument("encode_eval: empty sequence");
    const int H = hidden();
    std::vector<T> h(static_cast<size_t>(H), T(0));
    std::vector<T> c(static_cast<size_t>(H), T(0));
    std::vector<T> x(static_cast<size_t>(emb.mode.width()));
    for (int id : ids) {
      if (id == Vocab::kPad) continue;
      embed_eval_into(emb, id, x.data());
      if (arch == Arch::Lstm)
        lstm_step_eval(lstm.Wx.val, lstm.Wh.val, lstm.b.val, std::span<const T>(x),
                       std::span<T>(h), std::span<T>(c));
      else
        rnn_step_eval(rnn.W.val, rnn.b.val, std::span<const T>(x), std::span<T>(h));
    }
    return h;
  }

  std::vector<T> logits_eval(std::span<const int> ids) const {
    auto h = encode_eval(ids);
    return head_eval(head.W.val, head.b.val, std::span<const T>(h));
  }

  int predict(std::span<const int> ids) const {
    auto l = logits_eval(ids);
    return argmax_row(l.data(), static_cast<int>(l.size()));
  }
};

}  // namespace clem
