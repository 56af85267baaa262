#pragma once

#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "clem/adam.hpp"
#include "clem/deploy.hpp"
#include "clem/model.hpp"

namespace clem {

struct TrainConfig {
  EmbedMode mode;
  Arch arch = Arch::Lstm;
  int hidden = 50;
  double tau = 0.9;
  float lr = 0.001f;
  int batch_size = 32;
  int max_epochs = 20;
  int patience = 3;
  uint64_t seed = 1;
  int max_len = 256;
  double fraction = 1.0;
  float clip_norm = 0.0f;  // 0 = off
  bool verbose = false;

  std::string key() const {
    std::ostringstream os;
    os << to_string(mode.kind) << ",v=" << mode.v << ",m=" << mode.m << ",k=" << mode.k
       << ",u=" << mode.u << ",B=" << mode.books << ",K=" << mode.codes
       << ",arch=" << (arch == Arch::Lstm ? "lstm" : "rnn") << ",H=" << hidden
       << ",seed=" << seed << ",frac=" << fraction;
    return os.str();
  }
};

struct EpochStat {
  float train_loss = 0;
  double dev_acc = 0;
};

struct TrainResult {
  Classifier<float> model;  // best-dev-epoch parameters
  std::vector<EpochStat> history;
  int best_epoch = -1;
  double best_dev_acc = 0;
  double wall_seconds = 0;
};

/// Fraction of correct hard-assignment predictions; deterministic, never
/// touches the RNG.
inline double evaluate(const Classifier<float>& model, const EncodedDataset& data) {
  if (data.size() == 0) return 0.0;
  long correct = 0;
  for (size_t i = 0; i < data.size(); ++i)
    if (model.predict(data.seqs[i]) == data.labels[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

/// Diagnostic-only soft evaluation: expected embedding under softmax(a)
/// instead of the argmax one-hot.
inline double evaluate_soft(const Classifier<float>& model, const EncodedDataset& data) {
  if (data.size() == 0) return 0.0;
  const EmbedMode& mode = model.emb.mode;
  long correct = 0;
  std::vector<float> x(static_cast<size_t>(mode.width()));
  std::vector<float> zero_noise(static_cast<size_t>(std::max({mode.k, mode.codes, 1})), 0.0f);
  for (size_t i = 0; i < data.size(); ++i) {
    std::vector<float> h(static_cast<size_t>(model.hidden()), 0.0f);
    std::vector<float> c(h.size(), 0.0f);
    for (int id : data.seqs[i]) {
      if (id == Vocab::kPad) continue;
      std::fill(x.begin(), x.end(), 0.0f);
      if (mode.clustered() && mode.kind != EmbedKind::CC && !mode.is_unique_id(id)) {
        auto t = gumbel_softmax<float>(
            std::span<const float>(model.emb.logits.val.row(mode.cluster_row(id)), mode.k),
            std::span<const float>(zero_noise.data(), static_cast<size_t>(mode.k)), 1.0);
        for (int j = 0; j < mode.k; ++j)
          for (int d = 0; d < mode.m; ++d) x[static_cast<size_t>(d)] += t[j] * model.emb.clusters.val.at(j, d);
        if (mode.kind == EmbedKind::CAE) x[static_cast<size_t>(mode.m)] = model.emb.scalars.val.at(id - 1, 0);
      } else {
        embed_eval_into(model.emb, id, x.data());
      }
      if (model.arch == Arch::Lstm)
        lstm_step_eval(model.lstm.Wx.val, model.lstm.Wh.val, model.lstm.b.val,
                       std::span<const float>(x), std::span<float>(h), std::span<float>(c));
      else
        rnn_step_eval(model.rnn.W.val, model.rnn.b.val, std::span<const float>(x),
                      std::span<float>(h));
    }
    auto logits = head_eval(model.head.W.val, model.head.b.val, std::span<const float>(h));
    if (argmax_row(logits.data(), static_cast<int>(logits.size())) == data.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

namespace detail {

inline void snapshot(Classifier<float>& model, std::vector<Tensor<float>>& store) {
  store.clear();
  for (auto* p : model.params()) store.push_back(p->val);
}

inline void restore(Classifier<float>& model, const std::vector<Tensor<float>>& store) {
  auto params = model.params();
  for (size_t i = 0; i < params.size(); ++i) params[i]->val = store[i];
}

}  // namespace detail

/// Adam on shuffled minibatches with epoch-level dev evaluation; keeps the
/// parameters of the best dev epoch. Deterministic given (config, seed).
inline TrainResult train(const TrainConfig& cfg, const DatasetBundle& data) {
  cfg.mode.validate();
  if (data.train.size() == 0) throw std::invalid_argument("train: empty dataset");
  const auto t0 = std::chrono::steady_clock::now();

  Rng rng(cfg.seed);
  TrainResult res;
  res.model = Classifier<float>::make(cfg.mode, cfg.hidden, data.num_classes, cfg.arch);
  res.model.init(rng);
  auto params = res.model.params();
  AdamState<float> adam;
  adam.lr = cfg.lr;
  adam.init(params);

  std::vector<Tensor<float>> best;
  detail::snapshot(res.model, best);
  int stale = 0;
  std::vector<int> order(data.train.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0;
    long batches = 0;
    Tape<float> tape;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      Batch batch = make_batch(data.train, std::span<const int>(order.data() + start, end - start));
      tape.reset();
      Value<float>* loss = res.model.loss_train(tape, batch, rng, cfg.tau);
      const float lv = loss->val.v[0];
      if (!std::isfinite(lv))
        throw std::runtime_error("train: loss diverged (non-finite) at epoch " +
                                 std::to_string(epoch));
      tape.backward(loss);
      if (cfg.clip_norm > 0) clip_gradients<float>(params, cfg.clip_norm);
      adam_step<float>(params, adam);
      loss_sum += lv;
      ++batches;
    }
    tape.reset();

    EpochStat st;
    st.train_loss = static_cast<float>(loss_sum / std::max<long>(1, batches));
    st.dev_acc = data.dev.size() ? evaluate(res.model, data.dev) : 0.0;
    res.history.push_back(st);
    if (cfg.verbose)
      std::cerr << "epoch " << epoch << " loss " << st.train_loss << " dev " << st.dev_acc
                << "\n";

    if (res.best_epoch < 0 || st.dev_acc > res.best_dev_acc) {
      res.best_epoch = epoch;
      res.best_dev_acc = st.dev_acc;
      detail::snapshot(res.model, best);
      stale = 0;
    } else if (++stale >= cfg.patience) {
      break;
    }
  }
  detail::restore(res.model, best);
  res.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

// ---------------------------------------------------------------------------
// sweeps
// ---------------------------------------------------------------------------

struct SweepRecord {
  TrainConfig cfg;
  long size_bits = 0;
  double size_mb = 0;
  double dev_acc = 0;
  double test_acc = -1;  // -1 = not evaluated
  bool failed = false;
  std::string error;
};

inline std::string sweep_csv_header() {
  return "mode,v,m,k,u,size_bits,size_mb,dev_acc,test_acc,seed";
}

inline std::string to_csv(const SweepRecord& r) {
  std::ostringstream os;
  os << to_string(r.cfg.mode.kind) << ',' << r.cfg.mode.v << ',' << r.cfg.mode.m << ','
     << r.cfg.mode.k << ',' << r.cfg.mode.u << ',' << r.size_bits << ',' << std::fixed
     << std::setprecision(3) << r.size_mb << ',' << std::setprecision(6) << r.dev_acc << ',';
  if (r.test_acc >= 0) os << r.test_acc;
  os << ',' << r.cfg.seed;
  return os.str();
}

/// Trains every config in the grid, attaching the deployed size. Records are
/// appended to out_csv as they finish; configs already present in the file
/// are skipped, so an interrupted sweep resumes where it stopped. A failed
/// run is recorded and the sweep continues.
inline std::vector<SweepRecord> sweep(const std::vector<TrainConfig>& grid,
                                      const DatasetBundle& data, const std::string& out_csv = "",
                                      bool eval_test = true) {
  if (grid.empty()) throw std::invalid_argument("sweep: empty grid");
  std::vector<std::string> done_keys;
  if (!out_csv.empty()) {
    std::ifstream f(out_csv);
    std::string line;
    while (std::getline(f, line)) {
      auto pos = line.rfind("#key=");
      if (pos != std::string::npos) done_keys.push_back(line.substr(pos + 5));
    }
  }
  std::ofstream out;
  if (!out_csv.empty()) {
    bool fresh = done_keys.empty();
    out.open(out_csv, std::ios::app);
    if (fresh) out << sweep_csv_header() << "\n" << std::flush;
  }

  std::vector<SweepRecord> records;
  for (const auto& cfg : grid) {
    if (std::find(done_keys.begin(), done_keys.end(), cfg.key()) != done_keys.end()) continue;
    SweepRecord rec;
    rec.cfg = cfg;
    try {
      TrainResult tr = train(cfg, data);
      auto size = model_size_bits(cfg.mode, cfg.hidden, data.num_classes);
      rec.size_bits = size.total_bits;
      rec.size_mb = size.total_mb_pow2;
      rec.dev_acc = tr.best_dev_acc;
      if (eval_test && data.test.size()) rec.test_acc = evaluate(tr.model, data.test);
    } catch (const std::exception& e) {
      rec.failed = true;
      rec.error = e.what();
    }
    records.push_back(rec);
    if (out.is_open()) {
      if (rec.failed)
        out << "# failed: " << rec.error << " #key=" << cfg.key() << "\n" << std::flush;
      else
        out << to_csv(rec) << " #key=" << cfg.key() << "\n" << std::flush;
    }
  }
  std::sort(records.begin(), records.end(),
            [](const SweepRecord& a, const SweepRecord& b) { return a.size_bits < b.size_bits; });
  return records;
}

/// Fig.-5-style experiment: stratified subsamples of the raw training split
/// at each fraction, fixed dev/test, one train/evaluate per fraction.
inline std::vector<SweepRecord> fraction_experiment(const TrainConfig& base,
                                                    const RawDataset& raw_train,
                                                    const DatasetBundle& fixed,
                                                    const std::vector<double>& fractions,
                                                    uint64_t subsample_seed = 7) {
  std::vector<SweepRecord> records;
  for (double frac : fractions) {
    if (frac <= 0.0 || frac > 1.0) throw std::invalid_argument("fraction_experiment: fraction");
    TrainConfig cfg = base;
    cfg.fraction = frac;
    SweepRecord rec;
    rec.cfg = cfg;
    try {
      RawDataset sub = subsample(raw_train, frac, subsample_seed);
      DatasetBundle data = fixed;
      data.train = encode(sub, fixed.vocab, fixed.tok, cfg.max_len);
      data.train.num_classes = fixed.num_classes;
      cfg.fraction = 1.0;  // train() itself sees the already-subsampled split
      TrainResult tr = train(cfg, data);
      cfg.fraction = frac;
      rec.cfg = cfg;
      auto size = model_size_bits(cfg.mode, cfg.hidden, fixed.num_classes);
      rec.size_bits = size.total_bits;
      rec.size_mb = size.total_mb_pow2;
      rec.dev_acc = tr.best_dev_acc;
      if (fixed.test.size()) rec.test_acc = evaluate(tr.model, fixed.test);
    } catch (const std::exception& e) {
      rec.failed = true;
      rec.error = e.what();
    }
    records.push_back(rec);
  }
  return records;
}

}  // namespace clem
