// clem: train, deploy and analyze memory-budgeted text classifiers.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "clem/analysis.hpp"
#include "clem/clem.hpp"

using namespace clem;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

EmbedKind parse_kind(const std::string& s) { return embed_kind_from(s); }

struct DataOpts {
  std::string path;
  int vocab = 3000;
  std::string tokenizer = "regex";
  int max_len = 256;
  int dev = 0;  // 0: 10% of train
  uint64_t split_seed = 7;
};

void add_data_opts(CLI::App* cmd, DataOpts& d) {
  cmd->add_option("--dataset", d.path, "dataset directory (train.csv/test.csv, or train/ and test/ with pos/ neg/) or a single csv")->required();
  cmd->add_option("--vocab", d.vocab, "vocabulary size v");
  cmd->add_option("--tokenizer", d.tokenizer, "regex|simple")->check(CLI::IsMember({"regex", "simple"}));
  cmd->add_option("--max-len", d.max_len, "token cap per example");
  cmd->add_option("--dev", d.dev, "dev-split size (default: 10% of train)");
}

TokenizerKind tok_from(const std::string& s) {
  return s == "simple" ? TokenizerKind::Simple : TokenizerKind::Regex;
}

std::pair<RawDataset, RawDataset> load_raw(const std::string& path) {
  if (fs::is_regular_file(path)) return {load_csv(path), RawDataset{}};
  if (fs::exists(path + "/train.csv")) {
    RawDataset test;
    if (fs::exists(path + "/test.csv")) test = load_csv(path + "/test.csv");
    return {load_csv(path + "/train.csv"), test};
  }
  if (fs::is_directory(path + "/train/pos")) {
    RawDataset test;
    if (fs::is_directory(path + "/test/pos")) test = load_review_dirs(path + "/test");
    return {load_review_dirs(path + "/train"), test};
  }
  if (fs::is_directory(path + "/pos")) return {load_review_dirs(path), RawDataset{}};
  throw std::runtime_error("unrecognized dataset layout: " + path);
}

DatasetBundle make_bundle(const DataOpts& d, RawDataset* raw_train_out = nullptr) {
  auto [train_raw, test_raw] = load_raw(d.path);
  int n_dev = d.dev > 0 ? d.dev : std::max<int>(1, static_cast<int>(train_raw.records.size()) / 10);
  auto [tr, dev] = split_dev(train_raw, n_dev, d.split_seed);
  if (raw_train_out) *raw_train_out = tr;
  TokenizerKind tok = tok_from(d.tokenizer);
  std::vector<std::vector<std::string>> docs;
  for (const auto& r : tr.records) docs.push_back(tokenize(r.text, tok, d.max_len));
  DatasetBundle b;
  b.vocab = build_vocab(docs, d.vocab);
  b.num_classes = train_raw.num_classes;
  b.tok = tok;
  b.train = encode(tr, b.vocab, tok, d.max_len);
  b.dev = encode(dev, b.vocab, tok, d.max_len);
  if (!test_raw.records.empty()) b.test = encode(test_raw, b.vocab, tok, d.max_len);
  return b;
}

struct ModeOpts {
  std::string mode = "ce";
  int dim = 5;
  int clusters = 50;
  int unique = 300;
  int books = 8;
  int codes = 8;
};

void add_mode_opts(CLI::App* cmd, ModeOpts& m) {
  cmd->add_option("--mode", m.mode, "se|ce|cae|me|cc")
      ->check(CLI::IsMember({"se", "ce", "cae", "me", "cc"}));
  cmd->add_option("--dim", m.dim, "embedding dimension m");
  cmd->add_option("--clusters", m.clusters, "cluster count k");
  cmd->add_option("--unique", m.unique, "unique rows u (me)");
  cmd->add_option("--books", m.books, "codebook count (cc)");
  cmd->add_option("--codes", m.codes, "codes per book (cc)");
}

EmbedMode build_mode(const ModeOpts& m, int v) {
  EmbedMode mode;
  mode.kind = parse_kind(m.mode);
  mode.v = v;
  mode.m = m.dim;
  if (mode.kind == EmbedKind::CC) {
    mode.books = m.books;
    mode.codes = m.codes;
  } else if (mode.kind != EmbedKind::SE) {
    mode.k = m.clusters;
    if (mode.kind == EmbedKind::ME) mode.u = std::min(m.unique, v);
  }
  return mode;
}

TrainConfig config_from_json(const json& j, int v) {
  ModeOpts m;
  m.mode = j.value("mode", "ce");
  m.dim = j.value("m", 5);
  m.clusters = j.value("k", 50);
  m.unique = j.value("u", 300);
  m.books = j.value("books", 8);
  m.codes = j.value("codes", 8);
  TrainConfig cfg;
  cfg.mode = build_mode(m, j.value("v", v));
  cfg.arch = j.value("arch", "lstm") == "rnn" ? Arch::Rnn : Arch::Lstm;
  cfg.hidden = j.value("hidden", 50);
  cfg.max_epochs = j.value("epochs", 20);
  cfg.patience = j.value("patience", 3);
  cfg.seed = j.value("seed", 1);
  cfg.max_len = j.value("max_len", 256);
  cfg.lr = j.value("lr", 0.001f);
  cfg.batch_size = j.value("batch", 32);
  return cfg;
}

CompactModel load_compact(const std::string& path) { return deserialize(read_file(path)); }

void print_clusters(const ClusterReport& rep, int top) {
  for (int c = 0; c < rep.k; ++c) {
    std::cout << "cluster " << c << " (" << rep.sizes[static_cast<size_t>(c)] << " words):";
    int shown = 0;
    for (const auto& w : rep.members[static_cast<size_t>(c)]) {
      if (top > 0 && shown++ >= top) break;
      std::cout << ' ' << w;
    }
    std::cout << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"memory-budgeted text classifiers with learned word clusters"};
  app.require_subcommand(1);

  // ---- train ----
  auto* t = app.add_subcommand("train", "train one classifier");
  DataOpts t_data;
  ModeOpts t_mode;
  std::string t_out = "model.cltr";
  int t_hidden = 50, t_epochs = 20, t_patience = 3, t_batch = 32;
  float t_lr = 0.001f;
  uint64_t t_seed = 1;
  std::string t_arch = "lstm";
  bool t_verbose = false;
  add_data_opts(t, t_data);
  add_mode_opts(t, t_mode);
  t->add_option("--hidden", t_hidden, "hidden width H");
  t->add_option("--epochs", t_epochs, "max epochs");
  t->add_option("--patience", t_patience, "early-stopping patience");
  t->add_option("--lr", t_lr, "Adam learning rate");
  t->add_option("--batch", t_batch, "minibatch size");
  t->add_option("--seed", t_seed, "training seed");
  t->add_option("--arch", t_arch, "lstm|rnn")->check(CLI::IsMember({"lstm", "rnn"}));
  t->add_option("--out", t_out, "output model path");
  t->add_flag("--verbose", t_verbose, "per-epoch log to stderr");

  // ---- sweep ----
  auto* s = app.add_subcommand("sweep", "train a grid of configs");
  DataOpts s_data;
  std::string s_grid, s_out = "sweep.csv";
  add_data_opts(s, s_data);
  s->add_option("--grid", s_grid, "JSON array of configs")->required();
  s->add_option("--out", s_out, "results CSV (appended; completed configs skipped)");

  // ---- fractions ----
  auto* f = app.add_subcommand("fractions", "training-set size experiment");
  DataOpts f_data;
  ModeOpts f_mode;
  std::string f_list = "0.1,0.25,0.5,1.0";
  int f_hidden = 50, f_epochs = 20, f_batch = 32;
  float f_lr = 0.001f;
  uint64_t f_seed = 1;
  add_data_opts(f, f_data);
  add_mode_opts(f, f_mode);
  f->add_option("--list", f_list, "comma-separated fractions");
  f->add_option("--hidden", f_hidden, "hidden width H");
  f->add_option("--epochs", f_epochs, "max epochs");
  f->add_option("--lr", f_lr, "Adam learning rate");
  f->add_option("--batch", f_batch, "minibatch size");
  f->add_option("--seed", f_seed, "training seed");

  // ---- finalize ----
  auto* fin = app.add_subcommand("finalize", "pointerize a trained model");
  std::string fin_in, fin_out = "model.clem";
  fin->add_option("--in", fin_in, "trained model path")->required();
  fin->add_option("--out", fin_out, "compact model path");

  // ---- size ----
  auto* sz = app.add_subcommand("size", "print the exact size accounting");
  ModeOpts sz_mode;
  int sz_v = 3000, sz_hidden = 50, sz_classes = 2;
  add_mode_opts(sz, sz_mode);
  sz->add_option("--vocab", sz_v, "vocabulary size v");
  sz->add_option("--hidden", sz_hidden, "hidden width H");
  sz->add_option("--classes", sz_classes, "class count C");

  // ---- infer ----
  auto* inf = app.add_subcommand("infer", "classify text with a compact model");
  std::string inf_model, inf_text, inf_file;
  inf->add_option("--model", inf_model, "compact model path")->required();
  inf->add_option("--text", inf_text, "single input text");
  inf->add_option("--file", inf_file, "file with one input per line");

  // ---- clusters ----
  auto* cl = app.add_subcommand("clusters", "dump cluster memberships");
  std::string cl_model;
  int cl_top = 10;
  cl->add_option("--model", cl_model, "trained or compact model path")->required();
  cl->add_option("--top", cl_top, "words listed per cluster (0 = all)");

  // ---- hidden ----
  auto* hid = app.add_subcommand("hidden", "export H=2 RNN hidden states");
  std::string hid_model, hid_out = "points.csv";
  DataOpts hid_data;
  hid->add_option("--model", hid_model, "trained model path")->required();
  add_data_opts(hid, hid_data);
  hid->add_option("--out", hid_out, "points CSV path");

  // ---- area ----
  auto* ar = app.add_subcommand("area", "area ratio of exported points");
  std::string ar_points;
  int ar_grid = 100;
  ar->add_option("--points", ar_points, "points CSV path")->required();
  ar->add_option("--grid", ar_grid, "grid resolution G");

  // ---- curves ----
  auto* cv = app.add_subcommand("curves", "accuracy-vs-size curves from a sweep CSV");
  std::string cv_sweep, cv_out = "curves.csv";
  cv->add_option("--sweep", cv_sweep, "sweep results CSV")->required();
  cv->add_option("--out", cv_out, "output CSV");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*t) {
      auto b = make_bundle(t_data);
      TrainConfig cfg;
      cfg.mode = build_mode(t_mode, b.vocab.v());
      cfg.arch = t_arch == "rnn" ? Arch::Rnn : Arch::Lstm;
      cfg.hidden = t_hidden;
      cfg.max_epochs = t_epochs;
      cfg.patience = t_patience;
      cfg.lr = t_lr;
      cfg.batch_size = t_batch;
      cfg.seed = t_seed;
      cfg.max_len = t_data.max_len;
      cfg.verbose = t_verbose;
      auto res = train(cfg, b);
      TrainedModel tm{res.model, b.vocab, b.tok, t_data.max_len};
      save_trained(tm, t_out);
      std::cout << "best_epoch=" << res.best_epoch << " dev_acc=" << res.best_dev_acc;
      if (b.test.size()) std::cout << " test_acc=" << evaluate(res.model, b.test);
      auto size = model_size_bits(cfg.mode, cfg.hidden, b.num_classes);
      std::cout << " size_mb=" << size.total_mb_pow2 << " wall_s=" << res.wall_seconds << "\n";
      std::cout << "saved " << t_out << "\n";
    } else if (*s) {
      auto b = make_bundle(s_data);
      std::ifstream gf(s_grid);
      if (!gf) throw std::runtime_error("cannot open grid: " + s_grid);
      json grid = json::parse(gf);
      std::vector<TrainConfig> cfgs;
      for (const auto& j : grid) cfgs.push_back(config_from_json(j, b.vocab.v()));
      auto recs = sweep(cfgs, b, s_out);
      std::cout << "completed " << recs.size() << " runs; results in " << s_out << "\n";
    } else if (*f) {
      RawDataset raw_train;
      auto b = make_bundle(f_data, &raw_train);
      TrainConfig cfg;
      cfg.mode = build_mode(f_mode, b.vocab.v());
      cfg.hidden = f_hidden;
      cfg.max_epochs = f_epochs;
      cfg.lr = f_lr;
      cfg.batch_size = f_batch;
      cfg.seed = f_seed;
      cfg.max_len = f_data.max_len;
      std::vector<double> fracs;
      std::stringstream ss(f_list);
      std::string item;
      while (std::getline(ss, item, ',')) fracs.push_back(std::stod(item));
      auto recs = fraction_experiment(cfg, raw_train, b, fracs);
      std::cout << "fraction,dev_acc,test_acc\n";
      for (const auto& r : recs) {
        if (r.failed) {
          std::cout << r.cfg.fraction << ",failed: " << r.error << "\n";
          continue;
        }
        std::cout << r.cfg.fraction << ',' << r.dev_acc << ',' << r.test_acc << "\n";
      }
    } else if (*fin) {
      auto tm = load_trained(fin_in);
      auto cm = finalize(tm);
      write_file(fin_out, serialize(cm));
      std::cout << "wrote " << fin_out << " ("
                << fs::file_size(fin_out) << " bytes on disk)\n";
    } else if (*sz) {
      EmbedMode mode = build_mode(sz_mode, sz_v);
      mode.validate();
      auto r = model_size_bits(mode, sz_hidden, sz_classes);
      std::cout << "embedding_bits=" << r.emb_bits << " other_bits=" << r.other_bits
                << " total_bits=" << r.total_bits << "\n";
      std::cout << "embedding_mb=" << r.emb_mb_pow2 << " total_mb=" << r.total_mb_pow2
                << " (2^20-byte MB)\n";
      std::cout << "embedding_mb_dec=" << r.emb_mb_dec << " total_mb_dec=" << r.total_mb_dec
                << " (10^6-byte MB)\n";
    } else if (*inf) {
      auto cm = load_compact(inf_model);
      auto run_one = [&](const std::string& text) {
        auto res = infer(cm, text);
        std::cout << res.label;
        for (float p : res.probs) std::cout << ' ' << p;
        std::cout << "\n";
      };
      if (!inf_file.empty()) {
        std::ifstream in(inf_file);
        if (!in) throw std::runtime_error("cannot open: " + inf_file);
        std::string line;
        while (std::getline(in, line)) run_one(line);
      } else {
        run_one(inf_text);
      }
    } else if (*cl) {
      auto bytes = read_file(cl_model);
      uint32_t magic = bytes.size() >= 4 ? ByteReader(std::span<const uint8_t>(bytes.data(), 4)).u32() : 0;
      ClusterReport rep = magic == kCompactMagic
                              ? dump_clusters(deserialize(bytes), cl_top)
                              : dump_clusters(deserialize_trained(bytes), cl_top);
      print_clusters(rep, cl_top);
    } else if (*hid) {
      auto tm = load_trained(hid_model);
      auto [train_raw, test_raw] = load_raw(hid_data.path);
      const RawDataset& raw = test_raw.records.empty() ? train_raw : test_raw;
      auto enc = encode(raw, tm.vocab, tm.tok, tm.max_len > 0 ? tm.max_len : hid_data.max_len);
      auto pts = export_hidden_states(tm.model, enc);
      write_points_csv(pts, hid_out);
      std::cout << "wrote " << pts.size() << " points to " << hid_out << "\n";
    } else if (*ar) {
      auto pts = read_points_csv(ar_points);
      auto r = area_ratio(pts, ar_grid);
      std::cout << "grid=" << r.grid << " occupied=" << r.occupied << " ratio=" << r.ratio << "\n";
    } else if (*cv) {
      auto recs = read_sweep_csv(cv_sweep);
      auto csv = emit_curves(recs);
      std::ofstream out(cv_out);
      if (!out) throw std::runtime_error("cannot open for write: " + cv_out);
      out << csv;
      std::cout << "wrote " << cv_out << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
