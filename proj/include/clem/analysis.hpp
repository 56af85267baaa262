#pragma once

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "clem/deploy.hpp"
#include "clem/trainer.hpp"

namespace clem {

// ---------------------------------------------------------------------------
// cluster membership
// ---------------------------------------------------------------------------

/// Words grouped by pointer value; members sorted by descending training
/// frequency (word-id order doubles as frequency order). UNK is listed as
/// "<unk>" in its cluster.
struct ClusterReport {
  int k = 0;
  std::vector<std::vector<std::string>> members;
  std::vector<int> sizes;
};

inline ClusterReport cluster_report(const std::vector<uint32_t>& pointers, const EmbedMode& mode,
                                    const std::vector<std::string>& words, int top_n = 0) {
  if (!mode.clustered() || mode.kind == EmbedKind::CC)
    throw std::logic_error("cluster_report: needs a single-table cluster mode");
  ClusterReport rep;
  rep.k = mode.k;
  rep.members.resize(static_cast<size_t>(mode.k));
  rep.sizes.assign(static_cast<size_t>(mode.k), 0);
  auto add = [&](uint32_t cluster, const std::string& w) {
    rep.sizes[cluster] += 1;
    if (top_n <= 0 || static_cast<int>(rep.members[cluster].size()) < top_n)
      rep.members[cluster].push_back(w);
  };
  // clustered row r: row 0 is UNK, later rows are word ids in frequency order
  for (size_t r = 0; r < pointers.size(); ++r) {
    if (r == 0) {
      add(pointers[r], "<unk>");
      continue;
    }
    int id = mode.kind == EmbedKind::ME ? static_cast<int>(r) + mode.u + 1 : static_cast<int>(r) + 1;
    add(pointers[r], words[static_cast<size_t>(id) - 2]);
  }
  return rep;
}

inline ClusterReport dump_clusters(const CompactModel& cm, int top_n = 0) {
  if (!cm.mode.clustered() || cm.mode.kind == EmbedKind::CC)
    throw std::logic_error("dump_clusters: SE/CC model has no single cluster table");
  return cluster_report(cm.pointers[0], cm.mode, cm.words, top_n);
}

inline ClusterReport dump_clusters(const TrainedModel& tm, int top_n = 0) {
  return cluster_report(hard_assignments(tm.model.emb), tm.model.emb.mode, tm.vocab.words, top_n);
}

// ---------------------------------------------------------------------------
// RNN hidden-state geometry
// ---------------------------------------------------------------------------

struct HiddenPoint {
  float x = 0, y = 0;
  int label = 0;
};

/// Final H=2 hidden state per example, with gold label. Errors if the model's
/// hidden width is not 2.
inline std::vector<HiddenPoint> export_hidden_states(const Classifier<float>& model,
                                                     const EncodedDataset& data) {
  if (model.hidden() != 2) throw std::invalid_argument("export_hidden_states: hidden width must be 2");
  std::vector<HiddenPoint> out;
  for (size_t i = 0; i < data.size(); ++i) {
    auto h = model.encode_eval(data.seqs[i]);
    out.push_back({h[0], h[1], data.labels[i]});
  }
  return out;
}

inline void write_points_csv(const std::vector<HiddenPoint>& pts, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  f << "x,y,label\n";
  for (const auto& p : pts)
    f << std::setprecision(8) << p.x << ',' << p.y << ',' << p.label << "\n";
}

inline std::vector<HiddenPoint> read_points_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open: " + path);
  std::vector<HiddenPoint> pts;
  std::string line;
  std::getline(f, line);  // header
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    HiddenPoint p;
    std::istringstream is(line);
    char comma;
    is >> p.x >> comma >> p.y >> comma >> p.label;
    pts.push_back(p);
  }
  return pts;
}

struct AreaRatio {
  int grid = 0;
  long occupied = 0;
  double ratio = 0;
};

/// Fraction of cells of a G x G grid over [-1,1]^2 containing at least one
/// point. Points on the upper boundary land in the last cell.
inline AreaRatio area_ratio(const std::vector<HiddenPoint>& pts, int grid = 100) {
  if (pts.empty()) throw std::invalid_argument("area_ratio: empty point set");
  if (grid < 1) throw std::invalid_argument("area_ratio: grid");
  std::vector<char> hit(static_cast<size_t>(grid) * grid, 0);
  auto cell = [&](float coord) {
    int c = static_cast<int>((static_cast<double>(coord) + 1.0) / 2.0 * grid);
    return std::clamp(c, 0, grid - 1);
  };
  for (const auto& p : pts) hit[static_cast<size_t>(cell(p.y)) * grid + cell(p.x)] = 1;
  AreaRatio r;
  r.grid = grid;
  for (char h : hit) r.occupied += h;
  r.ratio = static_cast<double>(r.occupied) / (static_cast<double>(grid) * grid);
  return r;
}

// ---------------------------------------------------------------------------
// accuracy-vs-size curves
// ---------------------------------------------------------------------------

/// Plot-ready rows (size_mb, accuracy, mode), sorted by size within mode.
inline std::string emit_curves(std::vector<SweepRecord> records) {
  if (records.empty()) throw std::invalid_argument("emit_curves: no records");
  std::stable_sort(records.begin(), records.end(), [](const SweepRecord& a, const SweepRecord& b) {
    if (a.cfg.mode.kind != b.cfg.mode.kind) return a.cfg.mode.kind < b.cfg.mode.kind;
    return a.size_bits < b.size_bits;
  });
  std::ostringstream os;
  os << "size_mb,accuracy,mode\n";
  for (const auto& r : records) {
    if (r.failed) continue;
    os << std::fixed << std::setprecision(3) << r.size_mb << ',' << std::setprecision(6)
       << r.dev_acc << ',' << to_string(r.cfg.mode.kind) << "\n";
  }
  return os.str();
}

/// Reparse a persisted sweep CSV (the columns sweep() writes).
inline std::vector<SweepRecord> read_sweep_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open: " + path);
  std::vector<SweepRecord> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("mode,", 0) == 0) continue;
    auto key = line.find(" #key=");
    if (key != std::string::npos) line = line.substr(0, key);
    std::istringstream is(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(is, field, ',')) fields.push_back(field);
    if (fields.size() < 10) continue;
    SweepRecord r;
    r.cfg.mode.kind = embed_kind_from(fields[0]);
    r.cfg.mode.v = std::stoi(fields[1]);
    r.cfg.mode.m = std::stoi(fields[2]);
    r.cfg.mode.k = std::stoi(fields[3]);
    r.cfg.mode.u = std::stoi(fields[4]);
    r.size_bits = std::stol(fields[5]);
    r.size_mb = std::stod(fields[6]);
    r.dev_acc = std::stod(fields[7]);
    r.test_acc = fields[8].empty() ? -1 : std::stod(fields[8]);
    r.cfg.seed = std::stoull(fields[9]);
    out.push_back(r);
  }
  return out;
}

}  // namespace clem
