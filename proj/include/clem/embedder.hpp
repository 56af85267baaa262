#pragma once

#include <cmath>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "clem/data.hpp"
#include "clem/rng.hpp"
#include "clem/serialize.hpp"
#include "clem/tape.hpp"

namespace clem {

enum class EmbedKind : uint8_t { SE = 0, CE = 1, CAE = 2, ME = 3, CC = 4 };

inline const char* to_string(EmbedKind k) {
  switch (k) {
    case EmbedKind::SE: return "se";
    case EmbedKind::CE: return "ce";
    case EmbedKind::CAE: return "cae";
    case EmbedKind::ME: return "me";
    case EmbedKind::CC: return "cc";
  }
  return "?";
}

inline EmbedKind embed_kind_from(const std::string& s) {
  if (s == "se") return EmbedKind::SE;
  if (s == "ce") return EmbedKind::CE;
  if (s == "cae") return EmbedKind::CAE;
  if (s == "me") return EmbedKind::ME;
  if (s == "cc") return EmbedKind::CC;
  throw std::invalid_argument("unknown embedding mode: " + s);
}

/// Mode plus its shape hyperparameters. v counts corpus words only; PAD and
/// UNK are extra ids (UNK is clustered like any word, PAD is a frozen zero).
struct EmbedMode {
  EmbedKind kind = EmbedKind::SE;
  int v = 0;      // vocabulary size (corpus words)
  int m = 0;      // embedding dimension
  int k = 0;      // clusters (CE/CAE/ME)
  int u = 0;      // unique words (ME)
  int books = 0;  // codebooks (CC)
  int codes = 0;  // codes per book (CC)

  int width() const { return kind == EmbedKind::CAE ? m + 1 : m; }

  bool clustered() const { return kind != EmbedKind::SE; }

  void validate() const {
    if (v < 1 || m < 1) throw std::invalid_argument("embed mode: need v >= 1, m >= 1");
    switch (kind) {
      case EmbedKind::SE: break;
      case EmbedKind::CE:
      case EmbedKind::CAE:
        if (k < 1) throw std::invalid_argument("embed mode: k >= 1 required");
        break;
      case EmbedKind::ME:
        if (k < 1) throw std::invalid_argument("embed mode: k >= 1 required");
        if (u < 0 || u > v) throw std::invalid_argument("embed mode: need 0 <= u <= v");
        break;
      case EmbedKind::CC:
        if (books < 1 || codes < 1) throw std::invalid_argument("embed mode: books/codes >= 1");
        break;
    }
  }

  /// Rows of the cluster-logit matrix: every clusterable id (UNK + non-unique
  /// corpus words).
  int clustered_rows() const {
    if (kind == EmbedKind::ME) return v + 1 - u;
    return v + 1;
  }

  /// Clustered-row index for a word id (UNK=1 maps to row 0).
  int cluster_row(int id) const {
    if (kind == EmbedKind::ME) {
      if (id == Vocab::kUnk) return 0;
      return id - u - 1;  // ids u+2.. follow UNK
    }
    return id - 1;
  }

  bool is_unique_id(int id) const {
    return kind == EmbedKind::ME && id >= 2 && id <= u + 1;
  }
};

/// Training-time parameter counts per mode: (32-bit embedding params, pointer
/// entries, bits per pointer). Matches the deployed accounting; UNK's extra
/// row is reported separately as overhead.
struct ParamCounts {
  long emb_floats = 0;
  long ptr_entries = 0;
  int ptr_bits = 0;
};

inline ParamCounts param_counts(const EmbedMode& mode) {
  mode.validate();
  const long v = mode.v, m = mode.m, k = mode.k, u = mode.u;
  switch (mode.kind) {
    case EmbedKind::SE: return {v * m, 0, 0};
    case EmbedKind::CE: return {k * m, v, bits_for(mode.k)};
    case EmbedKind::CAE: return {k * m + v, v, bits_for(mode.k)};
    case EmbedKind::ME: return {u * m + k * m, v - u, bits_for(mode.k)};
    case EmbedKind::CC:
      return {static_cast<long>(mode.books) * mode.codes * m,
              v * static_cast<long>(mode.books), bits_for(mode.codes)};
  }
  return {};
}

// ---------------------------------------------------------------------------
// Gumbel-Softmax
// ---------------------------------------------------------------------------

/// t_j = exp((a_j+g_j)/tau) / sum_l exp((a_l+g_l)/tau), max-subtracted.
template <class T>
std::vector<T> gumbel_softmax(std::span<const T> scores, std::span<const T> noise, double tau) {
  if (tau <= 0.0) throw std::invalid_argument("gumbel_softmax: tau must be > 0");
  if (scores.size() != noise.size()) throw std::invalid_argument("gumbel_softmax: length mismatch");
  const size_t k = scores.size();
  std::vector<double> z(k);
  double mx = -1e300;
  for (size_t j = 0; j < k; ++j) {
    z[j] = (static_cast<double>(scores[j]) + static_cast<double>(noise[j])) / tau;
    mx = std::max(mx, z[j]);
  }
  double sum = 0.0;
  for (size_t j = 0; j < k; ++j) {
    z[j] = std::exp(z[j] - mx);
    sum += z[j];
  }
  std::vector<T> t(k);
  for (size_t j = 0; j < k; ++j) t[j] = static_cast<T>(z[j] / sum);
  return t;
}

// ---------------------------------------------------------------------------
// parameters
// ---------------------------------------------------------------------------

template <class T = float>
struct EmbedderParams {
  EmbedMode mode;
  Value<T> table;     // SE: (v+1) x m (UNK first); ME: u x m unique rows
  Value<T> logits;    // clustered_rows x k
  Value<T> clusters;  // k x m
  Value<T> scalars;   // CAE: (v+1) x 1
  std::vector<Value<T>> book_logits;  // CC: (v+1) x codes, per book
  std::vector<Value<T>> books;        // CC: codes x m, per book

  static EmbedderParams make(const EmbedMode& mode) {
    mode.validate();
    EmbedderParams p;
    p.mode = mode;
    switch (mode.kind) {
      case EmbedKind::SE:
        p.table.set(Tensor<T>({mode.v + 1, mode.m}));
        break;
      case EmbedKind::CE:
        p.logits.set(Tensor<T>({mode.clustered_rows(), mode.k}));
        p.clusters.set(Tensor<T>({mode.k, mode.m}));
        break;
      case EmbedKind::CAE:
        p.logits.set(Tensor<T>({mode.clustered_rows(), mode.k}));
        p.clusters.set(Tensor<T>({mode.k, mode.m}));
        p.scalars.set(Tensor<T>({mode.v + 1, 1}));
        break;
      case EmbedKind::ME:
        p.table.set(Tensor<T>({mode.u, mode.m}));
        p.logits.set(Tensor<T>({mode.clustered_rows(), mode.k}));
        p.clusters.set(Tensor<T>({mode.k, mode.m}));
        break;
      case EmbedKind::CC:
        for (int b = 0; b < mode.books; ++b) {
          p.book_logits.emplace_back(Tensor<T>({mode.v + 1, mode.codes}));
          p.books.emplace_back(Tensor<T>({mode.codes, mode.m}));
        }
        break;
    }
    return p;
  }

  /// Logits ~ N(0, 0.1^2); embedding matrices and scalars ~ U(-0.08, 0.08).
  void init(Rng& rng) {
    auto uni = [&](Tensor<T>& t) {
      for (auto& x : t.v) x = static_cast<T>(rng.uniform(-0.08, 0.08));
    };
    auto gauss = [&](Tensor<T>& t) {
      for (auto& x : t.v) x = static_cast<T>(rng.normal(0.0, 0.1));
    };
    if (table.val.size()) uni(table.val);
    if (logits.val.size()) gauss(logits.val);
    if (clusters.val.size()) uni(clusters.val);
    if (scalars.val.size()) uni(scalars.val);
    for (auto& b : book_logits) gauss(b.val);
    for (auto& b : books) uni(b.val);
  }

  std::vector<Value<T>*> params() {
    std::vector<Value<T>*> out;
    if (table.val.size()) out.push_back(&table);
    if (logits.val.size()) out.push_back(&logits);
    if (clusters.val.size()) out.push_back(&clusters);
    if (scalars.val.size()) out.push_back(&scalars);
    for (auto& b : book_logits) out.push_back(&b);
    for (auto& b : books) out.push_back(&b);
    return out;
  }

  template <class U>
  EmbedderParams<U> cast() const {
    EmbedderParams<U> out;
    out.mode = mode;
    out.table.set(table.val.template cast<U>());
    out.logits.set(logits.val.template cast<U>());
    out.clusters.set(clusters.val.template cast<U>());
    out.scalars.set(scalars.val.template cast<U>());
    for (auto& b : book_logits) out.book_logits.emplace_back(b.val.template cast<U>());
    for (auto& b : books) out.books.emplace_back(b.val.template cast<U>());
    return out;
  }
};

// ---------------------------------------------------------------------------
// training path (fused tape node)
// ---------------------------------------------------------------------------

namespace detail {

template <class T>
struct EmbedRowCache {
  int id = 0;
  std::vector<T> t;                  // CE/CAE/ME soft sample
  std::vector<std::vector<T>> t_cc;  // per book
};

}  // namespace detail

/// Batched training embedding: one fresh Gumbel draw per token occurrence.
/// PAD rows come out as zeros and receive no gradient. Gradients flow into
/// the logits through the soft sample (no straight-through).
template <class T>
Value<T>* embed_train(Tape<T>& tape, EmbedderParams<T>& P, std::span<const int> ids, Rng& rng,
                      double tau) {
  const EmbedMode& mode = P.mode;
  const int B = static_cast<int>(ids.size());
  const int m = mode.m;
  const int width = mode.width();
  Tensor<T> out({B, width});
  auto cache = std::make_shared<std::vector<detail::EmbedRowCache<T>>>(B);

  for (int r = 0; r < B; ++r) {
    const int id = ids[r];
    if (id < 0 || id >= mode.v + 2) throw std::out_of_range("embed_train: word id");
    auto& row = (*cache)[r];
    row.id = id;
    if (id == Vocab::kPad) continue;  // frozen zero vector
    T* e = out.row(r);
    switch (mode.kind) {
      case EmbedKind::SE: {
        const T* src = P.table.val.row(id - 1);
        std::copy(src, src + m, e);
        break;
      }
      case EmbedKind::CE:
      case EmbedKind::CAE:
      case EmbedKind::ME: {
        if (mode.is_unique_id(id)) {
          const T* src = P.table.val.row(id - 2);
          std::copy(src, src + m, e);
        } else {
          const int cr = mode.cluster_row(id);
          std::vector<T> g(mode.k);
          for (auto& x : g) x = static_cast<T>(rng.gumbel());
          row.t = gumbel_softmax<T>(std::span<const T>(P.logits.val.row(cr), mode.k), g, tau);
          for (int j = 0; j < mode.k; ++j) {
            const T tj = row.t[j];
            const T* wj = P.clusters.val.row(j);
            for (int d = 0; d < m; ++d) e[d] += tj * wj[d];
          }
        }
        if (mode.kind == EmbedKind::CAE) e[m] = P.scalars.val.at(id - 1, 0);
        break;
      }
      case EmbedKind::CC: {
        row.t_cc.resize(mode.books);
        for (int b = 0; b < mode.books; ++b) {
          std::vector<T> g(mode.codes);
          for (auto& x : g) x = static_cast<T>(rng.gumbel());
          row.t_cc[b] = gumbel_softmax<T>(
              std::span<const T>(P.book_logits[b].val.row(id - 1), mode.codes), g, tau);
          for (int j = 0; j < mode.codes; ++j) {
            const T tj = row.t_cc[b][j];
            const T* wj = P.books[b].val.row(j);
            for (int d = 0; d < m; ++d) e[d] += tj * wj[d];
          }
        }
        break;
      }
    }
  }

  Value<T>* y = tape.make(std::move(out));
  EmbedderParams<T>* PP = &P;
  tape.record([y, PP, cache, tau, B, m, mode]() {
    for (int r = 0; r < B; ++r) {
      const auto& row = (*cache)[r];
      const int id = row.id;
      if (id == Vocab::kPad) continue;
      const T* de = y->grad.row(r);
      switch (mode.kind) {
        case EmbedKind::SE: {
          T* g = PP->table.grad.row(id - 1);
          for (int d = 0; d < m; ++d) g[d] += de[d];
          break;
        }
        case EmbedKind::CE:
        case EmbedKind::CAE:
        case EmbedKind::ME: {
          if (mode.is_unique_id(id)) {
            T* g = PP->table.grad.row(id - 2);
            for (int d = 0; d < m; ++d) g[d] += de[d];
          } else {
            const int cr = mode.cluster_row(id);
            // dW += outer(t, de); dl/dt_j = W_j . de
            std::vector<double> dt(mode.k, 0.0);
            for (int j = 0; j < mode.k; ++j) {
              const T tj = row.t[j];
              T* gw = PP->clusters.grad.row(j);
              const T* wj = PP->clusters.val.row(j);
              double acc = 0.0;
              for (int d = 0; d < m; ++d) {
                gw[d] += tj * de[d];
                acc += static_cast<double>(wj[d]) * de[d];
              }
              dt[j] = acc;
            }
            // softmax jacobian: dz_j = t_j (dt_j - sum_l t_l dt_l); da = dz / tau
            double inner = 0.0;
            for (int j = 0; j < mode.k; ++j) inner += static_cast<double>(row.t[j]) * dt[j];
            T* gl = PP->logits.grad.row(cr);
            for (int j = 0; j < mode.k; ++j)
              gl[j] += static_cast<T>(static_cast<double>(row.t[j]) * (dt[j] - inner) / tau);
          }
          if (mode.kind == EmbedKind::CAE) PP->scalars.grad.at(id - 1, 0) += de[m];
          break;
        }
        case EmbedKind::CC: {
          for (int b = 0; b < mode.books; ++b) {
            const auto& t = row.t_cc[b];
            std::vector<double> dt(mode.codes, 0.0);
            for (int j = 0; j < mode.codes; ++j) {
              T* gw = PP->books[b].grad.row(j);
              const T* wj = PP->books[b].val.row(j);
              double acc = 0.0;
              for (int d = 0; d < m; ++d) {
                gw[d] += t[j] * de[d];
                acc += static_cast<double>(wj[d]) * de[d];
              }
              dt[j] = acc;
            }
            double inner = 0.0;
            for (int j = 0; j < mode.codes; ++j) inner += static_cast<double>(t[j]) * dt[j];
            T* gl = PP->book_logits[b].grad.row(id - 1);
            for (int j = 0; j < mode.codes; ++j)
              gl[j] += static_cast<T>(static_cast<double>(t[j]) * (dt[j] - inner) / tau);
          }
          break;
        }
      }
    }
  });
  return y;
}

// ---------------------------------------------------------------------------
// evaluation path (deterministic, no tape, no RNG)
// ---------------------------------------------------------------------------

template <class T>
int argmax_row(const T* a, int k) {
  int best = 0;
  for (int j = 1; j < k; ++j)
    if (a[j] > a[best]) best = j;  // ties break to the lowest index
  return best;
}

/// Hard-assignment embedding: the Gumbel sample is replaced by
/// one_hot(argmax_j a_ij); everything else matches the training arithmetic.
template <class T>
void embed_eval_into(const EmbedderParams<T>& P, int id, T* out) {
  const EmbedMode& mode = P.mode;
  const int m = mode.m;
  std::fill(out, out + mode.width(), T(0));
  if (id == Vocab::kPad) return;
  if (id < 0 || id >= mode.v + 2) throw std::out_of_range("embed_eval: word id");
  switch (mode.kind) {
    case EmbedKind::SE: {
      const T* src = P.table.val.row(id - 1);
      std::copy(src, src + m, out);
      break;
    }
    case EmbedKind::CE:
    case EmbedKind::CAE:
    case EmbedKind::ME: {
      if (mode.is_unique_id(id)) {
        const T* src = P.table.val.row(id - 2);
        std::copy(src, src + m, out);
      } else {
        const int cr = mode.cluster_row(id);
        const int j = argmax_row(P.logits.val.row(cr), mode.k);
        const T* src = P.clusters.val.row(j);
        std::copy(src, src + m, out);
      }
      if (mode.kind == EmbedKind::CAE) out[m] = P.scalars.val.at(id - 1, 0);
      break;
    }
    case EmbedKind::CC: {
      for (int b = 0; b < mode.books; ++b) {
        const int j = argmax_row(P.book_logits[b].val.row(id - 1), mode.codes);
        const T* src = P.books[b].val.row(j);
        for (int d = 0; d < m; ++d) out[d] += src[d];
      }
      break;
    }
  }
}

template <class T>
std::vector<T> embed_eval(const EmbedderParams<T>& P, int id) {
  std::vector<T> out(static_cast<size_t>(P.mode.width()));
  embed_eval_into(P, id, out.data());
  return out;
}

/// Argmax pointer per clustered row (CE/CAE/ME). Errors on SE; use
/// pointer_tables() for CC.
template <class T>
std::vector<uint32_t> hard_assignments(const EmbedderParams<T>& P) {
  const EmbedMode& mode = P.mode;
  if (mode.kind == EmbedKind::SE || mode.kind == EmbedKind::CC)
    throw std::logic_error("hard_assignments: mode has no single cluster table");
  std::vector<uint32_t> out(static_cast<size_t>(mode.clustered_rows()));
  for (int r = 0; r < mode.clustered_rows(); ++r)
    out[static_cast<size_t>(r)] = static_cast<uint32_t>(argmax_row(P.logits.val.row(r), mode.k));
  return out;
}

/// Every pointer table the deployed model needs: one for CE/CAE/ME, one per
/// book for CC, none for SE.
template <class T>
std::vector<std::vector<uint32_t>> pointer_tables(const EmbedderParams<T>& P) {
  const EmbedMode& mode = P.mode;
  if (mode.kind == EmbedKind::SE) return {};
  if (mode.kind == EmbedKind::CC) {
    std::vector<std::vector<uint32_t>> out;
    for (int b = 0; b < mode.books; ++b) {
      std::vector<uint32_t> tab(static_cast<size_t>(mode.v + 1));
      for (int r = 0; r < mode.v + 1; ++r)
        tab[static_cast<size_t>(r)] =
            static_cast<uint32_t>(argmax_row(P.book_logits[b].val.row(r), mode.codes));
      out.push_back(std::move(tab));
    }
    return out;
  }
  return {hard_assignments(P)};
}

}  // namespace clem
