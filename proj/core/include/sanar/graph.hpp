#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "sanar/error.hpp"
#include "sanar/gemm.hpp"
#include "sanar/rng.hpp"
#include "sanar/tensor.hpp"

namespace sanar {

/// Layout and masking rules for one multi-head attention call over a packed
/// batch.  Example e owns query rows [q_offs[e], q_offs[e+1]) and key/value
/// rows [kv_offs[e], kv_offs[e+1]); both offset vectors have B+1 entries
/// starting at 0 and ending at the total row counts.
template <typename S>
struct AttnSpec {
  enum class Mask {
    Full,             ///< every query sees every key in its example
    Causal,           ///< query i sees keys [0, i]; blocks must be square
    MixTargetSource,  ///< first boundaries[e] rows are "target": target
                      ///< queries see all keys, the rest see only the
                      ///< source keys at [boundaries[e], mk)
  };

  Mask mask = Mask::Full;
  std::size_t heads = 1;
  std::vector<std::size_t> q_offs;
  std::vector<std::size_t> kv_offs;
  /// Target-row counts per example; required iff mask == MixTargetSource.
  std::vector<std::size_t> boundaries;
  /// When set, receives one head-averaged attention map [mq, mk] per
  /// example.  Capture happens on the forward pass, so it also works on
  /// non-recording (inference) graphs.  Caller owns the vector.
  std::vector<Tensor<S>>* save_weights = nullptr;
};

/// A named learnable tensor with a persistent gradient buffer.
/// Gradients accumulate across Graph::backward calls until the optimizer
/// consumes and clears them, which is what batch accumulation relies on.
template <typename S>
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Tensor<S> v)
      : name(std::move(name)), value(std::move(v)), grad(value.shape()) {}

  std::string name;
  Tensor<S> value;
  Tensor<S> grad;
};

/// Reverse-mode tape.  Every op appends a node holding its forward value
/// and a closure that pulls the node's gradient back into its inputs.
/// Creation order is the topological order, so backward() is a single
/// reverse sweep.  A graph built with recording=false skips all closure
/// bookkeeping and serves as the fast inference path.
template <typename S>
class Graph {
 public:
  struct Ref {
    int i = -1;
    bool valid() const { return i >= 0; }
  };

  explicit Graph(bool recording = true) : recording_(recording) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return recording_; }

  // ---- leaves ----

  Ref param(Parameter<S>& p) {
    Node n;
    n.value_ptr = &p.value;
    n.grad_ptr = &p.grad;
    n.needs_grad = recording_;
    return push(std::move(n));
  }

  /// Read-only view of a parameter; only valid on non-recording graphs,
  /// where parameters are plain inputs and no gradient is ever written.
  Ref param(const Parameter<S>& p) {
    if (recording_)
      throw Error("const parameter used on a recording graph");
    Node n;
    n.value_ptr = &p.value;
    return push(std::move(n));
  }

  Ref constant(Tensor<S> t) {
    Node n;
    n.owned = std::move(t);
    return push(std::move(n));
  }

  /// Borrows an externally owned tensor; the caller keeps it alive.
  Ref constant_view(const Tensor<S>* t) {
    Node n;
    n.value_ptr = t;
    return push(std::move(n));
  }

  // ---- accessors ----

  const Tensor<S>& value(Ref r) const { return *nodes_[r.i].value_ptr; }

  const Tensor<S>& grad(Ref r) const {
    const Node& n = nodes_[r.i];
    if (!n.grad_ptr) throw Error("node has no gradient (backward not run?)");
    return *n.grad_ptr;
  }

  // ---- ops ----

  /// C = A @ B with A [m,k], B [k,n].
  Ref matmul(Ref a, Ref b) {
    const Tensor<S>& A = value(a);
    const Tensor<S>& B = value(b);
    if (A.cols() != B.rows())
      throw ShapeMismatch("matmul: " + shape_string(A) + " x " + shape_string(B));
    const int m = int(A.rows()), k = int(A.cols()), n = int(B.cols());
    Tensor<S> out({A.rows(), B.cols()});
    detail::gemm(false, false, m, n, k, S(1), A.data(), B.data(), S(0), out.data());
    return make(std::move(out), {a, b}, [this, a, b, m, k, n](Node& node) {
      const S* g = node.grad_ptr->data();
      if (wants(a))
        detail::gemm(false, true, m, k, n, S(1), g, value(b).data(), S(1),
                     grad_buf(a));
      if (wants(b))
        detail::gemm(true, false, k, n, m, S(1), value(a).data(), g, S(1),
                     grad_buf(b));
    });
  }

  /// C = A @ B^T with A [m,k], B [n,k].  Used for attention scores and the
  /// tied output projection, avoiding materialized transposes.
  Ref matmul_nt(Ref a, Ref b) {
    const Tensor<S>& A = value(a);
    const Tensor<S>& B = value(b);
    if (A.cols() != B.cols())
      throw ShapeMismatch("matmul_nt: " + shape_string(A) + " x " + shape_string(B));
    const int m = int(A.rows()), k = int(A.cols()), n = int(B.rows());
    Tensor<S> out({A.rows(), B.rows()});
    detail::gemm(false, true, m, n, k, S(1), A.data(), B.data(), S(0), out.data());
    return make(std::move(out), {a, b}, [this, a, b, m, k, n](Node& node) {
      const S* g = node.grad_ptr->data();
      if (wants(a))
        detail::gemm(false, false, m, k, n, S(1), g, value(b).data(), S(1),
                     grad_buf(a));
      if (wants(b))
        detail::gemm(true, false, n, k, m, S(1), g, value(a).data(), S(1),
                     grad_buf(b));
    });
  }

  Ref add(Ref a, Ref b) {
    const Tensor<S>& A = value(a);
    const Tensor<S>& B = value(b);
    if (!A.same_shape(B))
      throw ShapeMismatch("add: " + shape_string(A) + " vs " + shape_string(B));
    Tensor<S> out(A.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = A[i] + B[i];
    return make(std::move(out), {a, b}, [this, a, b](Node& node) {
      const Tensor<S>& g = *node.grad_ptr;
      if (wants(a)) axpy(g, grad_buf(a));
      if (wants(b)) axpy(g, grad_buf(b));
    });
  }

  /// Elementwise (Hadamard) product.
  Ref mul(Ref a, Ref b) {
    const Tensor<S>& A = value(a);
    const Tensor<S>& B = value(b);
    if (!A.same_shape(B))
      throw ShapeMismatch("mul: " + shape_string(A) + " vs " + shape_string(B));
    Tensor<S> out(A.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = A[i] * B[i];
    return make(std::move(out), {a, b}, [this, a, b](Node& node) {
      const Tensor<S>& g = *node.grad_ptr;
      if (wants(a)) {
        S* ga = grad_buf(a);
        const Tensor<S>& bv = value(b);
        for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * bv[i];
      }
      if (wants(b)) {
        S* gb = grad_buf(b);
        const Tensor<S>& av = value(a);
        for (std::size_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * av[i];
      }
    });
  }

  /// Sums all elements into a scalar (shape {1}).
  Ref sum(Ref a) {
    const Tensor<S>& A = value(a);
    Tensor<S> out({std::size_t(1)});
    S acc = 0;
    for (std::size_t i = 0; i < A.numel(); ++i) acc += A[i];
    out[0] = acc;
    return make(std::move(out), {a}, [this, a](Node& node) {
      if (!wants(a)) return;
      const S g = (*node.grad_ptr)[0];
      S* ga = grad_buf(a);
      for (std::size_t i = 0; i < value(a).numel(); ++i) ga[i] += g;
    });
  }

  /// Adds a rank-1 bias to every row of a.
  Ref add_bias(Ref a, Ref bias) {
    const Tensor<S>& A = value(a);
    const Tensor<S>& B = value(bias);
    if (B.numel() != A.cols())
      throw ShapeMismatch("add_bias: bias " + shape_string(B) + " for " +
                          shape_string(A));
    Tensor<S> out(A.shape());
    for (std::size_t r = 0; r < A.rows(); ++r)
      for (std::size_t c = 0; c < A.cols(); ++c)
        out.at(r, c) = A.at(r, c) + B[c];
    return make(std::move(out), {a, bias}, [this, a, bias](Node& node) {
      const Tensor<S>& g = *node.grad_ptr;
      if (wants(a)) axpy(g, grad_buf(a));
      if (wants(bias)) {
        S* gb = grad_buf(bias);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += g.at(r, c);
      }
    });
  }

  Ref scale(Ref a, S factor) {
    const Tensor<S>& A = value(a);
    Tensor<S> out(A.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = A[i] * factor;
    return make(std::move(out), {a}, [this, a, factor](Node& node) {
      if (!wants(a)) return;
      const Tensor<S>& g = *node.grad_ptr;
      S* ga = grad_buf(a);
      for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * factor;
    });
  }

  Ref relu(Ref a) {
    const Tensor<S>& A = value(a);
    Tensor<S> out(A.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = A[i] > S(0) ? A[i] : S(0);
    return make(std::move(out), {a}, [this, a](Node& node) {
      if (!wants(a)) return;
      const Tensor<S>& g = *node.grad_ptr;
      const Tensor<S>& x = value(a);
      S* ga = grad_buf(a);
      for (std::size_t i = 0; i < g.numel(); ++i)
        if (x[i] > S(0)) ga[i] += g[i];
    });
  }

  /// Per-row layer normalization with affine gain/bias (rank-1, length = cols).
  /// A constant row maps to zeros before the affine transform; eps keeps the
  /// zero-variance case finite.
  Ref layer_norm(Ref a, Ref gain, Ref bias, S eps = S(1e-5)) {
    const Tensor<S>& A = value(a);
    const Tensor<S>& G = value(gain);
    const Tensor<S>& B = value(bias);
    const std::size_t n = A.cols();
    if (G.numel() != n || B.numel() != n)
      throw ShapeMismatch("layer_norm: affine params do not match width");
    Tensor<S> out(A.shape());
    Tensor<S> xhat(A.shape());
    std::vector<S> inv_std(A.rows());
    for (std::size_t r = 0; r < A.rows(); ++r) {
      S mean = 0;
      for (std::size_t c = 0; c < n; ++c) mean += A.at(r, c);
      mean /= S(n);
      S var = 0;
      for (std::size_t c = 0; c < n; ++c) {
        S d = A.at(r, c) - mean;
        var += d * d;
      }
      var /= S(n);
      const S is = S(1) / std::sqrt(var + eps);
      inv_std[r] = is;
      for (std::size_t c = 0; c < n; ++c) {
        const S xh = (A.at(r, c) - mean) * is;
        xhat.at(r, c) = xh;
        out.at(r, c) = xh * G[c] + B[c];
      }
    }
    auto xhat_p = std::make_shared<Tensor<S>>(std::move(xhat));
    auto istd_p = std::make_shared<std::vector<S>>(std::move(inv_std));
    return make(std::move(out), {a, gain, bias},
                [this, a, gain, bias, xhat_p, istd_p, n](Node& node) {
      const Tensor<S>& g = *node.grad_ptr;
      if (wants(gain)) {
        S* gg = grad_buf(gain);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < n; ++c) gg[c] += g.at(r, c) * xhat_p->at(r, c);
      }
      if (wants(bias)) {
        S* gb = grad_buf(bias);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < n; ++c) gb[c] += g.at(r, c);
      }
      if (wants(a)) {
        const Tensor<S>& gainv = value(gain);
        S* ga = grad_buf(a);
        for (std::size_t r = 0; r < g.rows(); ++r) {
          S sum_d = 0, sum_dx = 0;
          std::vector<S> dxh(n);
          for (std::size_t c = 0; c < n; ++c) {
            dxh[c] = g.at(r, c) * gainv[c];
            sum_d += dxh[c];
            sum_dx += dxh[c] * xhat_p->at(r, c);
          }
          const S inv_n = S(1) / S(n);
          for (std::size_t c = 0; c < n; ++c)
            ga[r * n + c] += (*istd_p)[r] *
                             (dxh[c] - sum_d * inv_n - xhat_p->at(r, c) * sum_dx * inv_n);
        }
      }
    });
  }

  /// Row-wise softmax with max-subtraction.  Rows sum to 1.
  Ref softmax_rows(Ref a) {
    const Tensor<S>& A = value(a);
    Tensor<S> out(A.shape());
    const std::size_t n = A.cols();
    for (std::size_t r = 0; r < A.rows(); ++r) {
      S mx = A.at(r, 0);
      for (std::size_t c = 1; c < n; ++c) mx = std::max(mx, A.at(r, c));
      S z = 0;
      for (std::size_t c = 0; c < n; ++c) {
        const S e = std::exp(A.at(r, c) - mx);
        out.at(r, c) = e;
        z += e;
      }
      const S inv = S(1) / z;
      for (std::size_t c = 0; c < n; ++c) out.at(r, c) *= inv;
    }
    Ref r = make(std::move(out), {a}, [this, a](Node& node) {
      if (!wants(a)) return;
      const Tensor<S>& g = *node.grad_ptr;
      const Tensor<S>& y = *node.value_ptr;
      S* ga = grad_buf(a);
      const std::size_t n = g.cols();
      for (std::size_t row = 0; row < g.rows(); ++row) {
        S dot = 0;
        for (std::size_t c = 0; c < n; ++c) dot += g.at(row, c) * y.at(row, c);
        for (std::size_t c = 0; c < n; ++c)
          ga[row * n + c] += y.at(row, c) * (g.at(row, c) - dot);
      }
    });
    return r;
  }

  /// Gathers rows [ids[0], ids[1], ...] from a table node (usually a
  /// parameter).  Backward scatter-adds into the table gradient.
  Ref embedding_rows(Ref table, const std::vector<int>& ids) {
    const Tensor<S>& T = value(table);
    Tensor<S> out({ids.size(), T.cols()});
    for (std::size_t r = 0; r < ids.size(); ++r) {
      if (ids[r] < 0 || std::size_t(ids[r]) >= T.rows())
        throw Error("embedding_rows: id out of range: " + std::to_string(ids[r]));
      std::copy(T.row(ids[r]), T.row(ids[r]) + T.cols(), out.row(r));
    }
    return make(std::move(out), {table}, [this, table, ids](Node& node) {
      if (!wants(table)) return;
      const Tensor<S>& g = *node.grad_ptr;
      S* gt = grad_buf(table);
      const std::size_t w = g.cols();
      for (std::size_t r = 0; r < ids.size(); ++r)
        for (std::size_t c = 0; c < w; ++c) gt[std::size_t(ids[r]) * w + c] += g.at(r, c);
    });
  }

  Ref slice_cols(Ref a, std::size_t c0, std::size_t w) {
    const Tensor<S>& A = value(a);
    if (c0 + w > A.cols()) throw ShapeMismatch("slice_cols out of range");
    Tensor<S> out({A.rows(), w});
    for (std::size_t r = 0; r < A.rows(); ++r)
      std::copy(A.row(r) + c0, A.row(r) + c0 + w, out.row(r));
    return make(std::move(out), {a}, [this, a, c0, w](Node& node) {
      if (!wants(a)) return;
      const Tensor<S>& g = *node.grad_ptr;
      S* ga = grad_buf(a);
      const std::size_t stride = value(a).cols();
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < w; ++c) ga[r * stride + c0 + c] += g.at(r, c);
    });
  }

  Ref slice_rows(Ref a, std::size_t r0, std::size_t h) {
    const Tensor<S>& A = value(a);
    if (r0 + h > A.rows()) throw ShapeMismatch("slice_rows out of range");
    Tensor<S> out({h, A.cols()});
    std::copy(A.row(r0), A.row(r0) + h * A.cols(), out.data());
    return make(std::move(out), {a}, [this, a, r0](Node& node) {
      if (!wants(a)) return;
      const Tensor<S>& g = *node.grad_ptr;
      S* ga = grad_buf(a);
      const std::size_t w = g.cols();
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < w; ++c) ga[(r0 + r) * w + c] += g.at(r, c);
    });
  }

  Ref concat_cols(const std::vector<Ref>& parts) {
    if (parts.empty()) throw Error("concat_cols: no inputs");
    const std::size_t rows = value(parts[0]).rows();
    std::size_t total = 0;
    for (Ref p : parts) {
      if (value(p).rows() != rows) throw ShapeMismatch("concat_cols: row mismatch");
      total += value(p).cols();
    }
    Tensor<S> out({rows, total});
    std::size_t c0 = 0;
    for (Ref p : parts) {
      const Tensor<S>& P = value(p);
      for (std::size_t r = 0; r < rows; ++r)
        std::copy(P.row(r), P.row(r) + P.cols(), out.row(r) + c0);
      c0 += P.cols();
    }
    return make(std::move(out), parts, [this, parts, total](Node& node) {
      const Tensor<S>& g = *node.grad_ptr;
      std::size_t c0 = 0;
      for (Ref p : parts) {
        const std::size_t w = value(p).cols();
        if (wants(p)) {
          S* gp = grad_buf(p);
          for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < w; ++c) gp[r * w + c] += g[r * total + c0 + c];
        }
        c0 += w;
      }
    });
  }

  /// Multiplies row r of a by mask[r].  The mask is plain data, not a node.
  Ref mul_rows(Ref a, std::vector<S> mask) {
    const Tensor<S>& A = value(a);
    if (mask.size() != A.rows()) throw ShapeMismatch("mul_rows: mask length");
    Tensor<S> out(A.shape());
    for (std::size_t r = 0; r < A.rows(); ++r)
      for (std::size_t c = 0; c < A.cols(); ++c) out.at(r, c) = A.at(r, c) * mask[r];
    auto mask_p = std::make_shared<std::vector<S>>(std::move(mask));
    return make(std::move(out), {a}, [this, a, mask_p](Node& node) {
      if (!wants(a)) return;
      const Tensor<S>& g = *node.grad_ptr;
      S* ga = grad_buf(a);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c)
          ga[r * g.cols() + c] += g.at(r, c) * (*mask_p)[r];
    });
  }

  /// Inverted dropout; the mask is drawn once at op creation.
  Ref dropout(Ref a, double rate, Rng& rng) {
    if (rate <= 0.0) return a;
    const Tensor<S>& A = value(a);
    const S keep_inv = S(1.0 / (1.0 - rate));
    Tensor<S> mask(A.shape());
    for (std::size_t i = 0; i < mask.numel(); ++i)
      mask[i] = rand_unit(rng) < rate ? S(0) : keep_inv;
    Tensor<S> out(A.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = A[i] * mask[i];
    auto mask_p = std::make_shared<Tensor<S>>(std::move(mask));
    return make(std::move(out), {a}, [this, a, mask_p](Node& node) {
      if (!wants(a)) return;
      const Tensor<S>& g = *node.grad_ptr;
      S* ga = grad_buf(a);
      for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * (*mask_p)[i];
    });
  }

  /// Mean negative log-likelihood over rows with row_mask == 1.
  /// Masked rows contribute exactly zero loss and zero gradient.
  Ref cross_entropy_rows(Ref logits, const std::vector<int>& targets,
                         const std::vector<S>& row_mask) {
    const Tensor<S>& L = value(logits);
    if (targets.size() != L.rows() || row_mask.size() != L.rows())
      throw ShapeMismatch("cross_entropy_rows: row count mismatch");
    S mask_total = 0;
    for (S m : row_mask) mask_total += m;
    if (mask_total <= S(0))
      throw AllPositionsMasked("cross_entropy_rows: no contributing position");
    const std::size_t v = L.cols();
    Tensor<S> probs(L.shape());
    S loss = 0;
    for (std::size_t r = 0; r < L.rows(); ++r) {
      S mx = L.at(r, 0);
      for (std::size_t c = 1; c < v; ++c) mx = std::max(mx, L.at(r, c));
      S z = 0;
      for (std::size_t c = 0; c < v; ++c) {
        const S e = std::exp(L.at(r, c) - mx);
        probs.at(r, c) = e;
        z += e;
      }
      const S inv = S(1) / z;
      for (std::size_t c = 0; c < v; ++c) probs.at(r, c) *= inv;
      if (row_mask[r] != S(0)) {
        if (targets[r] < 0 || std::size_t(targets[r]) >= v)
          throw Error("cross_entropy_rows: target id out of range");
        loss += row_mask[r] * (std::log(z) + mx - L.at(r, std::size_t(targets[r])));
      }
    }
    Tensor<S> out({std::size_t(1)});
    out[0] = loss / mask_total;
    auto probs_p = std::make_shared<Tensor<S>>(std::move(probs));
    auto tgt_p = std::make_shared<std::vector<int>>(targets);
    auto mask_p = std::make_shared<std::vector<S>>(row_mask);
    return make(std::move(out), {logits},
                [this, logits, probs_p, tgt_p, mask_p, mask_total, v](Node& node) {
      if (!wants(logits)) return;
      const S g = (*node.grad_ptr)[0] / mask_total;
      S* gl = grad_buf(logits);
      for (std::size_t r = 0; r < probs_p->rows(); ++r) {
        const S m = (*mask_p)[r];
        if (m == S(0)) continue;
        for (std::size_t c = 0; c < v; ++c)
          gl[r * v + c] += g * m * probs_p->at(r, c);
        gl[r * v + std::size_t((*tgt_p)[r])] -= g * m;
      }
    });
  }

  /// Gathers arbitrary rows of a into a new tensor; duplicate indices are
  /// allowed (backward scatter-adds).  Same machinery as embedding_rows,
  /// named for use on activations rather than parameter tables.
  Ref gather_rows(Ref a, const std::vector<int>& rows) {
    return embedding_rows(a, rows);
  }

  /// Stacks parts vertically: out = [p0; p1; ...].  All parts share cols.
  Ref concat_rows(const std::vector<Ref>& parts) {
    if (parts.empty()) throw Error("concat_rows: no inputs");
    const std::size_t cols = value(parts[0]).cols();
    std::size_t total = 0;
    for (Ref p : parts) {
      if (value(p).cols() != cols)
        throw ShapeMismatch("concat_rows: column mismatch");
      total += value(p).rows();
    }
    Tensor<S> out({total, cols});
    std::size_t r0 = 0;
    for (Ref p : parts) {
      const Tensor<S>& P = value(p);
      std::copy(P.data(), P.data() + P.numel(), out.row(r0));
      r0 += P.rows();
    }
    return make(std::move(out), parts, [this, parts](Node& node) {
      const Tensor<S>& g = *node.grad_ptr;
      const std::size_t cols = g.cols();
      std::size_t r0 = 0;
      for (Ref p : parts) {
        const std::size_t h = value(p).rows();
        if (wants(p)) {
          S* gp = grad_buf(p);
          const S* gsrc = g.data() + r0 * cols;
          for (std::size_t i = 0; i < h * cols; ++i) gp[i] += gsrc[i];
        }
        r0 += h;
      }
    });
  }

  /// Multi-head scaled-dot-product attention over a packed batch.
  /// q is [Mq, d]; k and v are [Mk, d] and share shapes.  Heads are
  /// contiguous column blocks of width d/heads, addressed in place through
  /// strided GEMMs — no per-head copies are materialized.  Scores are scaled
  /// by 1/sqrt(d/heads) before the masked softmax; disallowed positions are
  /// exact zeros in the attention probabilities, so they receive exactly
  /// zero gradient.  q, k and v may alias the same node (self-attention).
  Ref attention(Ref q, Ref k, Ref v, const AttnSpec<S>& spec) {
    const Tensor<S>& Q = value(q);
    const Tensor<S>& K = value(k);
    const Tensor<S>& V = value(v);
    const std::size_t d = Q.cols();
    if (K.cols() != d || !K.same_shape(V))
      throw ShapeMismatch("attention: q/k/v width mismatch");
    if (spec.heads == 0 || d % spec.heads != 0)
      throw ShapeMismatch("attention: heads must divide width");
    const std::size_t B = spec.q_offs.empty() ? 0 : spec.q_offs.size() - 1;
    if (B == 0 || spec.kv_offs.size() != B + 1)
      throw ShapeMismatch("attention: malformed offset vectors");
    if (spec.q_offs.front() != 0 || spec.q_offs.back() != Q.rows() ||
        spec.kv_offs.front() != 0 || spec.kv_offs.back() != K.rows())
      throw ShapeMismatch("attention: offsets do not cover the inputs");
    using Mask = typename AttnSpec<S>::Mask;
    if (spec.mask == Mask::MixTargetSource && spec.boundaries.size() != B)
      throw ShapeMismatch("attention: boundaries size mismatch");
    for (std::size_t e = 0; e < B; ++e) {
      if (spec.q_offs[e] >= spec.q_offs[e + 1] ||
          spec.kv_offs[e] >= spec.kv_offs[e + 1])
        throw ShapeMismatch("attention: empty example block");
      const std::size_t mq = spec.q_offs[e + 1] - spec.q_offs[e];
      const std::size_t mk = spec.kv_offs[e + 1] - spec.kv_offs[e];
      if ((spec.mask == Mask::Causal || spec.mask == Mask::MixTargetSource) &&
          mq != mk)
        throw ShapeMismatch("attention: masked self-attention needs square blocks");
      if (spec.mask == Mask::MixTargetSource && spec.boundaries[e] > mk)
        throw ShapeMismatch("attention: boundary exceeds block");
    }

    const std::size_t h = spec.heads, dh = d / h;
    const S inv = S(1) / std::sqrt(S(dh));
    // Allowed key range [lo, hi) for local query row i of example e.
    auto allowed = [&spec](std::size_t e, std::size_t i, std::size_t mk) {
      switch (spec.mask) {
        case Mask::Causal:
          return std::pair<std::size_t, std::size_t>{0, i + 1};
        case Mask::MixTargetSource:
          return i < spec.boundaries[e]
                     ? std::pair<std::size_t, std::size_t>{0, mk}
                     : std::pair<std::size_t, std::size_t>{spec.boundaries[e], mk};
        case Mask::Full:
        default:
          return std::pair<std::size_t, std::size_t>{0, mk};
      }
    };

    // Attention probabilities for every (example, head) pair, packed back to
    // back; kept alive for the backward pass.
    auto probs = std::make_shared<std::vector<S>>();
    auto offs = std::make_shared<std::vector<std::size_t>>(B * h + 1, 0);
    for (std::size_t e = 0; e < B; ++e) {
      const std::size_t mq = spec.q_offs[e + 1] - spec.q_offs[e];
      const std::size_t mk = spec.kv_offs[e + 1] - spec.kv_offs[e];
      for (std::size_t hd = 0; hd < h; ++hd)
        (*offs)[e * h + hd + 1] = (*offs)[e * h + hd] + mq * mk;
    }
    probs->resize(offs->back());
    if (spec.save_weights) spec.save_weights->clear();

    Tensor<S> out({Q.rows(), d});
    for (std::size_t e = 0; e < B; ++e) {
      const std::size_t q0 = spec.q_offs[e], mq = spec.q_offs[e + 1] - q0;
      const std::size_t k0 = spec.kv_offs[e], mk = spec.kv_offs[e + 1] - k0;
      Tensor<S>* wsave = nullptr;
      if (spec.save_weights) {
        spec.save_weights->emplace_back(
            std::vector<std::size_t>{mq, mk});
        wsave = &spec.save_weights->back();
      }
      for (std::size_t hd = 0; hd < h; ++hd) {
        S* a = probs->data() + (*offs)[e * h + hd];
        detail::gemm_ld(false, true, int(mq), int(mk), int(dh), inv,
                        Q.data() + q0 * d + hd * dh, int(d),
                        K.data() + k0 * d + hd * dh, int(d), S(0), a, int(mk));
        for (std::size_t i = 0; i < mq; ++i) {
          S* row = a + i * mk;
          const auto [lo, hi] = allowed(e, i, mk);
          S mx = row[lo];
          for (std::size_t j = lo + 1; j < hi; ++j) mx = std::max(mx, row[j]);
          S z = 0;
          for (std::size_t j = lo; j < hi; ++j) {
            row[j] = std::exp(row[j] - mx);
            z += row[j];
          }
          const S zi = S(1) / z;
          for (std::size_t j = 0; j < lo; ++j) row[j] = S(0);
          for (std::size_t j = lo; j < hi; ++j) row[j] *= zi;
          for (std::size_t j = hi; j < mk; ++j) row[j] = S(0);
        }
        detail::gemm_ld(false, false, int(mq), int(dh), int(mk), S(1), a,
                        int(mk), V.data() + k0 * d + hd * dh, int(d), S(0),
                        out.data() + q0 * d + hd * dh, int(d));
        if (wsave) {
          const S wh = S(1) / S(h);
          for (std::size_t i = 0; i < mq * mk; ++i)
            (*wsave)[i] = (hd == 0 ? S(0) : (*wsave)[i]) + a[i] * wh;
        }
      }
    }

    AttnSpec<S> bspec = spec;
    bspec.save_weights = nullptr;
    return make(std::move(out), {q, k, v},
                [this, q, k, v, bspec = std::move(bspec), probs, offs, h, dh,
                 d, inv](Node& node) {
      const Tensor<S>& g = *node.grad_ptr;
      const bool wq = wants(q), wk = wants(k), wv = wants(v);
      S* gq = wq ? grad_buf(q) : nullptr;
      S* gk = wk ? grad_buf(k) : nullptr;
      S* gv = wv ? grad_buf(v) : nullptr;
      const Tensor<S>& Q = value(q);
      const Tensor<S>& K = value(k);
      const Tensor<S>& V = value(v);
      const std::size_t B = bspec.q_offs.size() - 1;
      std::vector<S> dscore;
      for (std::size_t e = 0; e < B; ++e) {
        const std::size_t q0 = bspec.q_offs[e], mq = bspec.q_offs[e + 1] - q0;
        const std::size_t k0 = bspec.kv_offs[e], mk = bspec.kv_offs[e + 1] - k0;
        dscore.resize(mq * mk);
        for (std::size_t hd = 0; hd < h; ++hd) {
          const S* a = probs->data() + (*offs)[e * h + hd];
          const S* gout = g.data() + q0 * d + hd * dh;
          // dA = gOut . Vh^T, reusing the dscore scratch.
          detail::gemm_ld(false, true, int(mq), int(mk), int(dh), S(1), gout,
                          int(d), V.data() + k0 * d + hd * dh, int(d), S(0),
                          dscore.data(), int(mk));
          if (wv)
            detail::gemm_ld(true, false, int(mk), int(dh), int(mq), S(1), a,
                            int(mk), gout, int(d), S(1),
                            gv + k0 * d + hd * dh, int(d));
          // dScore = A (dA - rowdot(dA, A)); masked entries have A == 0 and
          // therefore stay exactly zero.
          for (std::size_t i = 0; i < mq; ++i) {
            const S* arow = a + i * mk;
            S* drow = dscore.data() + i * mk;
            S dot = 0;
            for (std::size_t j = 0; j < mk; ++j) dot += drow[j] * arow[j];
            for (std::size_t j = 0; j < mk; ++j)
              drow[j] = arow[j] * (drow[j] - dot);
          }
          if (wq)
            detail::gemm_ld(false, false, int(mq), int(dh), int(mk), inv,
                            dscore.data(), int(mk),
                            K.data() + k0 * d + hd * dh, int(d), S(1),
                            gq + q0 * d + hd * dh, int(d));
          if (wk)
            detail::gemm_ld(true, false, int(mk), int(dh), int(mq), inv,
                            dscore.data(), int(mk),
                            Q.data() + q0 * d + hd * dh, int(d), S(1),
                            gk + k0 * d + hd * dh, int(d));
        }
      }
    });
  }

  // ---- backward ----

  void backward(Ref loss, S seed = S(1)) {
    if (!recording_) throw Error("backward on a non-recording graph");
    Node& ln = nodes_[loss.i];
    if (!ln.needs_grad) throw Error("backward target does not require grad");
    ensure_grad(loss.i);
    for (std::size_t i = 0; i < ln.grad_ptr->numel(); ++i) (*ln.grad_ptr)[i] += seed;
    for (int i = loss.i; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.needs_grad && n.grad_ptr && n.backprop) n.backprop(n);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<S> owned;
    const Tensor<S>* value_ptr = nullptr;
    Tensor<S> grad_owned;
    Tensor<S>* grad_ptr = nullptr;
    bool needs_grad = false;
    std::function<void(Node&)> backprop;
  };

  Ref push(Node&& n) {
    nodes_.push_back(std::move(n));
    Node& stored = nodes_.back();
    // Nodes that own their value leave value_ptr null until they are in
    // their final deque slot; external values (params, views) keep theirs.
    if (stored.value_ptr == nullptr) stored.value_ptr = &stored.owned;
    return Ref{int(nodes_.size()) - 1};
  }

  Ref make(Tensor<S>&& out, const std::vector<Ref>& inputs,
           std::function<void(Node&)> backprop) {
    Node n;
    n.owned = std::move(out);
    bool ng = false;
    if (recording_)
      for (Ref r : inputs) ng = ng || nodes_[r.i].needs_grad;
    n.needs_grad = ng;
    if (ng) n.backprop = std::move(backprop);
    return push(std::move(n));
  }

  bool wants(Ref r) { return nodes_[r.i].needs_grad; }

  /// Gradient buffer for node r, allocated (zeroed) on first touch.
  S* grad_buf(Ref r) {
    ensure_grad(r.i);
    return nodes_[r.i].grad_ptr->data();
  }

  void ensure_grad(int i) {
    Node& n = nodes_[i];
    if (n.grad_ptr) return;
    n.grad_owned = Tensor<S>(n.value_ptr->shape());
    n.grad_ptr = &n.grad_owned;
  }

  static void axpy(const Tensor<S>& g, S* dst) {
    for (std::size_t i = 0; i < g.numel(); ++i) dst[i] += g[i];
  }

  bool recording_;
  std::deque<Node> nodes_;
};

/// Argmax over one row, ties broken toward the lowest index.
template <typename S>
std::size_t argmax_row(const Tensor<S>& t, std::size_t row) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < t.cols(); ++c)
    if (t.at(row, c) > t.at(row, best)) best = c;
  return best;
}

}  // namespace sanar
