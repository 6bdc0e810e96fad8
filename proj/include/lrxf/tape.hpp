#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lrxf/kernels.hpp"
#include "lrxf/tensor.hpp"

namespace lrxf::ad {

struct TapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Reverse-mode tape. Ops append nodes in execution order; backward() walks
// them once in exact reverse order, accumulating gradients additively. A
// tape is single-use: a second backward() without a fresh forward is
// rejected so gradients can never silently double-accumulate.
template <class S>
class Tape {
 public:
  using Id = int;

  const Tensor<S>& val(Id id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    return n.ext != nullptr ? *n.ext : n.owned;
  }

  bool needs_grad(Id id) const {
    return nodes_[static_cast<std::size_t>(id)].needs_grad;
  }

  // Gradient of the last backward() w.r.t. node id; zero tensor if the loss
  // did not depend on it.
  Tensor<S> grad(Id id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.size() == 0) return Tensor<S>(val(id).shape());
    return n.grad;
  }

  std::size_t node_count() const { return nodes_.size(); }

  // --- leaves ---

  Id constant(Tensor<S> v) { return push(std::move(v), nullptr, false); }

  // External tensors referenced without copy; caller keeps them alive and
  // unchanged until the tape is dropped.
  Id constant_ref(const Tensor<S>* v) { return push(Tensor<S>(), v, false); }
  Id leaf(const Tensor<S>* v) { return push(Tensor<S>(), v, true); }

  // Owned differentiable input.
  Id variable(Tensor<S> v) { return push(std::move(v), nullptr, true); }

  // --- primitives ---

  Id matmul(Id a, Id b) {
    const Tensor<S>&A = val(a), &B = val(b);
    if (A.cols() != B.rows())
      throw ShapeError("matmul shape mismatch " + shape_str(A.shape()) +
                       " vs " + shape_str(B.shape()));
    Tensor<S> out({A.rows(), B.cols()});
    kern::gemm_nn(A.data(), B.data(), out.data(), A.rows(), A.cols(),
                  B.cols());
    Id id = push_op(std::move(out), {a, b});
    set_back(id, [this, id, a, b] {
      const Tensor<S>& g = nodes_[id].grad;
      const Tensor<S>&A = val(a), &B = val(b);
      if (needs_grad(a))
        kern::gemm_nt(g.data(), B.data(), grad_buf(a).data(), A.rows(),
                      B.cols(), A.cols());
      if (needs_grad(b))
        kern::gemm_tn(A.data(), g.data(), grad_buf(b).data(), A.rows(),
                      A.cols(), B.cols());
    });
    return id;
  }

  // a (m x k) times b(n x k) transposed.
  Id matmul_nt(Id a, Id b) {
    const Tensor<S>&A = val(a), &B = val(b);
    if (A.cols() != B.cols())
      throw ShapeError("matmul_nt shape mismatch " + shape_str(A.shape()) +
                       " vs " + shape_str(B.shape()));
    Tensor<S> out({A.rows(), B.rows()});
    kern::gemm_nt(A.data(), B.data(), out.data(), A.rows(), A.cols(),
                  B.rows());
    Id id = push_op(std::move(out), {a, b});
    set_back(id, [this, id, a, b] {
      const Tensor<S>& g = nodes_[id].grad;
      const Tensor<S>&A = val(a), &B = val(b);
      // dA += g * B ; dB += g^T * A
      if (needs_grad(a))
        kern::gemm_nn(g.data(), B.data(), grad_buf(a).data(), A.rows(),
                      B.rows(), B.cols());
      if (needs_grad(b))
        kern::gemm_tn(g.data(), A.data(), grad_buf(b).data(), A.rows(),
                      B.rows(), A.cols());
    });
    return id;
  }

  // Elementwise add; b may also be a length-n row broadcast over m x n.
  Id add(Id a, Id b) {
    const Tensor<S>&A = val(a), &B = val(b);
    bool bcast = is_row_broadcast(A, B);
    if (!bcast && !A.same_shape(B))
      throw ShapeError("add shape mismatch " + shape_str(A.shape()) + " vs " +
                       shape_str(B.shape()));
    Tensor<S> out(A.shape());
    const long long n = B.size();
    for (long long i = 0; i < A.size(); ++i)
      out.data()[i] = A.data()[i] + B.data()[bcast ? i % n : i];
    Id id = push_op(std::move(out), {a, b});
    set_back(id, [this, id, a, b, bcast] {
      const Tensor<S>& g = nodes_[id].grad;
      if (needs_grad(a)) {
        Tensor<S>& ga = grad_buf(a);
        for (long long i = 0; i < g.size(); ++i) ga.data()[i] += g.data()[i];
      }
      if (needs_grad(b)) {
        Tensor<S>& gb = grad_buf(b);
        const long long n = gb.size();
        for (long long i = 0; i < g.size(); ++i)
          gb.data()[bcast ? i % n : i] += g.data()[i];
      }
    });
    return id;
  }

  Id sub(Id a, Id b) {
    const Tensor<S>&A = val(a), &B = val(b);
    if (!A.same_shape(B))
      throw ShapeError("sub shape mismatch " + shape_str(A.shape()) + " vs " +
                       shape_str(B.shape()));
    Tensor<S> out(A.shape());
    for (long long i = 0; i < A.size(); ++i)
      out.data()[i] = A.data()[i] - B.data()[i];
    Id id = push_op(std::move(out), {a, b});
    set_back(id, [this, id, a, b] {
      const Tensor<S>& g = nodes_[id].grad;
      if (needs_grad(a)) {
        Tensor<S>& ga = grad_buf(a);
        for (long long i = 0; i < g.size(); ++i) ga.data()[i] += g.data()[i];
      }
      if (needs_grad(b)) {
        Tensor<S>& gb = grad_buf(b);
        for (long long i = 0; i < g.size(); ++i) gb.data()[i] -= g.data()[i];
      }
    });
    return id;
  }

  // Elementwise multiply; b may be a row broadcast.
  Id mul(Id a, Id b) {
    const Tensor<S>&A = val(a), &B = val(b);
    bool bcast = is_row_broadcast(A, B);
    if (!bcast && !A.same_shape(B))
      throw ShapeError("mul shape mismatch " + shape_str(A.shape()) + " vs " +
                       shape_str(B.shape()));
    Tensor<S> out(A.shape());
    const long long n = B.size();
    for (long long i = 0; i < A.size(); ++i)
      out.data()[i] = A.data()[i] * B.data()[bcast ? i % n : i];
    Id id = push_op(std::move(out), {a, b});
    set_back(id, [this, id, a, b, bcast] {
      const Tensor<S>& g = nodes_[id].grad;
      const Tensor<S>&A = val(a), &B = val(b);
      const long long n = B.size();
      if (needs_grad(a)) {
        Tensor<S>& ga = grad_buf(a);
        for (long long i = 0; i < g.size(); ++i)
          ga.data()[i] += g.data()[i] * B.data()[bcast ? i % n : i];
      }
      if (needs_grad(b)) {
        Tensor<S>& gb = grad_buf(b);
        for (long long i = 0; i < g.size(); ++i)
          gb.data()[bcast ? i % n : i] += g.data()[i] * A.data()[i];
      }
    });
    return id;
  }

  Id scale(Id a, S c) {
    const Tensor<S>& A = val(a);
    Tensor<S> out(A.shape());
    for (long long i = 0; i < A.size(); ++i) out.data()[i] = A.data()[i] * c;
    Id id = push_op(std::move(out), {a});
    set_back(id, [this, id, a, c] {
      if (!needs_grad(a)) return;
      const Tensor<S>& g = nodes_[id].grad;
      Tensor<S>& ga = grad_buf(a);
      for (long long i = 0; i < g.size(); ++i) ga.data()[i] += g.data()[i] * c;
    });
    return id;
  }

  Id add_const(Id a, S c) {
    const Tensor<S>& A = val(a);
    Tensor<S> out(A.shape());
    for (long long i = 0; i < A.size(); ++i) out.data()[i] = A.data()[i] + c;
    Id id = push_op(std::move(out), {a});
    set_back(id, [this, id, a] {
      if (!needs_grad(a)) return;
      const Tensor<S>& g = nodes_[id].grad;
      Tensor<S>& ga = grad_buf(a);
      for (long long i = 0; i < g.size(); ++i) ga.data()[i] += g.data()[i];
    });
    return id;
  }

  Id relu(Id a) {
    const Tensor<S>& A = val(a);
    Tensor<S> out(A.shape());
    for (long long i = 0; i < A.size(); ++i)
      out.data()[i] = A.data()[i] > S(0) ? A.data()[i] : S(0);
    Id id = push_op(std::move(out), {a});
    set_back(id, [this, id, a] {
      if (!needs_grad(a)) return;
      const Tensor<S>& g = nodes_[id].grad;
      const Tensor<S>& A = val(a);
      Tensor<S>& ga = grad_buf(a);
      for (long long i = 0; i < g.size(); ++i)
        if (A.data()[i] > S(0)) ga.data()[i] += g.data()[i];
    });
    return id;
  }

  // Sigmoid-weighted gelu approximation, x * sigmoid(1.702 x). Smooth, so
  // finite-difference checks behave.
  Id gelu(Id a) {
    const Tensor<S>& A = val(a);
    Tensor<S> out(A.shape());
    Tensor<S> sig(A.shape());
    for (long long i = 0; i < A.size(); ++i) {
      S s = kern::fast_sigmoid(S(1.702) * A.data()[i]);
      sig.data()[i] = s;
      out.data()[i] = A.data()[i] * s;
    }
    Id id = push_op(std::move(out), {a});
    set_back(id, [this, id, a, sig = std::move(sig)] {
      if (!needs_grad(a)) return;
      const Tensor<S>& g = nodes_[id].grad;
      const Tensor<S>& A = val(a);
      Tensor<S>& ga = grad_buf(a);
      for (long long i = 0; i < g.size(); ++i) {
        S s = sig.data()[i];
        S d = s + A.data()[i] * S(1.702) * s * (S(1) - s);
        ga.data()[i] += g.data()[i] * d;
      }
    });
    return id;
  }

  Id sigmoid(Id a) {
    const Tensor<S>& A = val(a);
    Tensor<S> out(A.shape());
    for (long long i = 0; i < A.size(); ++i)
      out.data()[i] = kern::fast_sigmoid(A.data()[i]);
    Id id = push_op(std::move(out), {a});
    set_back(id, [this, id, a] {
      if (!needs_grad(a)) return;
      const Tensor<S>& g = nodes_[id].grad;
      const Tensor<S>& y = val(id);
      Tensor<S>& ga = grad_buf(a);
      for (long long i = 0; i < g.size(); ++i)
        ga.data()[i] += g.data()[i] * y.data()[i] * (S(1) - y.data()[i]);
    });
    return id;
  }

  Id softplus(Id a) {
    const Tensor<S>& A = val(a);
    Tensor<S> out(A.shape());
    for (long long i = 0; i < A.size(); ++i) {
      S x = A.data()[i];
      out.data()[i] =
          x > S(20) ? x : std::log(S(1) + std::exp(x));  // overflow guard
    }
    Id id = push_op(std::move(out), {a});
    set_back(id, [this, id, a] {
      if (!needs_grad(a)) return;
      const Tensor<S>& g = nodes_[id].grad;
      const Tensor<S>& A = val(a);
      Tensor<S>& ga = grad_buf(a);
      for (long long i = 0; i < g.size(); ++i)
        ga.data()[i] += g.data()[i] * kern::fast_sigmoid(A.data()[i]);
    });
    return id;
  }

  // Softmax over the last axis, numerically shifted per row.
  Id softmax(Id a) {
    const Tensor<S>& A = val(a);
    const int m = A.rows(), n = A.cols();
    Tensor<S> out(A.shape());
    for (int r = 0; r < m; ++r) {
      S mx = A.at(r, 0);
      for (int c = 1; c < n; ++c) mx = std::max(mx, A.at(r, c));
      S sum = S(0);
      for (int c = 0; c < n; ++c) {
        S e = std::exp(A.at(r, c) - mx);
        out.at(r, c) = e;
        sum += e;
      }
      for (int c = 0; c < n; ++c) out.at(r, c) /= sum;
    }
    Id id = push_op(std::move(out), {a});
    set_back(id, [this, id, a] {
      if (!needs_grad(a)) return;
      const Tensor<S>& g = nodes_[id].grad;
      const Tensor<S>& y = val(id);
      Tensor<S>& ga = grad_buf(a);
      const int m = y.rows(), n = y.cols();
      for (int r = 0; r < m; ++r) {
        S dot = S(0);
        for (int c = 0; c < n; ++c) dot += g.at(r, c) * y.at(r, c);
        for (int c = 0; c < n; ++c)
          ga.at(r, c) += (g.at(r, c) - dot) * y.at(r, c);
      }
    });
    return id;
  }

  // Rowwise layer norm with learned gain and bias (1 x n each).
  Id layer_norm(Id x, Id gain, Id bias, S eps = S(1e-5)) {
    const Tensor<S>& X = val(x);
    const int m = X.rows(), n = X.cols();
    if (val(gain).size() != n || val(bias).size() != n)
      throw ShapeError("layer_norm gain/bias width mismatch");
    Tensor<S> out(X.shape());
    Tensor<S> xhat(X.shape());
    Tensor<S> inv_std({m});
    const Tensor<S>&G = val(gain), &B = val(bias);
    for (int r = 0; r < m; ++r) {
      S mean = S(0);
      for (int c = 0; c < n; ++c) mean += X.at(r, c);
      mean /= S(n);
      S var = S(0);
      for (int c = 0; c < n; ++c) {
        S d = X.at(r, c) - mean;
        var += d * d;
      }
      var /= S(n);
      S istd = S(1) / std::sqrt(var + eps);
      inv_std.at(r) = istd;
      for (int c = 0; c < n; ++c) {
        S h = (X.at(r, c) - mean) * istd;
        xhat.at(r, c) = h;
        out.at(r, c) = h * G.data()[c] + B.data()[c];
      }
    }
    Id id = push_op(std::move(out), {x, gain, bias});
    set_back(id, [this, id, x, gain, bias, xhat = std::move(xhat),
                  inv_std = std::move(inv_std)] {
      const Tensor<S>& g = nodes_[id].grad;
      const Tensor<S>& G = val(gain);
      const int m = g.rows(), n = g.cols();
      if (needs_grad(gain)) {
        Tensor<S>& gg = grad_buf(gain);
        for (int r = 0; r < m; ++r)
          for (int c = 0; c < n; ++c)
            gg.data()[c] += g.at(r, c) * xhat.at(r, c);
      }
      if (needs_grad(bias)) {
        Tensor<S>& gb = grad_buf(bias);
        for (int r = 0; r < m; ++r)
          for (int c = 0; c < n; ++c) gb.data()[c] += g.at(r, c);
      }
      if (needs_grad(x)) {
        Tensor<S>& gx = grad_buf(x);
        for (int r = 0; r < m; ++r) {
          S sum_gh = S(0), sum_ghx = S(0);
          for (int c = 0; c < n; ++c) {
            S gh = g.at(r, c) * G.data()[c];
            sum_gh += gh;
            sum_ghx += gh * xhat.at(r, c);
          }
          for (int c = 0; c < n; ++c) {
            S gh = g.at(r, c) * G.data()[c];
            gx.at(r, c) += inv_std.at(r) * (gh - (sum_gh + xhat.at(r, c) * sum_ghx) / S(n));
          }
        }
      }
    });
    return id;
  }

  Id sum_all(Id a) {
    const Tensor<S>& A = val(a);
    S s = S(0);
    for (long long i = 0; i < A.size(); ++i) s += A.data()[i];
    Id id = push_op(Tensor<S>::scalar(s), {a});
    set_back(id, [this, id, a] {
      if (!needs_grad(a)) return;
      const S g = nodes_[id].grad.data()[0];
      Tensor<S>& ga = grad_buf(a);
      for (long long i = 0; i < ga.size(); ++i) ga.data()[i] += g;
    });
    return id;
  }

  Id mean_all(Id a) {
    const long long n = val(a).size();
    return scale(sum_all(a), S(1) / S(n));
  }

  // Row mean: (m x n) -> (1 x n).
  Id mean_rows(Id a) {
    const Tensor<S>& A = val(a);
    const int m = A.rows(), n = A.cols();
    Tensor<S> out({1, n});
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < n; ++c) out.at(0, c) += A.at(r, c) / S(m);
    Id id = push_op(std::move(out), {a});
    set_back(id, [this, id, a, m, n] {
      if (!needs_grad(a)) return;
      const Tensor<S>& g = nodes_[id].grad;
      Tensor<S>& ga = grad_buf(a);
      for (int r = 0; r < m; ++r)
        for (int c = 0; c < n; ++c) ga.at(r, c) += g.at(0, c) / S(m);
    });
    return id;
  }

  Id concat_cols(Id a, Id b) {
    const Tensor<S>&A = val(a), &B = val(b);
    if (A.rows() != B.rows())
      throw ShapeError("concat_cols row mismatch " + shape_str(A.shape()) +
                       " vs " + shape_str(B.shape()));
    const int m = A.rows(), na = A.cols(), nb = B.cols();
    Tensor<S> out({m, na + nb});
    for (int r = 0; r < m; ++r) {
      for (int c = 0; c < na; ++c) out.at(r, c) = A.at(r, c);
      for (int c = 0; c < nb; ++c) out.at(r, na + c) = B.at(r, c);
    }
    Id id = push_op(std::move(out), {a, b});
    set_back(id, [this, id, a, b, m, na, nb] {
      const Tensor<S>& g = nodes_[id].grad;
      if (needs_grad(a)) {
        Tensor<S>& ga = grad_buf(a);
        for (int r = 0; r < m; ++r)
          for (int c = 0; c < na; ++c) ga.at(r, c) += g.at(r, c);
      }
      if (needs_grad(b)) {
        Tensor<S>& gb = grad_buf(b);
        for (int r = 0; r < m; ++r)
          for (int c = 0; c < nb; ++c) gb.at(r, c) += g.at(r, na + c);
      }
    });
    return id;
  }

  Id slice_cols(Id a, int start, int len) {
    const Tensor<S>& A = val(a);
    const int m = A.rows(), n = A.cols();
    if (start < 0 || start + len > n)
      throw ShapeError("slice_cols out of range");
    Tensor<S> out({m, len});
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < len; ++c) out.at(r, c) = A.at(r, start + c);
    Id id = push_op(std::move(out), {a});
    set_back(id, [this, id, a, start, len] {
      if (!needs_grad(a)) return;
      const Tensor<S>& g = nodes_[id].grad;
      Tensor<S>& ga = grad_buf(a);
      for (int r = 0; r < g.rows(); ++r)
        for (int c = 0; c < len; ++c) ga.at(r, start + c) += g.at(r, c);
    });
    return id;
  }

  Id slice_rows(Id a, int start, int len) {
    const Tensor<S>& A = val(a);
    const int n = A.cols();
    if (start < 0 || start + len > A.rows())
      throw ShapeError("slice_rows out of range");
    Tensor<S> out({len, n});
    for (int r = 0; r < len; ++r)
      for (int c = 0; c < n; ++c) out.at(r, c) = A.at(start + r, c);
    Id id = push_op(std::move(out), {a});
    set_back(id, [this, id, a, start, len] {
      if (!needs_grad(a)) return;
      const Tensor<S>& g = nodes_[id].grad;
      Tensor<S>& ga = grad_buf(a);
      for (int r = 0; r < len; ++r)
        for (int c = 0; c < g.cols(); ++c) ga.at(start + r, c) += g.at(r, c);
    });
    return id;
  }

  // Row gather from an embedding table; backward scatter-adds.
  Id gather_rows(Id table, std::vector<int> idx) {
    const Tensor<S>& T = val(table);
    const int n = T.cols();
    Tensor<S> out({static_cast<int>(idx.size()), n});
    for (std::size_t r = 0; r < idx.size(); ++r) {
      if (idx[r] < 0 || idx[r] >= T.rows())
        throw ShapeError("gather_rows index out of range");
      for (int c = 0; c < n; ++c)
        out.at(static_cast<int>(r), c) = T.at(idx[r], c);
    }
    Id id = push_op(std::move(out), {table});
    set_back(id, [this, id, table, idx = std::move(idx)] {
      if (!needs_grad(table)) return;
      const Tensor<S>& g = nodes_[id].grad;
      Tensor<S>& gt = grad_buf(table);
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (int c = 0; c < g.cols(); ++c)
          gt.at(idx[r], c) += g.at(static_cast<int>(r), c);
    });
    return id;
  }

  // Entries where mask is nonzero are replaced by `value`; gradient is
  // blocked there.
  Id masked_fill(Id a, const Tensor<S>& mask, S value) {
    const Tensor<S>& A = val(a);
    if (!A.same_shape(mask))
      throw ShapeError("masked_fill mask shape mismatch");
    Tensor<S> out(A.shape());
    for (long long i = 0; i < A.size(); ++i)
      out.data()[i] = mask.data()[i] != S(0) ? value : A.data()[i];
    Id id = push_op(std::move(out), {a});
    set_back(id, [this, id, a, mask] {
      if (!needs_grad(a)) return;
      const Tensor<S>& g = nodes_[id].grad;
      Tensor<S>& ga = grad_buf(a);
      for (long long i = 0; i < g.size(); ++i)
        if (mask.data()[i] == S(0)) ga.data()[i] += g.data()[i];
    });
    return id;
  }

  // Multi-head scaled dot-product attention with an additive logit bias.
  // q, k, v: (n x d) with d split across `heads`; bias: (n*n x heads) as
  // produced by a row gather over pair indices. Fused into one node to
  // keep tape overhead off the training hot path.
  Id multihead_attention(Id q, Id k, Id v, Id bias, int heads) {
    const Tensor<S>&Q = val(q), &K = val(k), &V = val(v), &B = val(bias);
    const int n = Q.rows(), d = Q.cols();
    if (K.rows() != n || K.cols() != d || V.rows() != n || V.cols() != d)
      throw ShapeError("attention operand mismatch");
    if (d % heads != 0) throw ShapeError("heads must divide width");
    if (B.rows() != n * n || B.cols() != heads)
      throw ShapeError("attention bias must be (n*n x heads)");
    const int dh = d / heads;
    const S scale = S(1) / std::sqrt(static_cast<S>(dh));
    Tensor<S> att({heads * n, n});  // softmax rows per head, kept for backward
    Tensor<S> out({n, d});
    for (int h = 0; h < heads; ++h) {
      const int off = h * dh;
      for (int i = 0; i < n; ++i) {
        S* arow = att.data() + (static_cast<std::size_t>(h) * n + i) * n;
        const S* qi = Q.data() + static_cast<std::size_t>(i) * d + off;
        S mx = -std::numeric_limits<S>::infinity();
        for (int j = 0; j < n; ++j) {
          const S* kj = K.data() + static_cast<std::size_t>(j) * d + off;
          S acc = S(0);
#pragma omp simd reduction(+ : acc)
          for (int c = 0; c < dh; ++c) acc += qi[c] * kj[c];
          acc = acc * scale + B.at(i * n + j, h);
          arow[j] = acc;
          mx = std::max(mx, acc);
        }
        S sum = S(0);
        for (int j = 0; j < n; ++j) {
          arow[j] = std::exp(arow[j] - mx);
          sum += arow[j];
        }
        S* orow = out.data() + static_cast<std::size_t>(i) * d + off;
        for (int j = 0; j < n; ++j) {
          arow[j] /= sum;
          const S* vj = V.data() + static_cast<std::size_t>(j) * d + off;
          const S a = arow[j];
#pragma omp simd
          for (int c = 0; c < dh; ++c) orow[c] += a * vj[c];
        }
      }
    }
    Id id = push_op(std::move(out), {q, k, v, bias});
    set_back(id, [this, id, q, k, v, bias, heads, n, d, dh, scale,
                  att = std::move(att)] {
      const Tensor<S>& g = nodes_[id].grad;
      const Tensor<S>&Q = val(q), &K = val(k), &V = val(v);
      Tensor<S>&gq = grad_buf(q), &gk = grad_buf(k), &gv = grad_buf(v),
               &gb = grad_buf(bias);
      std::vector<S> ds(static_cast<std::size_t>(n));
      for (int h = 0; h < heads; ++h) {
        const int off = h * dh;
        for (int i = 0; i < n; ++i) {
          const S* arow = att.data() + (static_cast<std::size_t>(h) * n + i) * n;
          const S* grow = g.data() + static_cast<std::size_t>(i) * d + off;
          // dA(i,j) = dot(dO_i, V_j); dV_j += A(i,j) dO_i
          S dot_sum = S(0);
          for (int j = 0; j < n; ++j) {
            const S* vj = V.data() + static_cast<std::size_t>(j) * d + off;
            S acc = S(0);
#pragma omp simd reduction(+ : acc)
            for (int c = 0; c < dh; ++c) acc += grow[c] * vj[c];
            ds[static_cast<std::size_t>(j)] = acc;
            dot_sum += acc * arow[j];
            S* gvj = gv.data() + static_cast<std::size_t>(j) * d + off;
            const S a = arow[j];
#pragma omp simd
            for (int c = 0; c < dh; ++c) gvj[c] += a * grow[c];
          }
          // softmax backward into logits, then bias/q/k
          S* gqi = gq.data() + static_cast<std::size_t>(i) * d + off;
          const S* qi = Q.data() + static_cast<std::size_t>(i) * d + off;
          for (int j = 0; j < n; ++j) {
            const S dlogit = (ds[static_cast<std::size_t>(j)] - dot_sum) *
                             arow[j];
            gb.at(i * n + j, h) += dlogit;
            const S w = dlogit * scale;
            const S* kj = K.data() + static_cast<std::size_t>(j) * d + off;
            S* gkj = gk.data() + static_cast<std::size_t>(j) * d + off;
#pragma omp simd
            for (int c = 0; c < dh; ++c) {
              gqi[c] += w * kj[c];
              gkj[c] += w * qi[c];
            }
          }
        }
      }
    });
    return id;
  }

  // Square-matrix symmetrization from the upper triangle: out(i,j) =
  // out(j,i) = a(i,j) for i < j, zero diagonal.
  Id sym_upper(Id a) {
    const Tensor<S>& A = val(a);
    if (A.rank() != 2 || A.rows() != A.cols())
      throw ShapeError("sym_upper needs a square matrix, got " +
                       shape_str(A.shape()));
    const int n = A.rows();
    Tensor<S> out(A.shape());
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        out.at(i, j) = A.at(i, j);
        out.at(j, i) = A.at(i, j);
      }
    Id id = push_op(std::move(out), {a});
    set_back(id, [this, id, a, n] {
      if (!needs_grad(a)) return;
      const Tensor<S>& g = nodes_[id].grad;
      Tensor<S>& ga = grad_buf(a);
      for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
          ga.at(i, j) += g.at(i, j) + g.at(j, i);
    });
    return id;
  }

  Id reshape(Id a, std::vector<int> shape) {
    const Tensor<S>& A = val(a);
    if (Tensor<S>::count(shape) != A.size())
      throw ShapeError("reshape element count mismatch");
    Tensor<S> out(shape, A.vec());
    Id id = push_op(std::move(out), {a});
    set_back(id, [this, id, a] {
      if (!needs_grad(a)) return;
      const Tensor<S>& g = nodes_[id].grad;
      Tensor<S>& ga = grad_buf(a);
      for (long long i = 0; i < g.size(); ++i) ga.data()[i] += g.data()[i];
    });
    return id;
  }

  // Mean squared error over all entries.
  Id mse(Id a, Id b) {
    const Tensor<S>&A = val(a), &B = val(b);
    if (!A.same_shape(B))
      throw ShapeError("mse shape mismatch " + shape_str(A.shape()) + " vs " +
                       shape_str(B.shape()));
    const long long n = A.size();
    S s = S(0);
    for (long long i = 0; i < n; ++i) {
      S d = A.data()[i] - B.data()[i];
      s += d * d;
    }
    Id id = push_op(Tensor<S>::scalar(s / S(n)), {a, b});
    set_back(id, [this, id, a, b, n] {
      const S g = nodes_[id].grad.data()[0];
      const Tensor<S>&A = val(a), &B = val(b);
      const S k = S(2) * g / S(n);
      if (needs_grad(a)) {
        Tensor<S>& ga = grad_buf(a);
        for (long long i = 0; i < n; ++i)
          ga.data()[i] += k * (A.data()[i] - B.data()[i]);
      }
      if (needs_grad(b)) {
        Tensor<S>& gb = grad_buf(b);
        for (long long i = 0; i < n; ++i)
          gb.data()[i] -= k * (A.data()[i] - B.data()[i]);
      }
    });
    return id;
  }

  // Mean multiclass cross entropy from logits (m x C) against integer
  // labels; log-sum-exp shifted per row.
  Id cross_entropy(Id logits, std::vector<int> labels) {
    const Tensor<S>& L = val(logits);
    const int m = L.rows(), n = L.cols();
    if (static_cast<int>(labels.size()) != m)
      throw ShapeError("cross_entropy label count mismatch");
    Tensor<S> probs(L.shape());
    S loss = S(0);
    for (int r = 0; r < m; ++r) {
      S mx = L.at(r, 0);
      for (int c = 1; c < n; ++c) mx = std::max(mx, L.at(r, c));
      S sum = S(0);
      for (int c = 0; c < n; ++c) {
        S e = std::exp(L.at(r, c) - mx);
        probs.at(r, c) = e;
        sum += e;
      }
      for (int c = 0; c < n; ++c) probs.at(r, c) /= sum;
      loss -= std::log(std::max(probs.at(r, labels[r]), S(1e-30)));
    }
    Id id = push_op(Tensor<S>::scalar(loss / S(m)), {logits});
    set_back(id, [this, id, logits, labels = std::move(labels),
                  probs = std::move(probs)] {
      if (!needs_grad(logits)) return;
      const S g = nodes_[id].grad.data()[0];
      Tensor<S>& gl = grad_buf(logits);
      const int m = probs.rows(), n = probs.cols();
      for (int r = 0; r < m; ++r)
        for (int c = 0; c < n; ++c) {
          S t = c == labels[r] ? S(1) : S(0);
          gl.at(r, c) += g * (probs.at(r, c) - t) / S(m);
        }
    });
    return id;
  }

  // Mean binary cross entropy from logits against 0/1 targets.
  Id bce_logits(Id logits, const Tensor<S>& targets) {
    const Tensor<S>& L = val(logits);
    if (!L.same_shape(targets)) throw ShapeError("bce_logits shape mismatch");
    const long long n = L.size();
    S loss = S(0);
    for (long long i = 0; i < n; ++i) {
      S x = L.data()[i], t = targets.data()[i];
      // log(1 + exp(-|x|)) + max(x, 0) - x t
      loss += (x > S(0) ? x : S(0)) - x * t +
              std::log(S(1) + std::exp(-std::abs(x)));
    }
    Id id = push_op(Tensor<S>::scalar(loss / S(n)), {logits});
    set_back(id, [this, id, logits, targets] {
      if (!needs_grad(logits)) return;
      const S g = nodes_[id].grad.data()[0];
      const Tensor<S>& L = val(logits);
      Tensor<S>& gl = grad_buf(logits);
      const long long n = L.size();
      for (long long i = 0; i < n; ++i)
        gl.data()[i] += g * (kern::fast_sigmoid(L.data()[i]) -
                             targets.data()[i]) / S(n);
    });
    return id;
  }

  // x W + b convenience wrapper.
  Id affine(Id x, Id w, Id b) { return add(matmul(x, w), b); }

  // --- backward ---

  void backward(Id loss) {
    if (used_)
      throw TapeError("tape already consumed; rebuild the forward pass");
    used_ = true;
    if (val(loss).size() != 1) throw TapeError("backward needs scalar loss");
    grad_buf(loss).data()[0] = S(1);
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.grad.size() != 0 && n.back) n.back();
    }
  }

  bool consumed() const { return used_; }

 private:
  struct Node {
    Tensor<S> owned;
    const Tensor<S>* ext = nullptr;
    Tensor<S> grad;
    bool needs_grad = false;
    std::function<void()> back;
  };

  static bool is_row_broadcast(const Tensor<S>& a, const Tensor<S>& b) {
    return a.rank() == 2 && b.rows() == 1 && b.cols() == a.cols() &&
           a.rows() != 1;
  }

  Id push(Tensor<S> owned, const Tensor<S>* ext, bool needs_grad) {
    Node n;
    n.owned = std::move(owned);
    n.ext = ext;
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size() - 1);
  }

  Id push_op(Tensor<S> out, std::initializer_list<Id> inputs) {
    bool ng = false;
    for (Id i : inputs) ng = ng || needs_grad(i);
    return push(std::move(out), nullptr, ng);
  }

  void set_back(Id id, std::function<void()> fn) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.needs_grad) n.back = std::move(fn);
  }

  Tensor<S>& grad_buf(Id id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.size() == 0) n.grad = Tensor<S>(val(id).shape());
    return n.grad;
  }

  std::vector<Node> nodes_;
  bool used_ = false;
};

using TapeF = Tape<float>;
using TapeD = Tape<double>;

}  // namespace lrxf::ad
