#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "posbias/tensor.hpp"

namespace posbias::nn {

/// Handle to a node on a Tape.
struct Var {
  std::int32_t idx = -1;
  bool valid() const { return idx >= 0; }
};

/// Records primitive operations so a scalar result can be differentiated with
/// one reverse sweep. Nodes only ever reference earlier nodes, so creation
/// order is a topological order; backward() walks it in reverse and
/// accumulates gradients additively at fan-out.
///
/// Leaves created with leaf_ref() alias caller-owned tensors: they must stay
/// alive and unmodified for the lifetime of the tape. A tape belongs to one
/// logical run; it is not thread-safe and not copyable.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::size_t size() const { return nodes_.size(); }

  /// Differentiable leaf owning a copy of the value.
  Var leaf(Tensor value) { return push_owned(std::move(value), true); }

  /// Differentiable leaf aliasing external storage (no copy).
  Var leaf_ref(const Tensor* value) { return push_external(value, true); }

  /// Non-differentiable input; consumers skip its gradient entirely.
  Var constant(Tensor value) { return push_owned(std::move(value), false); }
  Var constant_ref(const Tensor* value) { return push_external(value, false); }

  const Tensor& value(Var v) const { return resolve(v.idx); }

  /// Gradient of the last backward() target w.r.t. v; nullptr when v is not
  /// on any path to the target (its gradient is identically zero).
  const Tensor* grad(Var v) const {
    const Node& n = nodes_.at(static_cast<std::size_t>(v.idx));
    return n.grad_live ? &n.grad : nullptr;
  }

  bool needs_grad(Var v) const {
    return nodes_[static_cast<std::size_t>(v.idx)].need_grad;
  }

  /// Reverse sweep from a scalar node. Gradients from any previous sweep are
  /// discarded.
  void backward(Var loss) {
    const Tensor& lv = value(loss);
    if (!lv.is_scalar())
      throw std::invalid_argument("Tape::backward: loss must be a scalar");
    for (Node& n : nodes_) n.grad_live = false;
    gbuf(loss.idx)[0] = 1.0;
    for (std::int32_t i = loss.idx; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.back && n.grad_live) n.back();
    }
  }

  // ---- primitives ----------------------------------------------------

  Var add(Var a, Var b) {
    const Tensor &av = value(a), &bv = value(b);
    check_same_shape(av, bv, "add");
    Tensor out(av.shape());
    out.vec() = av.vec() + bv.vec();
    return binary_linear(std::move(out), a, b, 1.0, 1.0);
  }

  Var sub(Var a, Var b) {
    const Tensor &av = value(a), &bv = value(b);
    check_same_shape(av, bv, "sub");
    Tensor out(av.shape());
    out.vec() = av.vec() - bv.vec();
    return binary_linear(std::move(out), a, b, 1.0, -1.0);
  }

  /// Elementwise product.
  Var mul(Var a, Var b) {
    const Tensor &av = value(a), &bv = value(b);
    check_same_shape(av, bv, "mul");
    Tensor out(av.shape());
    out.vec() = av.vec().cwiseProduct(bv.vec());
    Var c = push_owned(std::move(out), needs_grad(a) || needs_grad(b));
    if (node(c).need_grad) {
      set_back(c, [this, a, b, c] {
        const Tensor& dc = node(c).grad;
        if (needs_grad(a)) gbuf(a.idx).vec() += dc.vec().cwiseProduct(value(b).vec());
        if (needs_grad(b)) gbuf(b.idx).vec() += dc.vec().cwiseProduct(value(a).vec());
      });
    }
    return c;
  }

  Var scale(Var a, double k) {
    Tensor out(value(a).shape());
    out.vec() = value(a).vec() * k;
    Var c = push_owned(std::move(out), needs_grad(a));
    if (node(c).need_grad) {
      set_back(c, [this, a, c, k] { gbuf(a.idx).vec() += k * node(c).grad.vec(); });
    }
    return c;
  }

  /// C = op(A) * op(B) where op transposes when the flag is set. 2-D only.
  Var matmul(Var a, Var b, bool ta = false, bool tb = false) {
    const Tensor &av = value(a), &bv = value(b);
    if (av.rank() != 2 || bv.rank() != 2)
      throw std::invalid_argument("matmul: operands must be rank 2");
    const std::size_t m = ta ? av.cols() : av.rows();
    const std::size_t k = ta ? av.rows() : av.cols();
    const std::size_t k2 = tb ? bv.cols() : bv.rows();
    const std::size_t n = tb ? bv.rows() : bv.cols();
    if (k != k2)
      throw std::invalid_argument("matmul: inner dimensions disagree: " +
                                  av.shape_str() + " vs " + bv.shape_str());
    Tensor out = Tensor::zeros(m, n);
    {
      auto A = av.mat();
      auto B = bv.mat();
      auto C = out.mat();
      if (!ta && !tb) C.noalias() = A * B;
      else if (ta && !tb) C.noalias() = A.transpose() * B;
      else if (!ta && tb) C.noalias() = A * B.transpose();
      else C.noalias() = A.transpose() * B.transpose();
    }
    Var c = push_owned(std::move(out), needs_grad(a) || needs_grad(b));
    if (node(c).need_grad) {
      set_back(c, [this, a, b, c, ta, tb] {
        auto dC = node(c).grad.mat();
        if (needs_grad(a)) {
          auto dA = gbuf(a.idx).mat();
          auto B = value(b).mat();
          if (!ta && !tb) dA.noalias() += dC * B.transpose();
          else if (ta && !tb) dA.noalias() += B * dC.transpose();
          else if (!ta && tb) dA.noalias() += dC * B;
          else dA.noalias() += B.transpose() * dC.transpose();
        }
        if (needs_grad(b)) {
          auto dB = gbuf(b.idx).mat();
          auto A = value(a).mat();
          if (!ta && !tb) dB.noalias() += A.transpose() * dC;
          else if (ta && !tb) dB.noalias() += A * dC;
          else if (!ta && tb) dB.noalias() += dC.transpose() * A;
          else dB.noalias() += dC.transpose() * A.transpose();
        }
      });
    }
    return c;
  }

  /// y = op(A) * x for a vector x.
  Var matvec(Var a, Var x, bool ta = false) {
    const Tensor &av = value(a), &xv = value(x);
    if (av.rank() != 2 || xv.rank() != 1)
      throw std::invalid_argument("matvec: expected matrix and vector");
    const std::size_t m = ta ? av.cols() : av.rows();
    const std::size_t k = ta ? av.rows() : av.cols();
    if (k != xv.size())
      throw std::invalid_argument("matvec: dimensions disagree: " +
                                  av.shape_str() + " vs " + xv.shape_str());
    Tensor out = Tensor::zeros(m);
    if (ta) out.vec().noalias() = av.mat().transpose() * xv.vec();
    else out.vec().noalias() = av.mat() * xv.vec();
    Var c = push_owned(std::move(out), needs_grad(a) || needs_grad(x));
    if (node(c).need_grad) {
      set_back(c, [this, a, x, c, ta] {
        auto dy = node(c).grad.vec();
        if (needs_grad(a)) {
          auto dA = gbuf(a.idx).mat();
          if (ta) dA.noalias() += value(x).vec() * dy.transpose();
          else dA.noalias() += dy * value(x).vec().transpose();
        }
        if (needs_grad(x)) {
          auto dx = gbuf(x.idx).vec();
          if (ta) dx.noalias() += value(a).mat() * dy;
          else dx.noalias() += value(a).mat().transpose() * dy;
        }
      });
    }
    return c;
  }

  /// y = W x + b, fused.
  Var affine(Var w, Var x, Var b) {
    const Tensor &wv = value(w), &xv = value(x), &bv = value(b);
    if (wv.rank() != 2 || xv.rank() != 1 || bv.rank() != 1 ||
        wv.cols() != xv.size() || wv.rows() != bv.size())
      throw std::invalid_argument("affine: shapes disagree: " + wv.shape_str() +
                                  ", " + xv.shape_str() + ", " + bv.shape_str());
    Tensor out = Tensor::zeros(wv.rows());
    out.vec().noalias() = wv.mat() * xv.vec() + bv.vec();
    Var c = push_owned(std::move(out),
                       needs_grad(w) || needs_grad(x) || needs_grad(b));
    if (node(c).need_grad) {
      set_back(c, [this, w, x, b, c] {
        auto dy = node(c).grad.vec();
        if (needs_grad(w)) gbuf(w.idx).mat().noalias() += dy * value(x).vec().transpose();
        if (needs_grad(x)) gbuf(x.idx).vec().noalias() += value(w).mat().transpose() * dy;
        if (needs_grad(b)) gbuf(b.idx).vec() += dy;
      });
    }
    return c;
  }

  Var dot(Var a, Var b) {
    const Tensor &av = value(a), &bv = value(b);
    check_same_shape(av, bv, "dot");
    Var c = push_owned(Tensor::scalar(av.vec().dot(bv.vec())),
                       needs_grad(a) || needs_grad(b));
    if (node(c).need_grad) {
      set_back(c, [this, a, b, c] {
        const double d = node(c).grad[0];
        if (needs_grad(a)) gbuf(a.idx).vec() += d * value(b).vec();
        if (needs_grad(b)) gbuf(b.idx).vec() += d * value(a).vec();
      });
    }
    return c;
  }

  Var sigmoid(Var a) {
    const Tensor& av = value(a);
    Tensor out(av.shape());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = sigmoid_scalar(av[i]);
    Var c = push_owned(std::move(out), needs_grad(a));
    if (node(c).need_grad) {
      set_back(c, [this, a, c] {
        const Tensor& y = value(c);
        const Tensor& dc = node(c).grad;
        Tensor& da = gbuf(a.idx);
        for (std::size_t i = 0; i < y.size(); ++i)
          da[i] += dc[i] * y[i] * (1.0 - y[i]);
      });
    }
    return c;
  }

  Var tanh(Var a) {
    const Tensor& av = value(a);
    Tensor out(av.shape());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = std::tanh(av[i]);
    Var c = push_owned(std::move(out), needs_grad(a));
    if (node(c).need_grad) {
      set_back(c, [this, a, c] {
        const Tensor& y = value(c);
        const Tensor& dc = node(c).grad;
        Tensor& da = gbuf(a.idx);
        for (std::size_t i = 0; i < y.size(); ++i)
          da[i] += dc[i] * (1.0 - y[i] * y[i]);
      });
    }
    return c;
  }

  /// Contiguous slice of a vector.
  Var slice(Var a, std::size_t offset, std::size_t len) {
    const Tensor& av = value(a);
    if (av.rank() != 1 || offset + len > av.size())
      throw std::invalid_argument("slice: out of range");
    Tensor out = Tensor::zeros(len);
    std::copy(av.data() + offset, av.data() + offset + len, out.data());
    Var c = push_owned(std::move(out), needs_grad(a));
    if (node(c).need_grad) {
      set_back(c, [this, a, c, offset, len] {
        const Tensor& dc = node(c).grad;
        Tensor& da = gbuf(a.idx);
        for (std::size_t i = 0; i < len; ++i) da[offset + i] += dc[i];
      });
    }
    return c;
  }

  /// Row r of a matrix as a vector.
  Var row(Var a, std::size_t r) {
    const Tensor& av = value(a);
    if (av.rank() != 2 || r >= av.rows())
      throw std::invalid_argument("row: out of range");
    const std::size_t d = av.cols();
    Tensor out = Tensor::zeros(d);
    std::copy(av.data() + r * d, av.data() + (r + 1) * d, out.data());
    Var c = push_owned(std::move(out), needs_grad(a));
    if (node(c).need_grad) {
      set_back(c, [this, a, c, r, d] {
        const Tensor& dc = node(c).grad;
        Tensor& da = gbuf(a.idx);
        for (std::size_t i = 0; i < d; ++i) da[r * d + i] += dc[i];
      });
    }
    return c;
  }

  /// First `n` rows of a matrix.
  Var top_rows(Var a, std::size_t n) {
    const Tensor& av = value(a);
    if (av.rank() != 2 || n > av.rows())
      throw std::invalid_argument("top_rows: out of range");
    const std::size_t d = av.cols();
    Tensor out = Tensor::zeros(n, d);
    std::copy(av.data(), av.data() + n * d, out.data());
    Var c = push_owned(std::move(out), needs_grad(a));
    if (node(c).need_grad) {
      set_back(c, [this, a, c, n, d] {
        const Tensor& dc = node(c).grad;
        Tensor& da = gbuf(a.idx);
        for (std::size_t i = 0; i < n * d; ++i) da[i] += dc[i];
      });
    }
    return c;
  }

  /// Rows [start, start+len) of a matrix.
  Var row_range(Var a, std::size_t start, std::size_t len) {
    const Tensor& av = value(a);
    if (av.rank() != 2 || start + len > av.rows())
      throw std::invalid_argument("row_range: out of range");
    const std::size_t d = av.cols();
    Tensor out = Tensor::zeros(len, d);
    std::copy(av.data() + start * d, av.data() + (start + len) * d, out.data());
    Var c = push_owned(std::move(out), needs_grad(a));
    if (node(c).need_grad) {
      set_back(c, [this, a, c, start, len, d] {
        const Tensor& dc = node(c).grad;
        Tensor& da = gbuf(a.idx);
        for (std::size_t i = 0; i < len * d; ++i) da[start * d + i] += dc[i];
      });
    }
    return c;
  }

  /// Gather rows by index (with repeats); scatter-add on the way back.
  Var gather_rows(Var a, std::vector<std::size_t> ids) {
    const Tensor& av = value(a);
    if (av.rank() != 2) throw std::invalid_argument("gather_rows: need matrix");
    const std::size_t d = av.cols();
    Tensor out = Tensor::zeros(ids.size(), d);
    for (std::size_t r = 0; r < ids.size(); ++r) {
      if (ids[r] >= av.rows()) throw std::invalid_argument("gather_rows: id out of range");
      std::copy(av.data() + ids[r] * d, av.data() + (ids[r] + 1) * d,
                out.data() + r * d);
    }
    Var c = push_owned(std::move(out), needs_grad(a));
    if (node(c).need_grad) {
      set_back(c, [this, a, c, ids = std::move(ids), d] {
        const Tensor& dc = node(c).grad;
        Tensor& da = gbuf(a.idx);
        for (std::size_t r = 0; r < ids.size(); ++r)
          for (std::size_t j = 0; j < d; ++j)
            da[ids[r] * d + j] += dc[r * d + j];
      });
    }
    return c;
  }

  Var concat(Var a, Var b) {
    const Tensor &av = value(a), &bv = value(b);
    if (av.rank() != 1 || bv.rank() != 1)
      throw std::invalid_argument("concat: expected vectors");
    Tensor out = Tensor::zeros(av.size() + bv.size());
    std::copy(av.data(), av.data() + av.size(), out.data());
    std::copy(bv.data(), bv.data() + bv.size(), out.data() + av.size());
    Var c = push_owned(std::move(out), needs_grad(a) || needs_grad(b));
    if (node(c).need_grad) {
      const std::size_t na = av.size(), nb = bv.size();
      set_back(c, [this, a, b, c, na, nb] {
        const Tensor& dc = node(c).grad;
        if (needs_grad(a)) {
          Tensor& da = gbuf(a.idx);
          for (std::size_t i = 0; i < na; ++i) da[i] += dc[i];
        }
        if (needs_grad(b)) {
          Tensor& db = gbuf(b.idx);
          for (std::size_t i = 0; i < nb; ++i) db[i] += dc[na + i];
        }
      });
    }
    return c;
  }

  /// [A | B] for matrices with equal row counts.
  Var concat_cols(Var a, Var b) {
    const Tensor &av = value(a), &bv = value(b);
    if (av.rank() != 2 || bv.rank() != 2 || av.rows() != bv.rows())
      throw std::invalid_argument("concat_cols: row counts disagree");
    const std::size_t n = av.rows(), p = av.cols(), q = bv.cols();
    Tensor out = Tensor::zeros(n, p + q);
    for (std::size_t r = 0; r < n; ++r) {
      std::copy(av.data() + r * p, av.data() + (r + 1) * p, out.data() + r * (p + q));
      std::copy(bv.data() + r * q, bv.data() + (r + 1) * q,
                out.data() + r * (p + q) + p);
    }
    Var c = push_owned(std::move(out), needs_grad(a) || needs_grad(b));
    if (node(c).need_grad) {
      set_back(c, [this, a, b, c, n, p, q] {
        const Tensor& dc = node(c).grad;
        if (needs_grad(a)) {
          Tensor& da = gbuf(a.idx);
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t j = 0; j < p; ++j) da[r * p + j] += dc[r * (p + q) + j];
        }
        if (needs_grad(b)) {
          Tensor& db = gbuf(b.idx);
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t j = 0; j < q; ++j)
              db[r * q + j] += dc[r * (p + q) + p + j];
        }
      });
    }
    return c;
  }

  /// Stack equal-length vectors into a matrix, one per row.
  Var stack_rows(const std::vector<Var>& rows) {
    if (rows.empty()) throw std::invalid_argument("stack_rows: empty");
    const std::size_t d = value(rows[0]).size();
    Tensor out = Tensor::zeros(rows.size(), d);
    bool need = false;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const Tensor& rv = value(rows[r]);
      if (rv.rank() != 1 || rv.size() != d)
        throw std::invalid_argument("stack_rows: inconsistent row lengths");
      std::copy(rv.data(), rv.data() + d, out.data() + r * d);
      need = need || needs_grad(rows[r]);
    }
    Var c = push_owned(std::move(out), need);
    if (node(c).need_grad) {
      set_back(c, [this, rows, c, d] {
        const Tensor& dc = node(c).grad;
        for (std::size_t r = 0; r < rows.size(); ++r) {
          if (!needs_grad(rows[r])) continue;
          Tensor& dr = gbuf(rows[r].idx);
          for (std::size_t j = 0; j < d; ++j) dr[j] += dc[r * d + j];
        }
      });
    }
    return c;
  }

  /// Mean of the rows of a matrix (per-column average).
  Var mean_rows(Var a) {
    const Tensor& av = value(a);
    if (av.rank() != 2 || av.rows() == 0)
      throw std::invalid_argument("mean_rows: need non-empty matrix");
    const std::size_t n = av.rows(), d = av.cols();
    Tensor out = Tensor::zeros(d);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < d; ++j) out[j] += av[r * d + j];
    for (std::size_t j = 0; j < d; ++j) out[j] /= static_cast<double>(n);
    Var c = push_owned(std::move(out), needs_grad(a));
    if (node(c).need_grad) {
      set_back(c, [this, a, c, n, d] {
        const Tensor& dc = node(c).grad;
        Tensor& da = gbuf(a.idx);
        const double inv = 1.0 / static_cast<double>(n);
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t j = 0; j < d; ++j) da[r * d + j] += dc[j] * inv;
      });
    }
    return c;
  }

  /// diag(w) * A: scales row i of A by w[i].
  Var row_scale(Var a, Var w) {
    const Tensor &av = value(a), &wv = value(w);
    if (av.rank() != 2 || wv.rank() != 1 || av.rows() != wv.size())
      throw std::invalid_argument("row_scale: shapes disagree");
    const std::size_t n = av.rows(), d = av.cols();
    Tensor out = Tensor::zeros(n, d);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < d; ++j) out[r * d + j] = wv[r] * av[r * d + j];
    Var c = push_owned(std::move(out), needs_grad(a) || needs_grad(w));
    if (node(c).need_grad) {
      set_back(c, [this, a, w, c, n, d] {
        const Tensor& dc = node(c).grad;
        if (needs_grad(a)) {
          Tensor& da = gbuf(a.idx);
          const Tensor& wv = value(w);
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t j = 0; j < d; ++j) da[r * d + j] += wv[r] * dc[r * d + j];
        }
        if (needs_grad(w)) {
          Tensor& dw = gbuf(w.idx);
          const Tensor& av = value(a);
          for (std::size_t r = 0; r < n; ++r) {
            double s = 0.0;
            for (std::size_t j = 0; j < d; ++j) s += dc[r * d + j] * av[r * d + j];
            dw[r] += s;
          }
        }
      });
    }
    return c;
  }

  /// Masked, max-stabilized softmax over a vector. Masked entries are exactly
  /// zero in the output. Throws if every entry is masked.
  Var softmax(Var x, const std::vector<bool>* mask = nullptr) {
    const Tensor& xv = value(x);
    if (xv.rank() != 1) throw std::invalid_argument("softmax: expected vector");
    if (mask && mask->size() != xv.size())
      throw std::invalid_argument("softmax: mask length mismatch");
    Tensor out = Tensor::zeros(xv.size());
    softmax_kernel(xv.data(), out.data(), xv.size(), mask);
    Var c = push_owned(std::move(out), needs_grad(x));
    if (node(c).need_grad) {
      set_back(c, [this, x, c] {
        softmax_backward(value(c), node(c).grad, gbuf(x.idx));
      });
    }
    return c;
  }

  /// Softmax applied independently to each row of a matrix.
  Var softmax_rows(Var a) {
    const Tensor& av = value(a);
    if (av.rank() != 2) throw std::invalid_argument("softmax_rows: need matrix");
    const std::size_t n = av.rows(), m = av.cols();
    Tensor out = Tensor::zeros(n, m);
    for (std::size_t r = 0; r < n; ++r)
      softmax_kernel(av.data() + r * m, out.data() + r * m, m, nullptr);
    Var c = push_owned(std::move(out), needs_grad(a));
    if (node(c).need_grad) {
      set_back(c, [this, a, c, n, m] {
        const Tensor& y = value(c);
        const Tensor& dc = node(c).grad;
        Tensor& da = gbuf(a.idx);
        for (std::size_t r = 0; r < n; ++r) {
          double inner = 0.0;
          for (std::size_t j = 0; j < m; ++j) inner += dc[r * m + j] * y[r * m + j];
          for (std::size_t j = 0; j < m; ++j)
            da[r * m + j] += y[r * m + j] * (dc[r * m + j] - inner);
        }
      });
    }
    return c;
  }

  /// Softmax applied independently to each column of a matrix.
  Var softmax_cols(Var a) {
    const Tensor& av = value(a);
    if (av.rank() != 2) throw std::invalid_argument("softmax_cols: need matrix");
    const std::size_t n = av.rows(), m = av.cols();
    Tensor out = Tensor::zeros(n, m);
    std::vector<double> col(n), sm(n);
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t r = 0; r < n; ++r) col[r] = av[r * m + j];
      softmax_kernel(col.data(), sm.data(), n, nullptr);
      for (std::size_t r = 0; r < n; ++r) out[r * m + j] = sm[r];
    }
    Var c = push_owned(std::move(out), needs_grad(a));
    if (node(c).need_grad) {
      set_back(c, [this, a, c, n, m] {
        const Tensor& y = value(c);
        const Tensor& dc = node(c).grad;
        Tensor& da = gbuf(a.idx);
        for (std::size_t j = 0; j < m; ++j) {
          double inner = 0.0;
          for (std::size_t r = 0; r < n; ++r) inner += dc[r * m + j] * y[r * m + j];
          for (std::size_t r = 0; r < n; ++r)
            da[r * m + j] += y[r * m + j] * (dc[r * m + j] - inner);
        }
      });
    }
    return c;
  }

  /// -log softmax(logits)[gold], fused for stability.
  Var cross_entropy_logits(Var logits, std::size_t gold) {
    const Tensor& lv = value(logits);
    if (lv.rank() != 1 || gold >= lv.size())
      throw std::invalid_argument("cross_entropy_logits: bad gold index");
    double mx = lv[0];
    for (std::size_t i = 1; i < lv.size(); ++i) mx = std::max(mx, lv[i]);
    double lse = 0.0;
    for (std::size_t i = 0; i < lv.size(); ++i) lse += std::exp(lv[i] - mx);
    lse = std::log(lse) + mx;
    Var c = push_owned(Tensor::scalar(lse - lv[gold]), needs_grad(logits));
    if (node(c).need_grad) {
      set_back(c, [this, logits, c, gold] {
        const Tensor& lv = value(logits);
        const double d = node(c).grad[0];
        Tensor& dl = gbuf(logits.idx);
        double mx = lv[0];
        for (std::size_t i = 1; i < lv.size(); ++i) mx = std::max(mx, lv[i]);
        double z = 0.0;
        for (std::size_t i = 0; i < lv.size(); ++i) z += std::exp(lv[i] - mx);
        for (std::size_t i = 0; i < lv.size(); ++i) {
          const double p = std::exp(lv[i] - mx) / z;
          dl[i] += d * (p - (i == gold ? 1.0 : 0.0));
        }
      });
    }
    return c;
  }

  /// Element i of a vector as a scalar node.
  Var index(Var a, std::size_t i) {
    const Tensor& av = value(a);
    if (av.rank() != 1 || i >= av.size())
      throw std::invalid_argument("index: out of range");
    Var c = push_owned(Tensor::scalar(av[i]), needs_grad(a));
    if (node(c).need_grad) {
      set_back(c, [this, a, c, i] { gbuf(a.idx)[i] += node(c).grad[0]; });
    }
    return c;
  }

  static double sigmoid_scalar(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  }

  /// dx_i += y_i (dy_i - sum_j dy_j y_j); masked outputs are 0 so they drop
  /// out of both terms naturally.
  static void softmax_backward(const Tensor& y, const Tensor& dy, Tensor& dx) {
    double inner = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) inner += dy[i] * y[i];
    for (std::size_t i = 0; i < y.size(); ++i) dx[i] += y[i] * (dy[i] - inner);
  }

  static void softmax_kernel(const double* x, double* out, std::size_t n,
                             const std::vector<bool>* mask) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i)
      if (!mask || (*mask)[i]) mx = std::max(mx, x[i]);
    if (mx == -std::numeric_limits<double>::infinity())
      throw std::invalid_argument("softmax: all entries masked");
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!mask || (*mask)[i]) {
        out[i] = std::exp(x[i] - mx);
        z += out[i];
      } else {
        out[i] = 0.0;
      }
    }
    for (std::size_t i = 0; i < n; ++i) out[i] /= z;
  }

 private:
  struct Node {
    Tensor stored;
    const Tensor* external = nullptr;  // set instead of stored for ref leaves
    Tensor grad;
    bool need_grad = false;
    bool grad_live = false;
    std::function<void()> back;
  };

  const Tensor& resolve(std::int32_t i) const {
    const Node& n = nodes_.at(static_cast<std::size_t>(i));
    return n.external ? *n.external : n.stored;
  }

  Node& node(Var v) { return nodes_[static_cast<std::size_t>(v.idx)]; }
  const Node& node(Var v) const { return nodes_[static_cast<std::size_t>(v.idx)]; }

  Tensor& gbuf(std::int32_t i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    const Tensor& v = n.external ? *n.external : n.stored;
    if (!n.grad.same_shape(v) || n.grad.size() != v.size())
      n.grad = Tensor(v.shape());
    if (!n.grad_live) {
      n.grad.fill(0.0);
      n.grad_live = true;
    }
    return n.grad;
  }

  Var push_owned(Tensor t, bool need) {
    Node n;
    n.stored = std::move(t);
    n.need_grad = need;
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
  }

  Var push_external(const Tensor* t, bool need) {
    Node n;
    n.external = t;
    n.need_grad = need;
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
  }

  void set_back(Var v, std::function<void()> f) { node(v).back = std::move(f); }

  Var binary_linear(Tensor out, Var a, Var b, double ca, double cb) {
    Var c = push_owned(std::move(out), needs_grad(a) || needs_grad(b));
    if (node(c).need_grad) {
      set_back(c, [this, a, b, c, ca, cb] {
        const Tensor& dc = node(c).grad;
        if (needs_grad(a)) gbuf(a.idx).vec() += ca * dc.vec();
        if (needs_grad(b)) gbuf(b.idx).vec() += cb * dc.vec();
      });
    }
    return c;
  }

  std::vector<Node> nodes_;
};

// Plain (non-tape) kernels shared with evaluation-time code paths.

inline std::vector<double> softmax(const std::vector<double>& x,
                                   const std::vector<bool>* mask = nullptr) {
  std::vector<double> out(x.size());
  Tape::softmax_kernel(x.data(), out.data(), x.size(), mask);
  return out;
}

inline double cross_entropy_from_logits(const std::vector<double>& logits,
                                        std::size_t gold) {
  double mx = logits.at(0);
  for (double v : logits) mx = std::max(mx, v);
  double z = 0.0;
  for (double v : logits) z += std::exp(v - mx);
  return std::log(z) + mx - logits.at(gold);
}

}  // namespace posbias::nn
