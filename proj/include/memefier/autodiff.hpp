// Copyright 2026 The MemeFier-cpp Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Reverse-mode differentiation over small dense matrices.
//
// A Tape records every operation of one forward pass. Values are row-major
// Eigen matrices; vectors are 1 x n rows. Parameters enter the tape by
// reference (no copy) and their gradients are read back after backward()
// through the parameter index they were registered with.

#ifndef MEMEFIER_AUTODIFF_HPP_
#define MEMEFIER_AUTODIFF_HPP_

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace memefier::ad {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Var {
  std::uint32_t id = 0;
};

template <typename T>
class Tape {
 public:
  Tape() { nodes_.reserve(256); }

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix<T> value) {
    Node n;
    n.owned = std::move(value);
    return push(std::move(n));
  }

  // Registers parameter `index` once per tape; repeated calls return the
  // same variable so gradients accumulate in a single node.
  Var parameter(std::size_t index, const Matrix<T>& value) {
    if (index >= param_vars_.size()) param_vars_.resize(index + 1, kNone);
    if (param_vars_[index] != kNone) return Var{param_vars_[index]};
    Node n;
    n.ref = &value;
    n.needs_grad = true;
    n.param_index = static_cast<std::int64_t>(index);
    Var v = push(std::move(n));
    param_vars_[index] = v.id;
    return v;
  }

  const Matrix<T>& value(Var v) const {
    const Node& n = nodes_[v.id];
    return n.ref != nullptr ? *n.ref : n.owned;
  }

  // Gradient of the last backward() root with respect to `v`; a zero matrix
  // when no gradient reached it.
  Matrix<T> grad(Var v) const {
    const Node& n = nodes_[v.id];
    if (n.grad.size() == 0) {
      const Matrix<T>& val = value(v);
      return Matrix<T>::Zero(val.rows(), val.cols());
    }
    return n.grad;
  }

  std::size_t size() const { return nodes_.size(); }

  void backward(Var root) {
    const Matrix<T>& r = value(root);
    if (r.rows() != 1 || r.cols() != 1) {
      throw std::invalid_argument("backward: root must be a 1x1 scalar");
    }
    for (Node& n : nodes_) n.grad.resize(0, 0);
    nodes_[root.id].grad = Matrix<T>::Ones(1, 1);
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      Node& n = nodes_[i];
      if (n.backward && n.grad.size() != 0) n.backward(n.grad);
    }
  }

  // Calls fn(parameter_index, gradient) for every parameter touched by the
  // last backward pass.
  template <typename Fn>
  void for_each_parameter_grad(Fn&& fn) const {
    for (std::size_t idx = 0; idx < param_vars_.size(); ++idx) {
      if (param_vars_[idx] == kNone) continue;
      const Node& n = nodes_[param_vars_[idx]];
      if (n.grad.size() != 0) fn(idx, n.grad);
    }
  }

  // ---- linear algebra -----------------------------------------------------

  Var matmul(Var a, Var b) {
    const auto& A = value(a);
    const auto& B = value(b);
    check(A.cols() == B.rows(), "matmul: inner dimension mismatch");
    Matrix<T> out = A * B;
    return record(std::move(out), {a, b}, [this, a, b](const Matrix<T>& g) {
      if (needs(a)) accumulate(a, g * value(b).transpose());
      if (needs(b)) accumulate(b, value(a).transpose() * g);
    });
  }

  // a * b^T
  Var matmul_nt(Var a, Var b) {
    const auto& A = value(a);
    const auto& B = value(b);
    check(A.cols() == B.cols(), "matmul_nt: inner dimension mismatch");
    Matrix<T> out = A * B.transpose();
    return record(std::move(out), {a, b}, [this, a, b](const Matrix<T>& g) {
      if (needs(a)) accumulate(a, g * value(b));
      if (needs(b)) accumulate(b, g.transpose() * value(a));
    });
  }

  // x W^T + bias, with W stored out x in and bias 1 x out.
  Var affine(Var x, Var weight, Var bias) {
    return add_row(matmul_nt(x, weight), bias);
  }

  Var add(Var a, Var b) {
    const auto& A = value(a);
    const auto& B = value(b);
    check(A.rows() == B.rows() && A.cols() == B.cols(), "add: shape mismatch");
    Matrix<T> out = A + B;
    return record(std::move(out), {a, b}, [this, a, b](const Matrix<T>& g) {
      if (needs(a)) accumulate(a, g);
      if (needs(b)) accumulate(b, g);
    });
  }

  // a + row broadcast over every row of a.
  Var add_row(Var a, Var row) {
    const auto& A = value(a);
    const auto& R = value(row);
    check(R.rows() == 1 && R.cols() == A.cols(), "add_row: shape mismatch");
    Matrix<T> out = A.rowwise() + R.row(0);
    return record(std::move(out), {a, row}, [this, a, row](const Matrix<T>& g) {
      if (needs(a)) accumulate(a, g);
      if (needs(row)) accumulate(row, g.colwise().sum());
    });
  }

  Var mul(Var a, Var b) {
    const auto& A = value(a);
    const auto& B = value(b);
    check(A.rows() == B.rows() && A.cols() == B.cols(), "mul: shape mismatch");
    Matrix<T> out = A.cwiseProduct(B);
    return record(std::move(out), {a, b}, [this, a, b](const Matrix<T>& g) {
      if (needs(a)) accumulate(a, g.cwiseProduct(value(b)));
      if (needs(b)) accumulate(b, g.cwiseProduct(value(a)));
    });
  }

  // a (.) row, broadcast over every row of a.
  Var mul_row(Var a, Var row) {
    const auto& A = value(a);
    const auto& R = value(row);
    check(R.rows() == 1 && R.cols() == A.cols(), "mul_row: shape mismatch");
    Matrix<T> out = A.array().rowwise() * R.row(0).array();
    return record(std::move(out), {a, row}, [this, a, row](const Matrix<T>& g) {
      if (needs(a)) {
        Matrix<T> ga = g.array().rowwise() * value(row).row(0).array();
        accumulate(a, ga);
      }
      if (needs(row)) accumulate(row, g.cwiseProduct(value(a)).colwise().sum());
    });
  }

  Var scale(Var a, T factor) {
    Matrix<T> out = value(a) * factor;
    return record(std::move(out), {a}, [this, a, factor](const Matrix<T>& g) {
      if (needs(a)) accumulate(a, g * factor);
    });
  }

  Var relu(Var a) {
    Matrix<T> out = value(a).cwiseMax(T(0));
    return record(std::move(out), {a}, [this, a](const Matrix<T>& g) {
      if (!needs(a)) return;
      Matrix<T> ga = (value(a).array() > T(0)).select(g, T(0));
      accumulate(a, ga);
    });
  }

  // ---- shape ------------------------------------------------------------

  Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
    const auto& A = value(a);
    check(start >= 0 && count >= 0 && start + count <= A.rows(), "slice_rows: out of range");
    Matrix<T> out = A.middleRows(start, count);
    return record(std::move(out), {a}, [this, a, start, count](const Matrix<T>& g) {
      if (!needs(a)) return;
      Node& n = nodes_[a.id];
      ensure_grad(n, value(a));
      n.grad.middleRows(start, count) += g;
    });
  }

  Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
    const auto& A = value(a);
    check(start >= 0 && count >= 0 && start + count <= A.cols(), "slice_cols: out of range");
    Matrix<T> out = A.middleCols(start, count);
    return record(std::move(out), {a}, [this, a, start, count](const Matrix<T>& g) {
      if (!needs(a)) return;
      Node& n = nodes_[a.id];
      ensure_grad(n, value(a));
      n.grad.middleCols(start, count) += g;
    });
  }

  Var concat_rows(std::span<const Var> parts) {
    check(!parts.empty(), "concat_rows: no operands");
    const Eigen::Index cols = value(parts[0]).cols();
    Eigen::Index rows = 0;
    for (Var p : parts) {
      check(value(p).cols() == cols, "concat_rows: column mismatch");
      rows += value(p).rows();
    }
    Matrix<T> out(rows, cols);
    Eigen::Index at = 0;
    for (Var p : parts) {
      const auto& P = value(p);
      out.middleRows(at, P.rows()) = P;
      at += P.rows();
    }
    std::vector<Var> inputs(parts.begin(), parts.end());
    return record(std::move(out), inputs, [this, inputs](const Matrix<T>& g) {
      Eigen::Index off = 0;
      for (Var p : inputs) {
        const Eigen::Index r = value(p).rows();
        if (needs(p) && r > 0) accumulate(p, g.middleRows(off, r));
        off += r;
      }
    });
  }

  Var concat_cols(std::span<const Var> parts) {
    check(!parts.empty(), "concat_cols: no operands");
    const Eigen::Index rows = value(parts[0]).rows();
    Eigen::Index cols = 0;
    for (Var p : parts) {
      check(value(p).rows() == rows, "concat_cols: row mismatch");
      cols += value(p).cols();
    }
    Matrix<T> out(rows, cols);
    Eigen::Index at = 0;
    for (Var p : parts) {
      const auto& P = value(p);
      out.middleCols(at, P.cols()) = P;
      at += P.cols();
    }
    std::vector<Var> inputs(parts.begin(), parts.end());
    return record(std::move(out), inputs, [this, inputs](const Matrix<T>& g) {
      Eigen::Index off = 0;
      for (Var p : inputs) {
        const Eigen::Index c = value(p).cols();
        if (needs(p)) accumulate(p, g.middleCols(off, c));
        off += c;
      }
    });
  }

  // Rows `indices` of `table`, in order (embedding lookup).
  Var gather_rows(Var table, std::span<const std::int64_t> indices) {
    const auto& W = value(table);
    Matrix<T> out(static_cast<Eigen::Index>(indices.size()), W.cols());
    for (std::size_t i = 0; i < indices.size(); ++i) {
      check(indices[i] >= 0 && indices[i] < W.rows(), "gather_rows: index out of range");
      out.row(static_cast<Eigen::Index>(i)) = W.row(indices[i]);
    }
    std::vector<std::int64_t> idx(indices.begin(), indices.end());
    return record(std::move(out), {table}, [this, table, idx](const Matrix<T>& g) {
      if (!needs(table)) return;
      Node& n = nodes_[table.id];
      ensure_grad(n, value(table));
      for (std::size_t i = 0; i < idx.size(); ++i) {
        n.grad.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
      }
    });
  }

  // Mean over rows whose keep flag is set; 1 x cols.
  Var masked_mean_rows(Var a, const std::vector<bool>& keep) {
    const auto& A = value(a);
    check(static_cast<Eigen::Index>(keep.size()) == A.rows(), "masked_mean_rows: mask length");
    const std::vector<bool>& k = keep;
    Eigen::Index count = 0;
    Matrix<T> out = Matrix<T>::Zero(1, A.cols());
    for (Eigen::Index r = 0; r < A.rows(); ++r) {
      if (k[static_cast<std::size_t>(r)]) {
        out += A.row(r);
        ++count;
      }
    }
    check(count > 0, "masked_mean_rows: every row masked");
    const T inv = T(1) / static_cast<T>(count);
    out *= inv;
    return record(std::move(out), {a}, [this, a, k = keep, inv](const Matrix<T>& g) {
      if (!needs(a)) return;
      Node& n = nodes_[a.id];
      ensure_grad(n, value(a));
      for (Eigen::Index r = 0; r < n.grad.rows(); ++r) {
        if (k[static_cast<std::size_t>(r)]) n.grad.row(r) += g.row(0) * inv;
      }
    });
  }

  // ---- normalization ----------------------------------------------------

  // Row-wise softmax. `allowed`, when non-empty, is a rows x cols mask; a
  // false entry is excluded (probability exactly zero).
  Var softmax_rows(Var a, const std::vector<std::vector<bool>>& allowed = {}) {
    const auto& A = value(a);
    const bool masked = !allowed.empty();
    if (masked) check(static_cast<Eigen::Index>(allowed.size()) == A.rows(), "softmax_rows: mask rows");
    Matrix<T> out(A.rows(), A.cols());
    for (Eigen::Index r = 0; r < A.rows(); ++r) {
      T mx = -std::numeric_limits<T>::infinity();
      bool any = false;
      for (Eigen::Index c = 0; c < A.cols(); ++c) {
        if (!masked || allowed[r][c]) {
          // NaN inputs propagate so callers can report divergence.
          mx = std::isnan(A(r, c)) ? A(r, c) : std::max(mx, A(r, c));
          any = true;
          if (std::isnan(mx)) break;
        }
      }
      check(any, "softmax_rows: row has no admissible entries");
      T sum = 0;
      for (Eigen::Index c = 0; c < A.cols(); ++c) {
        const T e = (!masked || allowed[r][c]) ? std::exp(A(r, c) - mx) : T(0);
        out(r, c) = e;
        sum += e;
      }
      out.row(r) /= sum;
    }
    return record(std::move(out), {a}, [this, a, self = Var{next_id()}](const Matrix<T>& g) {
      if (!needs(a)) return;
      const auto& Y = value(self);
      Matrix<T> dot = g.cwiseProduct(Y).rowwise().sum();
      Matrix<T> ga = Y.cwiseProduct(g - dot.replicate(1, g.cols()));
      accumulate(a, ga);
    });
  }

  // Row-wise layer normalization with gain and shift rows (1 x cols).
  Var layer_norm(Var x, Var gain, Var shift, T eps = T(1e-5)) {
    const auto& X = value(x);
    const auto& G = value(gain);
    const auto& B = value(shift);
    check(G.cols() == X.cols() && B.cols() == X.cols(), "layer_norm: shape mismatch");
    const Eigen::Index n = X.cols();
    Matrix<T> xhat(X.rows(), n);
    std::vector<T> inv_std(static_cast<std::size_t>(X.rows()));
    for (Eigen::Index r = 0; r < X.rows(); ++r) {
      const T mean = X.row(r).mean();
      const T var = (X.row(r).array() - mean).square().mean();
      const T is = T(1) / std::sqrt(var + eps);
      inv_std[static_cast<std::size_t>(r)] = is;
      xhat.row(r) = (X.row(r).array() - mean) * is;
    }
    Matrix<T> out = xhat.array().rowwise() * G.row(0).array();
    out.rowwise() += B.row(0);
    return record(std::move(out), {x, gain, shift},
                  [this, x, gain, shift, xhat, inv_std](const Matrix<T>& g) {
                    if (needs(gain)) accumulate(gain, g.cwiseProduct(xhat).colwise().sum());
                    if (needs(shift)) accumulate(shift, g.colwise().sum());
                    if (!needs(x)) return;
                    const Eigen::Index cols = g.cols();
                    Matrix<T> dxhat = g.array().rowwise() * value(gain).row(0).array();
                    Matrix<T> gx(g.rows(), cols);
                    for (Eigen::Index r = 0; r < g.rows(); ++r) {
                      const T m1 = dxhat.row(r).mean();
                      const T m2 = dxhat.row(r).cwiseProduct(xhat.row(r)).mean();
                      gx.row(r) = (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2) *
                                  inv_std[static_cast<std::size_t>(r)];
                    }
                    (void)cols;
                    accumulate(x, gx);
                  });
  }

  // ---- losses (1 x 1 results) ------------------------------------------

  // Mean binary cross-entropy of logits (1 x k) against targets in [0, 1].
  Var sigmoid_cross_entropy(Var logits, std::span<const T> targets) {
    const auto& L = value(logits);
    check(L.size() == static_cast<Eigen::Index>(targets.size()), "sigmoid_cross_entropy: size");
    std::vector<T> t(targets.begin(), targets.end());
    T loss = 0;
    for (Eigen::Index i = 0; i < L.size(); ++i) {
      const T x = L.data()[i];
      loss += std::max(x, T(0)) - x * t[static_cast<std::size_t>(i)] +
              std::log1p(std::exp(-std::abs(x)));
    }
    const T k = static_cast<T>(L.size());
    Matrix<T> out(1, 1);
    out(0, 0) = loss / k;
    return record(std::move(out), {logits}, [this, logits, t, k](const Matrix<T>& g) {
      if (!needs(logits)) return;
      const auto& Lv = value(logits);
      Matrix<T> gl(Lv.rows(), Lv.cols());
      for (Eigen::Index i = 0; i < Lv.size(); ++i) {
        const T s = T(1) / (T(1) + std::exp(-Lv.data()[i]));
        gl.data()[i] = (s - t[static_cast<std::size_t>(i)]) / k * g(0, 0);
      }
      accumulate(logits, gl);
    });
  }

  // Mean categorical cross-entropy of row logits against class targets;
  // rows whose target equals `ignore` are skipped.
  Var softmax_cross_entropy(Var logits, std::span<const std::int64_t> targets,
                            std::int64_t ignore = -1) {
    const auto& L = value(logits);
    check(L.rows() == static_cast<Eigen::Index>(targets.size()), "softmax_cross_entropy: rows");
    std::vector<std::int64_t> tg(targets.begin(), targets.end());
    Matrix<T> probs(L.rows(), L.cols());
    T loss = 0;
    Eigen::Index count = 0;
    for (Eigen::Index r = 0; r < L.rows(); ++r) {
      const T mx = L.row(r).maxCoeff();
      const T lse = mx + std::log((L.row(r).array() - mx).exp().sum());
      probs.row(r) = (L.row(r).array() - lse).exp();
      const std::int64_t y = tg[static_cast<std::size_t>(r)];
      if (y == ignore) continue;
      check(y >= 0 && y < L.cols(), "softmax_cross_entropy: target out of range");
      loss += lse - L(r, y);
      ++count;
    }
    Matrix<T> out(1, 1);
    out(0, 0) = count > 0 ? loss / static_cast<T>(count) : T(0);
    const T inv = count > 0 ? T(1) / static_cast<T>(count) : T(0);
    return record(std::move(out), {logits}, [this, logits, tg, probs, inv, ignore](const Matrix<T>& g) {
      if (!needs(logits)) return;
      Matrix<T> gl = Matrix<T>::Zero(probs.rows(), probs.cols());
      for (Eigen::Index r = 0; r < probs.rows(); ++r) {
        const std::int64_t y = tg[static_cast<std::size_t>(r)];
        if (y == ignore) continue;
        gl.row(r) = probs.row(r) * inv;
        gl(r, y) -= inv;
      }
      accumulate(logits, gl * g(0, 0));
    });
  }

 private:
  static constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();

  struct Node {
    Matrix<T> owned;
    const Matrix<T>* ref = nullptr;
    Matrix<T> grad;
    std::function<void(const Matrix<T>&)> backward;
    std::int64_t param_index = -1;
    bool needs_grad = false;
  };

  static void check(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
  }

  std::uint32_t next_id() const { return static_cast<std::uint32_t>(nodes_.size()); }

  Var push(Node n) {
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  bool needs(Var v) const { return nodes_[v.id].needs_grad; }

  template <typename Fn>
  Var record(Matrix<T> value, std::initializer_list<Var> inputs, Fn&& fn) {
    return record(std::move(value), std::vector<Var>(inputs), std::forward<Fn>(fn));
  }

  template <typename Fn>
  Var record(Matrix<T> value, const std::vector<Var>& inputs, Fn&& fn) {
    Node n;
    n.owned = std::move(value);
    for (Var in : inputs) n.needs_grad = n.needs_grad || needs(in);
    if (n.needs_grad) n.backward = std::forward<Fn>(fn);
    return push(std::move(n));
  }

  static void ensure_grad(Node& n, const Matrix<T>& like) {
    if (n.grad.size() == 0) n.grad = Matrix<T>::Zero(like.rows(), like.cols());
  }

  template <typename Derived>
  void accumulate(Var v, const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_[v.id];
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  std::vector<Node> nodes_;
  std::vector<std::uint32_t> param_vars_;
};

}  // namespace memefier::ad

#endif  // MEMEFIER_AUTODIFF_HPP_
