#pragma once

#include "mtsk/tensor.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

namespace mtsk {

class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

namespace detail {

template <typename Scalar>
void require_same_shape(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.rows(), a.cols()) +
                         " vs " + shape_string(b.rows(), b.cols()));
  }
}

}  // namespace detail

template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_string(a.rows(), a.cols()) +
                         " x " + shape_string(b.rows(), b.cols()));
  }
  Matrix<Scalar> out;
  out.noalias() = a.value() * b.value();
  return Tensor<Scalar>::make_result(std::move(out), {a, b}, [](auto& n) {
    auto& pa = *n.parents[0];
    auto& pb = *n.parents[1];
    if (pa.requires_grad) pa.accumulate(n.grad * pb.value.transpose());
    if (pb.requires_grad) pb.accumulate(pa.value.transpose() * n.grad);
  });
}

/// a · bᵀ
template <typename Scalar>
Tensor<Scalar> matmul_transposed(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_transposed: column counts differ, " +
                         shape_string(a.rows(), a.cols()) + " vs " +
                         shape_string(b.rows(), b.cols()));
  }
  Matrix<Scalar> out;
  out.noalias() = a.value() * b.value().transpose();
  return Tensor<Scalar>::make_result(std::move(out), {a, b}, [](auto& n) {
    auto& pa = *n.parents[0];
    auto& pb = *n.parents[1];
    if (pa.requires_grad) pa.accumulate(n.grad * pb.value);
    if (pb.requires_grad) pb.accumulate(n.grad.transpose() * pa.value);
  });
}

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require_same_shape(a, b, "add");
  Matrix<Scalar> out = a.value() + b.value();
  return Tensor<Scalar>::make_result(std::move(out), {a, b}, [](auto& n) {
    n.parents[0]->accumulate(n.grad);
    n.parents[1]->accumulate(n.grad);
  });
}

template <typename Scalar>
Tensor<Scalar> operator+(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return add(a, b);
}

/// Adds a 1×c row to every row of a.
template <typename Scalar>
Tensor<Scalar> add_row(const Tensor<Scalar>& a, const Tensor<Scalar>& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw DimensionError("add_row: expected [1x" + std::to_string(a.cols()) + "] row, got " +
                         shape_string(row.rows(), row.cols()));
  }
  Matrix<Scalar> out = a.value().rowwise() + row.value().row(0);
  return Tensor<Scalar>::make_result(std::move(out), {a, row}, [](auto& n) {
    n.parents[0]->accumulate(n.grad);
    n.parents[1]->accumulate(n.grad.colwise().sum());
  });
}

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& a, Scalar s) {
  Matrix<Scalar> out = a.value() * s;
  return Tensor<Scalar>::make_result(std::move(out), {a},
                                     [s](auto& n) { n.parents[0]->accumulate(n.grad * s); });
}

template <typename Scalar>
Tensor<Scalar> operator*(Scalar s, const Tensor<Scalar>& a) {
  return scale(a, s);
}

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& a) {
  Matrix<Scalar> out = a.value().cwiseMax(Scalar(0));
  return Tensor<Scalar>::make_result(std::move(out), {a}, [](auto& n) {
    auto& p = *n.parents[0];
    p.accumulate((p.value.array() > Scalar(0)).select(n.grad, Scalar(0)));
  });
}

template <typename Scalar>
Tensor<Scalar> tanh(const Tensor<Scalar>& a) {
  Matrix<Scalar> out = a.value().array().tanh().matrix();
  return Tensor<Scalar>::make_result(std::move(out), {a}, [](auto& n) {
    n.parents[0]->accumulate(
        (n.grad.array() * (Scalar(1) - n.value.array().square())).matrix());
  });
}

/// GELU, tanh approximation.
template <typename Scalar>
Tensor<Scalar> gelu(const Tensor<Scalar>& a) {
  const Scalar k = std::sqrt(Scalar(2) / std::numbers::pi_v<Scalar>);
  const Scalar c = Scalar(0.044715);
  const auto& x = a.value().array();
  Matrix<Scalar> out =
      (Scalar(0.5) * x * (Scalar(1) + (k * (x + c * x.cube())).tanh())).matrix();
  return Tensor<Scalar>::make_result(std::move(out), {a}, [k, c](auto& n) {
    auto& p = *n.parents[0];
    const auto& x = p.value.array();
    auto t = (k * (x + c * x.cube())).tanh().eval();
    auto dt = (k * (Scalar(1) + Scalar(3) * c * x.square())).eval();
    auto d = (Scalar(0.5) * (Scalar(1) + t) + Scalar(0.5) * x * (Scalar(1) - t.square()) * dt);
    p.accumulate((n.grad.array() * d).matrix());
  });
}

/// Row-wise RMS normalisation with a learned 1×c gain.
template <typename Scalar>
Tensor<Scalar> rms_norm(const Tensor<Scalar>& x, const Tensor<Scalar>& gain,
                        Scalar eps = Scalar(1e-6)) {
  if (gain.rows() != 1 || gain.cols() != x.cols()) {
    throw DimensionError("rms_norm: gain " + shape_string(gain.rows(), gain.cols()) +
                         " does not match " + shape_string(x.rows(), x.cols()));
  }
  const Index c = x.cols();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_rms =
      ((x.value().array().square().rowwise().sum() / Scalar(c)) + eps).rsqrt().matrix();
  Matrix<Scalar> normed = x.value().array().colwise() * inv_rms.array();
  Matrix<Scalar> out = normed.array().rowwise() * gain.value().row(0).array();
  return Tensor<Scalar>::make_result(
      std::move(out), {x, gain}, [inv_rms, normed = std::move(normed), c](auto& n) {
        auto& px = *n.parents[0];
        auto& pg = *n.parents[1];
        if (pg.requires_grad) pg.accumulate((n.grad.array() * normed.array()).colwise().sum().matrix());
        if (px.requires_grad) {
          Matrix<Scalar> dn = n.grad.array().rowwise() * pg.value.row(0).array();
          Eigen::Matrix<Scalar, Eigen::Dynamic, 1> dot =
              (dn.array() * normed.array()).rowwise().sum() / Scalar(c);
          Matrix<Scalar> dx = (dn.array() - normed.array().colwise() * dot.array()).colwise() *
                              inv_rms.array();
          px.accumulate(dx);
        }
      });
}

namespace detail {

template <typename Scalar>
Matrix<Scalar> softmax_rows_value(const Matrix<Scalar>& z, bool causal) {
  Matrix<Scalar> p(z.rows(), z.cols());
  for (Index i = 0; i < z.rows(); ++i) {
    const Index width = causal ? std::min<Index>(i + 1, z.cols()) : z.cols();
    auto row = z.row(i).head(width);
    const Scalar m = row.maxCoeff();
    auto e = (row.array() - m).exp();
    const Scalar total = e.sum();
    p.row(i).head(width) = e / total;
    if (width < z.cols()) p.row(i).tail(z.cols() - width).setZero();
  }
  return p;
}

template <typename Scalar>
void softmax_backward(Node<Scalar>& n) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> dot = (n.grad.array() * n.value.array()).rowwise().sum();
  n.parents[0]->accumulate(
      (n.value.array() * (n.grad.array().colwise() - dot.array())).matrix());
}

}  // namespace detail

template <typename Scalar>
Tensor<Scalar> softmax_rows(const Tensor<Scalar>& z) {
  return Tensor<Scalar>::make_result(detail::softmax_rows_value(z.value(), false), {z},
                                     [](auto& n) { detail::softmax_backward(n); });
}

/// Row softmax where row i only sees columns 0..i (future positions get 0).
template <typename Scalar>
Tensor<Scalar> causal_softmax(const Tensor<Scalar>& z) {
  return Tensor<Scalar>::make_result(detail::softmax_rows_value(z.value(), true), {z},
                                     [](auto& n) { detail::softmax_backward(n); });
}

/// Mean over rows of -log softmax(logits)[t, targets[t]].
template <typename Scalar>
Tensor<Scalar> softmax_cross_entropy(const Tensor<Scalar>& logits, std::span<const int> targets) {
  if (static_cast<Index>(targets.size()) != logits.rows()) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(targets.size()) +
                         " targets for " + std::to_string(logits.rows()) + " rows");
  }
  const Index vocab = logits.cols();
  for (std::size_t t = 0; t < targets.size(); ++t) {
    if (targets[t] < 0 || targets[t] >= vocab) {
      throw IndexError("softmax_cross_entropy: target " + std::to_string(targets[t]) +
                       " at position " + std::to_string(t) + " outside [0, " +
                       std::to_string(vocab) + ")");
    }
  }
  Matrix<Scalar> probs = detail::softmax_rows_value(logits.value(), false);
  Scalar total = 0;
  for (Index t = 0; t < logits.rows(); ++t) {
    auto row = logits.value().row(t);
    const Scalar m = row.maxCoeff();
    const Scalar lse = m + std::log((row.array() - m).exp().sum());
    total += lse - row(targets[t]);
  }
  const Scalar count = Scalar(logits.rows());
  std::vector<int> ids(targets.begin(), targets.end());
  return Tensor<Scalar>::make_result(
      Matrix<Scalar>::Constant(1, 1, total / count), {logits},
      [probs = std::move(probs), ids = std::move(ids), count](auto& n) {
        Matrix<Scalar> g = probs;
        for (std::size_t t = 0; t < ids.size(); ++t) g(Index(t), ids[t]) -= Scalar(1);
        n.parents[0]->accumulate(g * (n.grad(0, 0) / count));
      });
}

/// Rows of `table` selected by `ids`.
template <typename Scalar>
Tensor<Scalar> gather_rows(const Tensor<Scalar>& table, std::span<const int> ids) {
  Matrix<Scalar> out(static_cast<Index>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table.rows()) {
      throw IndexError("gather_rows: id " + std::to_string(ids[i]) + " outside table of " +
                       std::to_string(table.rows()) + " rows");
    }
    out.row(Index(i)) = table.value().row(ids[i]);
  }
  std::vector<int> kept(ids.begin(), ids.end());
  return Tensor<Scalar>::make_result(std::move(out), {table}, [kept = std::move(kept)](auto& n) {
    auto& p = *n.parents[0];
    Matrix<Scalar> g = Matrix<Scalar>::Zero(p.value.rows(), p.value.cols());
    for (std::size_t i = 0; i < kept.size(); ++i) g.row(kept[i]) += n.grad.row(Index(i));
    p.accumulate(g);
  });
}

template <typename Scalar>
Tensor<Scalar> concat_rows(const std::vector<Tensor<Scalar>>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const Index cols = parts.front().cols();
  Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) {
      throw DimensionError("concat_rows: column mismatch " + shape_string(p.rows(), p.cols()) +
                           " vs " + std::to_string(cols) + " columns");
    }
    rows += p.rows();
  }
  Matrix<Scalar> out(rows, cols);
  std::vector<Index> offsets;
  Index at = 0;
  for (const auto& p : parts) {
    offsets.push_back(at);
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return Tensor<Scalar>::make_result(std::move(out), parts, [offsets](auto& n) {
    for (std::size_t k = 0; k < n.parents.size(); ++k) {
      auto& p = *n.parents[k];
      if (p.requires_grad) p.accumulate(n.grad.middleRows(offsets[k], p.value.rows()));
    }
  });
}

template <typename Scalar>
Tensor<Scalar> concat_cols(const std::vector<Tensor<Scalar>>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) {
      throw DimensionError("concat_cols: row mismatch " + shape_string(p.rows(), p.cols()) +
                           " vs " + std::to_string(rows) + " rows");
    }
    cols += p.cols();
  }
  Matrix<Scalar> out(rows, cols);
  std::vector<Index> offsets;
  Index at = 0;
  for (const auto& p : parts) {
    offsets.push_back(at);
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return Tensor<Scalar>::make_result(std::move(out), parts, [offsets](auto& n) {
    for (std::size_t k = 0; k < n.parents.size(); ++k) {
      auto& p = *n.parents[k];
      if (p.requires_grad) p.accumulate(n.grad.middleCols(offsets[k], p.value.cols()));
    }
  });
}

template <typename Scalar>
Tensor<Scalar> slice_rows(const Tensor<Scalar>& a, Index begin, Index count) {
  if (begin < 0 || count < 0 || begin + count > a.rows()) {
    throw DimensionError("slice_rows: [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") outside " +
                         shape_string(a.rows(), a.cols()));
  }
  Matrix<Scalar> out = a.value().middleRows(begin, count);
  return Tensor<Scalar>::make_result(std::move(out), {a}, [begin](auto& n) {
    auto& p = *n.parents[0];
    Matrix<Scalar> g = Matrix<Scalar>::Zero(p.value.rows(), p.value.cols());
    g.middleRows(begin, n.grad.rows()) = n.grad;
    p.accumulate(g);
  });
}

template <typename Scalar>
Tensor<Scalar> slice_cols(const Tensor<Scalar>& a, Index begin, Index count) {
  if (begin < 0 || count < 0 || begin + count > a.cols()) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") outside " +
                         shape_string(a.rows(), a.cols()));
  }
  Matrix<Scalar> out = a.value().middleCols(begin, count);
  return Tensor<Scalar>::make_result(std::move(out), {a}, [begin](auto& n) {
    auto& p = *n.parents[0];
    Matrix<Scalar> g = Matrix<Scalar>::Zero(p.value.rows(), p.value.cols());
    g.middleCols(begin, n.grad.cols()) = n.grad;
    p.accumulate(g);
  });
}

/// Mean over consecutive windows of `rate` rows; trailing rows that do not fill
/// a window are dropped.
template <typename Scalar>
Tensor<Scalar> avg_pool_rows(const Tensor<Scalar>& x, Index rate) {
  const Index m = x.rows() / rate;
  Matrix<Scalar> out(m, x.cols());
  for (Index t = 0; t < m; ++t) {
    out.row(t) = x.value().middleRows(t * rate, rate).colwise().sum() / Scalar(rate);
  }
  return Tensor<Scalar>::make_result(std::move(out), {x}, [rate](auto& n) {
    auto& p = *n.parents[0];
    Matrix<Scalar> g = Matrix<Scalar>::Zero(p.value.rows(), p.value.cols());
    for (Index t = 0; t < n.grad.rows(); ++t) {
      g.middleRows(t * rate, rate).rowwise() += n.grad.row(t) / Scalar(rate);
    }
    p.accumulate(g);
  });
}

/// Concatenates each window of `rate` consecutive rows into one row of
/// width rate·d; trailing rows that do not fill a window are dropped.
template <typename Scalar>
Tensor<Scalar> stack_rows(const Tensor<Scalar>& x, Index rate) {
  const Index m = x.rows() / rate;
  const Index d = x.cols();
  // Row-major storage makes a window of rows contiguous, so stacking is a reshape.
  Matrix<Scalar> out = Eigen::Map<const Matrix<Scalar>>(x.value().data(), m, rate * d);
  return Tensor<Scalar>::make_result(std::move(out), {x}, [m, rate, d](auto& n) {
    auto& p = *n.parents[0];
    Matrix<Scalar> g = Matrix<Scalar>::Zero(p.value.rows(), p.value.cols());
    g.topRows(m * rate) = Eigen::Map<const Matrix<Scalar>>(n.grad.data(), m * rate, d);
    p.accumulate(g);
  });
}

template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& a) {
  return Tensor<Scalar>::make_result(Matrix<Scalar>::Constant(1, 1, a.value().sum()), {a},
                                     [](auto& n) {
                                       auto& p = *n.parents[0];
                                       p.accumulate(Matrix<Scalar>::Constant(
                                           p.value.rows(), p.value.cols(), n.grad(0, 0)));
                                     });
}

/// Arithmetic mean of same-shaped tensors.
template <typename Scalar>
Tensor<Scalar> mean_of(const std::vector<Tensor<Scalar>>& parts) {
  if (parts.empty()) throw DimensionError("mean_of: no inputs");
  Matrix<Scalar> total = parts.front().value();
  for (std::size_t k = 1; k < parts.size(); ++k) {
    detail::require_same_shape(parts.front(), parts[k], "mean_of");
    total += parts[k].value();
  }
  const Scalar inv = Scalar(1) / Scalar(parts.size());
  return Tensor<Scalar>::make_result(total * inv, parts, [inv](auto& n) {
    for (auto& p : n.parents) p->accumulate(n.grad * inv);
  });
}

}  // namespace mtsk
