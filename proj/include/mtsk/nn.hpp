#pragma once

#include "mtsk/ops.hpp"
#include "mtsk/rng.hpp"

#include <cmath>
#include <map>
#include <string>

namespace mtsk {

/// Named parameters in a fixed (lexicographic) order.
template <typename Scalar>
using ParameterMap = std::map<std::string, Tensor<Scalar>>;

template <typename Scalar>
Matrix<Scalar> uniform_matrix(Rng& rng, Index rows, Index cols, double bound) {
  Matrix<Scalar> m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = Scalar(rng.uniform(-bound, bound));
  return m;
}

template <typename Scalar>
Matrix<Scalar> normal_matrix(Rng& rng, Index rows, Index cols, double stddev) {
  Matrix<Scalar> m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = Scalar(stddev * rng.normal());
  return m;
}

/// y = x·W + b with W stored in×out.
template <typename Scalar>
struct Linear {
  Tensor<Scalar> weight;
  Tensor<Scalar> bias;

  Linear() = default;

  /// Fan-in scaled uniform init, U(±sqrt(3 / in)), zero bias.
  Linear(Index in, Index out, Rng& rng)
      : weight(uniform_matrix<Scalar>(rng, in, out, std::sqrt(3.0 / double(in))), true),
        bias(Matrix<Scalar>::Zero(1, out), true) {}

  Index in_features() const { return weight.rows(); }
  Index out_features() const { return weight.cols(); }

  Tensor<Scalar> operator()(const Tensor<Scalar>& x) const {
    if (x.cols() != in_features()) {
      throw DimensionError("linear: input " + shape_string(x.rows(), x.cols()) +
                           " does not match weight " + shape_string(weight.rows(), weight.cols()));
    }
    return add_row(matmul(x, weight), bias);
  }

  void collect(ParameterMap<Scalar>& out, const std::string& prefix) const {
    out.emplace(prefix + ".weight", weight);
    out.emplace(prefix + ".bias", bias);
  }

  Index parameter_count() const { return weight.size() + bias.size(); }
};

template <typename To, typename From>
Tensor<To> cast_tensor(const Tensor<From>& t) {
  return Tensor<To>(t.value().template cast<To>(), t.requires_grad());
}

template <typename To, typename From>
Linear<To> cast_linear(const Linear<From>& l) {
  Linear<To> out;
  out.weight = cast_tensor<To>(l.weight);
  out.bias = cast_tensor<To>(l.bias);
  return out;
}

}  // namespace mtsk
