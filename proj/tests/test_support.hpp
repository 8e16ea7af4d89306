#pragma once

#include "mtsk/corpus.hpp"
#include "mtsk/model.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace mtsk::testing {

/// Central-difference gradient of `f` with respect to every element of `t`.
inline Matrix<double> numeric_gradient(const std::function<double()>& f, Tensor<double>& t,
                                       double h = 1e-5) {
  Matrix<double> g(t.rows(), t.cols());
  auto& v = t.mutable_value();
  for (Index k = 0; k < v.size(); ++k) {
    const double keep = v.data()[k];
    v.data()[k] = keep + h;
    const double up = f();
    v.data()[k] = keep - h;
    const double down = f();
    v.data()[k] = keep;
    g.data()[k] = (up - down) / (2 * h);
  }
  return g;
}

/// ‖a − n‖ / (‖a‖ + ‖n‖), zero when both vanish.
inline double relative_error(const Matrix<double>& analytic, const Matrix<double>& numeric) {
  const double denom = analytic.norm() + numeric.norm();
  return denom < 1e-12 ? 0.0 : (analytic - numeric).norm() / denom;
}

/// Runs backward once on `loss_fn()` and compares every tensor in `params`
/// against central differences; returns the worst relative error and fills
/// `worst_name`.
inline double gradient_check(const std::function<Tensor<double>()>& loss_fn,
                             ParameterMap<double>& params, std::string* worst_name = nullptr) {
  for (auto& [name, t] : params) t.zero_grad();
  loss_fn().backward();
  double worst = 0;
  for (auto& [name, t] : params) {
    const Matrix<double> analytic = t.grad();
    const Matrix<double> numeric = numeric_gradient([&] { return loss_fn().item(); }, t);
    const double err = relative_error(analytic, numeric);
    if (err > worst) {
      worst = err;
      if (worst_name) *worst_name = name;
    }
  }
  return worst;
}

inline Matrix<double> random_matrix(Rng& rng, Index rows, Index cols, double scale = 1.0) {
  Matrix<double> m(rows, cols);
  for (Index k = 0; k < m.size(); ++k) m.data()[k] = scale * rng.normal();
  return m;
}

/// A few short samples, enough for forward/backward checks.
inline CorpusSpec tiny_corpus_spec(int train = 4, int test = 2) {
  CorpusSpec s;
  s.num_train = train;
  s.num_test = test;
  s.min_length = 2;
  s.max_length = 3;
  s.seed = 99;
  return s;
}

/// 2 layers, 2 heads, d=32; grid 2×2 over rates the tiny corpus admits.
inline ModelConfig tiny_model_config(LoraStrategy strategy = LoraStrategy::MS,
                                     Task task = Task::Avsr) {
  ModelConfig c;
  c.task = task;
  c.encoder_hidden = 8;
  c.audio_token_dim = 8;
  c.video_token_dim = 8;
  c.projector_hidden = 16;
  c.decoder.layers = 2;
  c.decoder.heads = 2;
  c.decoder.d_model = 32;
  c.decoder.d_ff = 32;
  c.decoder.max_length = 96;
  c.grid.audio_rates = {2, 4};
  c.grid.video_rates = {1, 2};
  c.lora.strategy = strategy;
  c.lora.rank_divisor = 8;
  c.seed = 5;
  c.encoder_seed = 99;
  return c;
}

/// Gives every LoRA up-factor random values so adapters are active.
template <typename Scalar>
void randomize_lora(MtskModel<Scalar>& model, std::uint64_t seed, double scale = 0.3) {
  Rng rng(seed);
  ParameterMap<Scalar> lora;
  model.lora().collect(lora);
  for (auto& [name, t] : lora) {
    auto& v = t.mutable_value();
    for (Index k = 0; k < v.size(); ++k) v.data()[k] = Scalar(scale * rng.normal());
  }
}

}  // namespace mtsk::testing
