#pragma once

#include "mtsk/hashing.hpp"
#include "mtsk/model.hpp"

#include <cmath>
#include <functional>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mtsk {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  int epochs = 3;
  int batch_size = 16;
  double learning_rate = 1e-3;
  double warmup_fraction = 0.05;
  double weight_decay = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 1.0;
  int eval_samples = 64;  // test samples used for per-scale eval loss; 0 disables
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Linear warmup to the peak, then cosine annealing to zero.
double cosine_lr(const TrainConfig& cfg, long step, long total_steps);

/// Uniform mean of scalar losses, summed left to right.
template <typename Scalar>
Tensor<Scalar> average_losses(const std::vector<Tensor<Scalar>>& losses) {
  if (losses.empty()) throw std::invalid_argument("average_losses: no losses");
  Tensor<Scalar> total = losses.front();
  for (std::size_t k = 1; k < losses.size(); ++k) total = add(total, losses[k]);
  return scale(total, Scalar(1) / Scalar(losses.size()));
}

/// Matryoshka objective for one sample: the mean of the per-scale losses over `scales`.
template <typename Scalar>
Tensor<Scalar> matryoshka_loss(const MtskModel<Scalar>& model, const EncodedSample<Scalar>& x,
                               const std::vector<ScaleIndex>& scales) {
  if (scales.empty()) throw std::invalid_argument("matryoshka_loss: empty scale set");
  std::vector<Tensor<Scalar>> losses;
  losses.reserve(scales.size());
  for (auto idx : scales) losses.push_back(model.loss_at_scale(x, idx));
  return average_losses(losses);
}

template <typename Scalar>
Tensor<Scalar> matryoshka_loss(const MtskModel<Scalar>& model, const EncodedSample<Scalar>& x) {
  return matryoshka_loss(model, x, model.grid().indices());
}

/// Decoupled-weight-decay Adam over a fixed parameter set.
template <typename Scalar>
class AdamW {
 public:
  AdamW(ParameterMap<Scalar> params, const TrainConfig& cfg) : params_(std::move(params)), cfg_(cfg) {
    for (const auto& [name, t] : params_) {
      m_.emplace(name, Matrix<Scalar>::Zero(t.rows(), t.cols()));
      v_.emplace(name, Matrix<Scalar>::Zero(t.rows(), t.cols()));
    }
  }

  /// Global L2 norm of all current gradients.
  double grad_norm() const {
    double sq = 0;
    for (const auto& [name, t] : params_) {
      if (t.has_grad()) sq += double(t.grad().squaredNorm());
    }
    return std::sqrt(sq);
  }

  /// Rescales gradients so their global norm is at most `max_norm`.
  double clip(double max_norm) {
    const double norm = grad_norm();
    if (max_norm > 0 && norm > max_norm) {
      const Scalar f = Scalar(max_norm / (norm + 1e-6));
      for (auto& [name, t] : params_) {
        if (t.has_grad()) t.mutable_grad() *= f;
      }
    }
    return norm;
  }

  void step(double lr) {
    ++t_;
    const double bc1 = 1 - std::pow(cfg_.beta1, double(t_));
    const double bc2 = 1 - std::pow(cfg_.beta2, double(t_));
    const Scalar b1 = Scalar(cfg_.beta1);
    const Scalar b2 = Scalar(cfg_.beta2);
    for (auto& [name, t] : params_) {
      if (!t.has_grad()) continue;
      auto& m = m_.at(name);
      auto& v = v_.at(name);
      const Matrix<Scalar>& g = t.grad();
      m = b1 * m + (Scalar(1) - b1) * g;
      v = b2 * v + (Scalar(1) - b2) * g.cwiseProduct(g);
      auto& w = t.mutable_value();
      w *= Scalar(1 - lr * cfg_.weight_decay);
      w.array() -= Scalar(lr / bc1) * m.array() /
                   ((v.array() / Scalar(bc2)).sqrt() + Scalar(cfg_.epsilon));
    }
  }

  void zero_grad() {
    for (auto& [name, t] : params_) t.zero_grad();
  }

  long steps() const { return t_; }

 private:
  ParameterMap<Scalar> params_;
  TrainConfig cfg_;
  std::map<std::string, Matrix<Scalar>> m_;
  std::map<std::string, Matrix<Scalar>> v_;
  long t_ = 0;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0;
  std::map<std::string, double> eval_loss;  // keyed "a,v"
  double lr = 0;
};

void to_json(nlohmann::json& j, const EpochRecord& r);

struct TrainResult {
  double initial_train_loss = 0;  // mean objective over the train split before any update
  std::vector<EpochRecord> log;
  long steps = 0;
};

/// SHA-256 over the names and values of every parameter whose name starts
/// with one of `prefixes`.
template <typename Scalar>
std::string parameter_checksum(const ParameterMap<Scalar>& params,
                               const std::vector<std::string>& prefixes) {
  std::string bytes;
  for (const auto& [name, t] : params) {
    bool keep = false;
    for (const auto& p : prefixes) keep = keep || name.starts_with(p);
    if (!keep) continue;
    bytes += name;
    bytes.push_back('\0');
    const auto& v = t.value();
    bytes.append(reinterpret_cast<const char*>(v.data()), std::size_t(v.size()) * sizeof(Scalar));
  }
  return sha256_hex(bytes);
}

/// Mean of `loss_fn` over `samples`, without building gradients into the model.
template <typename Scalar, typename LossFn>
double mean_loss(const std::vector<EncodedSample<Scalar>>& samples, LossFn&& loss_fn) {
  if (samples.empty()) return 0;
  double total = 0;
  for (const auto& s : samples) total += double(loss_fn(s).item());
  return total / double(samples.size());
}

/// Per-scale eval loss keyed by "a,v".
template <typename Scalar>
std::map<std::string, double> per_scale_loss(const MtskModel<Scalar>& model,
                                             const std::vector<EncodedSample<Scalar>>& samples) {
  std::map<std::string, double> out;
  for (auto idx : model.grid().indices()) {
    const auto key = scale_key(model.grid().audio_rate(idx), model.grid().video_rate(idx));
    out[key] = mean_loss(samples, [&](const auto& s) { return model.loss_at_scale(s, idx); });
  }
  return out;
}

/// Minimises the Matryoshka objective over every trainable parameter of `model`
/// (whatever its phase allows). Each record of the log is also passed to
/// `on_epoch` when given.
template <typename Scalar>
TrainResult train(MtskModel<Scalar>& model, const std::vector<EncodedSample<Scalar>>& train_set,
                  const std::vector<EncodedSample<Scalar>>& eval_set, const TrainConfig& cfg,
                  const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  cfg.validate();
  TrainResult result;
  if (cfg.epochs == 0) return result;
  if (train_set.empty()) throw TrainingError("train: empty training split");
  const auto scales = model.grid().indices();
  AdamW<Scalar> opt(model.trainable_parameters(), cfg);
  const std::vector<EncodedSample<Scalar>> eval_subset(
      eval_set.begin(), eval_set.begin() + std::min<std::ptrdiff_t>(cfg.eval_samples,
                                                                   std::ptrdiff_t(eval_set.size())));

  result.initial_train_loss =
      mean_loss(train_set, [&](const auto& s) { return matryoshka_loss(model, s, scales); });

  const long per_epoch = (long(train_set.size()) + cfg.batch_size - 1) / cfg.batch_size;
  const long total = per_epoch * cfg.epochs;
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng shuffle_rng = Rng::derive(cfg.seed, std::uint64_t(epoch));
    shuffle_rng.shuffle(order);
    double epoch_loss = 0;
    double lr = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += std::size_t(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), begin + std::size_t(cfg.batch_size));
      const Scalar inv_batch = Scalar(1) / Scalar(end - begin);
      opt.zero_grad();
      for (std::size_t k = begin; k < end; ++k) {
        const auto& sample = train_set[order[k]];
        Tensor<Scalar> loss = matryoshka_loss(model, sample, scales);
        const double value = double(loss.item());
        if (!std::isfinite(value)) {
          throw TrainingError("non-finite loss " + std::to_string(value) + " at epoch " +
                              std::to_string(epoch) + " step " + std::to_string(opt.steps()) +
                              " sample " + sample.id);
        }
        epoch_loss += value;
        scale(loss, inv_batch).backward();
      }
      const double norm = opt.clip(cfg.clip_norm);
      if (!std::isfinite(norm)) {
        throw TrainingError("non-finite gradient norm at epoch " + std::to_string(epoch) +
                            " step " + std::to_string(opt.steps()));
      }
      lr = cosine_lr(cfg, opt.steps(), total);
      opt.step(lr);
    }
    opt.zero_grad();
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_loss / double(train_set.size());
    rec.lr = lr;
    rec.eval_loss = per_scale_loss(model, eval_subset);
    result.log.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  result.steps = opt.steps();
  return result;
}

}  // namespace mtsk
