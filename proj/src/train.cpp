#include "mtsk/train.hpp"

#include "mtsk/json_util.hpp"

namespace mtsk {

using nlohmann::json;

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("train: " + msg); };
  if (epochs < 0) fail("epochs must be >= 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(learning_rate > 0)) fail("learning_rate must be > 0");
  if (warmup_fraction < 0 || warmup_fraction >= 1) fail("warmup_fraction outside [0,1)");
  if (weight_decay < 0) fail("weight_decay must be >= 0");
  if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) fail("betas outside [0,1)");
  if (!(epsilon > 0)) fail("epsilon must be > 0");
  if (clip_norm < 0) fail("clip_norm must be >= 0");
  if (eval_samples < 0) fail("eval_samples must be >= 0");
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"epochs", c.epochs},
           {"batch_size", c.batch_size},
           {"learning_rate", c.learning_rate},
           {"warmup_fraction", c.warmup_fraction},
           {"weight_decay", c.weight_decay},
           {"beta1", c.beta1},
           {"beta2", c.beta2},
           {"epsilon", c.epsilon},
           {"clip_norm", c.clip_norm},
           {"eval_samples", c.eval_samples},
           {"seed", c.seed}};
}

void from_json(const json& j, TrainConfig& c) {
  constexpr std::string_view sec = "train";
  require_known_keys(j, sec,
                     {"epochs", "batch_size", "learning_rate", "warmup_fraction", "weight_decay",
                      "beta1", "beta2", "epsilon", "clip_norm", "eval_samples", "seed"});
  read_optional(j, sec, "epochs", c.epochs);
  read_optional(j, sec, "batch_size", c.batch_size);
  read_optional(j, sec, "learning_rate", c.learning_rate);
  read_optional(j, sec, "warmup_fraction", c.warmup_fraction);
  read_optional(j, sec, "weight_decay", c.weight_decay);
  read_optional(j, sec, "beta1", c.beta1);
  read_optional(j, sec, "beta2", c.beta2);
  read_optional(j, sec, "epsilon", c.epsilon);
  read_optional(j, sec, "clip_norm", c.clip_norm);
  read_optional(j, sec, "eval_samples", c.eval_samples);
  read_optional(j, sec, "seed", c.seed);
}

double cosine_lr(const TrainConfig& cfg, long step, long total_steps) {
  if (total_steps <= 0) return cfg.learning_rate;
  const long warmup = long(std::ceil(cfg.warmup_fraction * double(total_steps)));
  if (step < warmup) return cfg.learning_rate * double(step + 1) / double(warmup);
  const long span = std::max(1L, total_steps - warmup);
  const double progress = std::min(1.0, double(step - warmup) / double(span));
  return 0.5 * cfg.learning_rate * (1 + std::cos(std::numbers::pi * progress));
}

void to_json(json& j, const EpochRecord& r) {
  j = json{{"epoch", r.epoch},
           {"train_loss", r.train_loss},
           {"per_scale_eval_loss", r.eval_loss},
           {"lr", r.lr}};
}

}  // namespace mtsk
