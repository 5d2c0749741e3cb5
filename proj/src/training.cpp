#include "mncd/training.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mncd/autodiff.hpp"

namespace mncd {

void TrainConfig::validate() const {
  if (!(lr_min > 0.0 && lr_min <= lr_max)) {
    throw ConfigError("train: require 0 < lr_min <= lr_max");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("train: betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw ConfigError("train: eps must be positive");
  if (batch_size < 1) throw ConfigError("train: batch_size must be positive");
  if (total_steps < 1) throw ConfigError("train: total_steps must be positive");
}

Tensor bce_loss(const Tensor& pred, const Tensor& target_in) {
  if (pred.numel() != target_in.numel() || pred.ndim() < 2 || target_in.ndim() < 2 ||
      pred.dim(-1) != target_in.dim(-1) || pred.dim(-2) != target_in.dim(-2)) {
    throw ShapeError("bce_loss: prediction " + shape_str(pred.shape()) + " vs target " +
                     shape_str(target_in.shape()));
  }
  const Tensor target = target_in.dtype() == pred.dtype() ? target_in : target_in.to(pred.dtype());
  const auto n = static_cast<double>(pred.numel());
  Tensor out({1}, pred.dtype());
  dispatch(pred.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto p = pred.values<T>();
    auto y = target.values<T>();
    double acc = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (y[i] != T(0) && y[i] != T(1)) {
        throw ArgumentError("bce_loss: target must be binary, found " + std::to_string(y[i]));
      }
      const double q = std::clamp(static_cast<double>(p[i]), kBceClamp, 1.0 - kBceClamp);
      acc += y[i] == T(1) ? std::log(q) : std::log(1.0 - q);
    }
    out.values<T>()[0] = static_cast<T>(-acc / n);
  });
  emit("bce_loss", {pred}, {out}, [pred, target, n](std::span<const Tensor> grads) {
    const double g = grads[0].item();
    Tensor gp(pred.shape(), pred.dtype());
    dispatch(pred.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto p = pred.values<T>();
      auto y = target.values<T>();
      auto dst = gp.values<T>();
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double v = p[i];
        if (v < kBceClamp || v > 1.0 - kBceClamp) {
          dst[i] = T(0);  // flat outside the clamp
          continue;
        }
        const double d = y[i] == T(1) ? -1.0 / v : 1.0 / (1.0 - v);
        dst[i] = static_cast<T>(g * d / n);
      }
    });
    accumulate_grad(pred, gp);
  });
  return out;
}

double cosine_lr(std::int64_t step, std::int64_t total, double lr_max, double lr_min) {
  if (total < 1) throw ArgumentError("cosine_lr: total steps must be positive");
  if (step < 0) throw ArgumentError("cosine_lr: negative step");
  if (step >= total) return lr_min;
  if (step == 0) return lr_max;
  const double phase = std::numbers::pi * static_cast<double>(step) / static_cast<double>(total);
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(phase));
}

void adam_step(const std::vector<nn::Parameter>& params, AdamState& state, double lr,
               const AdamHyper& hyper) {
  for (const auto& p : params) {
    if (!p.value.has_grad()) {
      throw StateError("adam_step: parameter '" + p.name + "' has no gradient");
    }
  }
  state.t += 1;
  const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.t));
  for (const auto& p : params) {
    Tensor value = p.value;
    auto [mit, m_new] = state.m.try_emplace(p.name, Tensor::zeros(value.shape(), value.dtype()));
    auto [vit, v_new] = state.v.try_emplace(p.name, Tensor::zeros(value.shape(), value.dtype()));
    if (mit->second.shape() != value.shape() || vit->second.shape() != value.shape()) {
      throw StateError("adam_step: moment shape mismatch for '" + p.name + "'");
    }
    const Tensor grad = p.value.grad();
    dispatch(value.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto theta = value.values<T>();
      auto g = grad.values<T>();
      auto m = mit->second.template values<T>();
      auto v = vit->second.template values<T>();
      for (std::size_t i = 0; i < theta.size(); ++i) {
        const double gi = g[i];
        const double mi = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * gi;
        const double vi = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * gi * gi;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        const double step = lr * (mi / c1) / (std::sqrt(vi / c2) + hyper.eps);
        theta[i] = static_cast<T>(theta[i] - step);
      }
    });
  }
}

std::string StepLog::to_json() const {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["lr"] = lr;
  j["loss"] = loss;
  return j.dump();
}

std::vector<StepLog> fit(ChangeDetector& model, const std::vector<SamplePair>& samples,
                         const TrainConfig& config, AdamState& state, const StepCallback& on_step) {
  config.validate();
  if (samples.empty()) throw ArgumentError("fit: empty training set");
  std::vector<PatchRef> refs;
  refs.reserve(samples.size());
  for (const auto& s : samples) refs.push_back({s.site_id, s.patch_id});
  const BatchIterator batches(refs, config.batch_size, true, config.seed);
  const std::int64_t per_epoch = static_cast<std::int64_t>(batches.batches_per_epoch());
  const AdamHyper hyper{config.beta1, config.beta2, config.eps};
  const auto params = model.parameters();

  std::vector<StepLog> log;
  model.set_mode(ops::NormMode::train);
  std::vector<std::vector<std::size_t>> epoch_batches;
  std::int64_t loaded_epoch = -1;
  for (std::int64_t step = state.t; step < config.total_steps; ++step) {
    const std::int64_t epoch = step / per_epoch;
    if (epoch != loaded_epoch) {
      epoch_batches = batches.epoch_indices(static_cast<std::uint64_t>(epoch));
      loaded_epoch = epoch;
    }
    const Batch batch =
        stack_batch(samples, epoch_batches[static_cast<std::size_t>(step % per_epoch)], model.dtype());

    const double lr = cosine_lr(step, config.total_steps, config.lr_max, config.lr_min);
    model.zero_grad();
    const Tensor prob = model.forward(batch.image_a, batch.image_b);
    const Tensor loss = bce_loss(prob, batch.mask);
    const double value = loss.item();
    if (!std::isfinite(value)) {
      GradientTape::current().clear();
      throw NumericError("non-finite loss " + std::to_string(value) + " at step " +
                         std::to_string(step));
    }
    backward(loss);
    adam_step(params, state, lr, hyper);

    const StepLog entry{step, lr, value};
    log.push_back(entry);
    if (on_step) on_step(entry);
  }
  return log;
}

}  // namespace mncd
