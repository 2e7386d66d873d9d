#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

#include "posbias/tensor.hpp"

namespace posbias::nn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First/second moment estimates for one parameter tensor.
struct AdamSlot {
  Tensor m;
  Tensor v;
};

/// One Adam update with bias correction. L2 regularization enters as
/// g <- grad + weight_decay * param before the moment updates. `t` is the
/// 1-based step count.
inline void adam_step(Tensor& param, const Tensor& grad, AdamSlot& slot,
                      std::int64_t t, const AdamConfig& cfg,
                      double weight_decay = 0.0) {
  check_same_shape(param, grad, "adam_step");
  if (t < 1) throw std::invalid_argument("adam_step: t must be >= 1");
  if (!slot.m.same_shape(param)) {
    slot.m = Tensor(param.shape());
    slot.v = Tensor(param.shape());
  }
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i] + weight_decay * param[i];
    slot.m[i] = cfg.beta1 * slot.m[i] + (1.0 - cfg.beta1) * g;
    slot.v[i] = cfg.beta2 * slot.v[i] + (1.0 - cfg.beta2) * g * g;
    const double mhat = slot.m[i] / bc1;
    const double vhat = slot.v[i] / bc2;
    param[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
  }
}

/// Keeps per-name slots and a shared step counter for a set of named
/// parameters.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(AdamConfig cfg) : cfg_(cfg) {}

  /// Applies one step to every (param, grad) pair. `decay` gives the L2
  /// coefficient per tensor name (0 for exempt tensors).
  template <class DecayFn>
  void step(std::map<std::string, Tensor>& params,
            const std::map<std::string, Tensor>& grads, DecayFn&& decay) {
    ++t_;
    for (auto& [name, param] : params) {
      auto git = grads.find(name);
      if (git == grads.end()) continue;
      adam_step(param, git->second, slots_[name], t_, cfg_, decay(name));
    }
  }

  std::int64_t steps() const { return t_; }

 private:
  AdamConfig cfg_;
  std::map<std::string, AdamSlot> slots_;
  std::int64_t t_ = 0;
};

}  // namespace posbias::nn
