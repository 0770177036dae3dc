#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "lcadapt/tensor.hpp"

namespace lcadapt {

struct NamedParam {
  std::string name;
  Tensor value;
};

// Polynomial decay:  base * (1 - epoch/total)^power, never negative.
inline double poly_lr(double base, int epoch, int total_epochs, double power) {
  if (total_epochs < 1)
    throw ConfigError(strf("poly_lr: total_epochs must be >= 1, got %d", total_epochs));
  if (epoch < 0 || epoch > total_epochs)
    throw ConfigError(strf("poly_lr: epoch %d outside [0, %d]", epoch, total_epochs));
  const double frac = 1.0 - static_cast<double>(epoch) / static_cast<double>(total_epochs);
  return base * std::pow(frac, power);
}

// Per-parameter momentum buffers, keyed by parameter name so the state
// survives checkpointing order changes.
class OptimizerState {
 public:
  std::vector<double>& velocity_for(const std::string& name, size_t n) {
    auto& v = vel_[name];
    if (v.size() != n) v.assign(n, 0.0);
    return v;
  }

  const std::map<std::string, std::vector<double>>& buffers() const { return vel_; }

 private:
  std::map<std::string, std::vector<double>> vel_;
};

// Classical momentum with decoupled-from-nothing L2: the weight-decay term is
// folded into the gradient before the velocity update.
//   v <- momentum * v + g + weight_decay * p
//   p <- p - lr * v
inline void sgd_step(std::vector<NamedParam>& params, OptimizerState& state,
                     double lr, double momentum, double weight_decay) {
  if (!(lr >= 0.0) || !(momentum >= 0.0) || momentum >= 1.0)
    throw ConfigError(strf("sgd_step: bad lr %g or momentum %g", lr, momentum));
  for (auto& np : params) {
    auto& p = np.value.data();
    auto& g = np.value.grad();
    auto& v = state.velocity_for(np.name, p.size());
    for (size_t i = 0; i < p.size(); ++i) {
      v[i] = momentum * v[i] + g[i] + weight_decay * p[i];
      p[i] -= lr * v[i];
    }
    check_finite(p, "sgd_step parameter");
  }
}

inline void zero_grads(std::vector<NamedParam>& params) {
  for (auto& np : params) np.value.zero_grad();
}

}  // namespace lcadapt
