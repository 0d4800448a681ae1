#include "transnet/optimizer.hpp"

#include <cmath>

namespace transnet {

std::string_view to_string(OptimizerKind kind) noexcept {
  return kind == OptimizerKind::kAdam ? "adam" : "sgd_momentum";
}

OptimizerKind parse_optimizer_kind(std::string_view s) {
  if (s == "adam") return OptimizerKind::kAdam;
  if (s == "sgd_momentum" || s == "sgd") return OptimizerKind::kSgdMomentum;
  throw ConfigError("unknown optimizer '" + std::string(s) + "' (expected adam|sgd_momentum)");
}

template <typename T>
Optimizer<T>::Optimizer(OptimizerConfig config) : config_(config) {
  if (!(config_.learning_rate > 0.0)) throw ConfigError("optimizer: learning rate must be > 0");
  if (config_.momentum < 0.0 || config_.momentum >= 1.0) {
    throw ConfigError("optimizer: momentum must be in [0,1)");
  }
  if (config_.beta1 < 0.0 || config_.beta1 >= 1.0 || config_.beta2 < 0.0 || config_.beta2 >= 1.0) {
    throw ConfigError("optimizer: adam betas must be in [0,1)");
  }
}

template <typename T>
void Optimizer<T>::step(const std::vector<nn::Param<T>*>& params) {
  bool any = false;
  for (const auto* p : params) any = any || p->has_grad;
  if (!any) throw ContractError("optimizer step before any backward pass");
  ++steps_;

  const T lr = static_cast<T>(config_.learning_rate);
  const double t = static_cast<double>(steps_);
  const T bc1 = static_cast<T>(1.0 - std::pow(config_.beta1, t));
  const T bc2 = static_cast<T>(1.0 - std::pow(config_.beta2, t));
  const T b1 = static_cast<T>(config_.beta1);
  const T b2 = static_cast<T>(config_.beta2);
  const T eps = static_cast<T>(config_.epsilon);
  const T mu = static_cast<T>(config_.momentum);

  for (auto* p : params) {
    if (p->frozen) {
      p->zero_grad();
      continue;
    }
    auto it = state_.find(p->name);
    if (it == state_.end()) {
      Moments m{BasicTensor<T>::zeros(p->value.shape()),
                config_.kind == OptimizerKind::kAdam ? BasicTensor<T>::zeros(p->value.shape())
                                                     : BasicTensor<T>{}};
      it = state_.emplace(p->name, std::move(m)).first;
    }
    auto& m = it->second;
    if (m.first.shape() != p->value.shape()) {
      throw ShapeError("optimizer: moment shape mismatch for " + p->name);
    }
    T* theta = p->value.raw();
    const T* g = p->grad.raw();
    T* u = m.first.raw();
    const std::size_t n = p->value.size();
    if (config_.kind == OptimizerKind::kSgdMomentum) {
      for (std::size_t i = 0; i < n; ++i) {
        u[i] = mu * u[i] + g[i];
        theta[i] -= lr * u[i];
      }
    } else {
      T* v = m.second.raw();
      for (std::size_t i = 0; i < n; ++i) {
        u[i] = b1 * u[i] + (T{1} - b1) * g[i];
        v[i] = b2 * v[i] + (T{1} - b2) * g[i] * g[i];
        const T mhat = u[i] / bc1;
        const T vhat = v[i] / bc2;
        theta[i] -= lr * mhat / (std::sqrt(vhat) + eps);
      }
    }
    p->zero_grad();
  }
}

template class Optimizer<float>;
template class Optimizer<double>;

}  // namespace transnet
