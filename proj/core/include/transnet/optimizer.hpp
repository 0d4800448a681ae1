#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "transnet/nn/layers.hpp"

namespace transnet {

enum class OptimizerKind { kSgdMomentum, kAdam };

std::string_view to_string(OptimizerKind kind) noexcept;
OptimizerKind parse_optimizer_kind(std::string_view s);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double learning_rate = 1e-3;
  double momentum = 0.9;  // sgd_momentum
  double beta1 = 0.9;     // adam
  double beta2 = 0.999;
  double epsilon = 1e-8;

  friend bool operator==(const OptimizerConfig&, const OptimizerConfig&) = default;
};

/// sgd_momentum: u <- mu*u + g; theta <- theta - lr*u.
/// adam: bias-corrected first/second moments.
/// Moment tensors are keyed by parameter name. Frozen parameters are left
/// untouched. Every gradient is zeroed after the step.
template <typename T>
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config = {});

  const OptimizerConfig& config() const noexcept { return config_; }
  std::uint64_t steps() const noexcept { return steps_; }

  /// ContractError when no parameter has received a gradient since the last step.
  void step(const std::vector<nn::Param<T>*>& params);

 private:
  struct Moments {
    BasicTensor<T> first;
    BasicTensor<T> second;
  };

  OptimizerConfig config_;
  std::uint64_t steps_ = 0;
  std::map<std::string, Moments, std::less<>> state_;
};

template <typename T>
void zero_grad(const std::vector<nn::Param<T>*>& params) {
  for (auto* p : params) p->zero_grad();
}

}  // namespace transnet
