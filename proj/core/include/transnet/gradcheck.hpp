#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "transnet/nn/layers.hpp"
#include "transnet/transnet.hpp"

namespace transnet {

/// A scalar loss over a set of parameters. evaluate(true) must zero nothing
/// itself: grad_check zeroes the gradients, calls evaluate(true) once to
/// collect analytic gradients, then calls evaluate(false) for every probe.
template <typename T>
struct GradCheckProblem {
  std::vector<nn::Param<T>*> params;
  std::function<T(bool with_grad)> evaluate;
};

struct GradCheckFailure {
  std::string param;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  std::size_t checked = 0;
  std::size_t kinks_skipped = 0;
  std::size_t nonzero = 0;  // checked probes with a nonzero numeric gradient
  double max_rel_error = 0.0;
  std::vector<GradCheckFailure> failures;

  // all-zero gradients (e.g. a dead head) verify nothing
  bool passed() const noexcept { return nonzero > 0 && failures.empty(); }
};

/// Central differences (loss(θ+ε) - loss(θ-ε)) / 2ε on `samples` scalar
/// parameters; every tensor gets at least one probe when samples allows it.
/// Relative error is |a-n| / max(1, |a|, |n|). A probe whose one-sided
/// differences disagree by more than the tolerance straddles a kink; it is
/// counted in kinks_skipped and replaced by a fresh probe. A wrong analytic
/// gradient cannot hide this way since it never enters the one-sided test.
/// PrecisionError for float.
template <typename T>
GradCheckReport grad_check(const GradCheckProblem<T>& problem, std::size_t samples, double epsilon,
                           double tolerance, std::uint64_t seed);

/// Loss sum(r * layer(x)) with a fixed random projection r; the input itself
/// is exposed as a parameter named "input" so parameter-free layers are
/// checked too. The problem refers to `layer` and to `input`, which must
/// both outlive it.
struct LayerProblem {
  GradCheckProblem<double> problem;
  std::shared_ptr<nn::Param<double>> input;
};
LayerProblem layer_problem(nn::Layer<double>& layer, const TensorD& input, std::uint64_t seed);

/// Batch-mean cross-entropy of a TransNet on fixed clips and labels.
GradCheckProblem<double> transnet_problem(TransNetModel<double>& model, const TensorD& clips,
                                          std::vector<std::size_t> labels);

struct ToyGradCheck {
  GradCheckReport report;
  std::size_t param_count = 0;
};

/// The built-in check: gradcheck_toy_config() with nonzero biases, two
/// random clips.
ToyGradCheck run_toy_gradcheck(std::size_t samples = 200, double epsilon = 1e-4,
                               double tolerance = 1e-3, std::uint64_t seed = 7,
                               HeadActivation head = HeadActivation::kRelu);

}  // namespace transnet
