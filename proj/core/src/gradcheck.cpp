#include "transnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <set>
#include <type_traits>

namespace transnet {

template <typename T>
GradCheckReport grad_check(const GradCheckProblem<T>& problem, std::size_t samples, double epsilon,
                           double tolerance, std::uint64_t seed) {
  if constexpr (!std::is_same_v<T, double>) {
    throw PrecisionError("grad_check needs 64-bit parameters");
  } else {
    if (!(epsilon > 0.0)) throw ConfigError("grad_check: epsilon must be > 0");
    std::vector<nn::Param<double>*> params;
    for (auto* p : problem.params) {
      if (!p->frozen) params.push_back(p);
    }
    std::size_t total = 0;
    for (auto* p : params) total += p->numel();
    if (total == 0) throw ConfigError("grad_check: nothing to check");

    for (auto* p : params) p->zero_grad();
    problem.evaluate(true);

    // one probe per tensor first, then uniform over all scalars
    Rng rng(seed);
    std::set<std::pair<std::size_t, std::size_t>> seen;
    std::vector<std::pair<std::size_t, std::size_t>> first;
    for (std::size_t t = 0; t < params.size(); ++t) first.push_back({t, rng.below(params[t]->numel())});
    std::size_t next_first = 0;
    auto next_probe = [&]() {
      if (next_first < first.size()) return first[next_first++];
      std::size_t flat = rng.below(total);
      std::size_t t = 0;
      while (flat >= params[t]->numel()) flat -= params[t++]->numel();
      return std::pair{t, flat};
    };

    const double base = problem.evaluate(false);
    const std::size_t want = std::min(samples, total);
    GradCheckReport report;
    while (report.checked < want && seen.size() < total) {
      const auto probe = next_probe();
      if (!seen.insert(probe).second) continue;
      const auto [t, i] = probe;
      auto* p = params[t];
      const double saved = p->value[i];
      p->value[i] = saved + epsilon;
      const double plus = problem.evaluate(false);
      p->value[i] = saved - epsilon;
      const double minus = problem.evaluate(false);
      p->value[i] = saved;
      const double forward = (plus - base) / epsilon;
      const double backward = (base - minus) / epsilon;
      if (std::abs(forward - backward) >
          tolerance * std::max({1.0, std::abs(forward), std::abs(backward)})) {
        ++report.kinks_skipped;
        continue;
      }
      const double numeric = (plus - minus) / (2.0 * epsilon);
      const double analytic = p->grad[i];
      const double rel =
          std::abs(analytic - numeric) / std::max({1.0, std::abs(analytic), std::abs(numeric)});
      ++report.checked;
      if (numeric != 0.0) ++report.nonzero;
      report.max_rel_error = std::max(report.max_rel_error, rel);
      if (!(rel <= tolerance)) report.failures.push_back({p->name, i, analytic, numeric, rel});
    }
    return report;
  }
}

template GradCheckReport grad_check<float>(const GradCheckProblem<float>&, std::size_t, double,
                                           double, std::uint64_t);
template GradCheckReport grad_check<double>(const GradCheckProblem<double>&, std::size_t, double,
                                            double, std::uint64_t);

LayerProblem layer_problem(nn::Layer<double>& layer, const TensorD& input, std::uint64_t seed) {
  LayerProblem out;
  out.input = std::make_shared<nn::Param<double>>("input", input);
  Rng rng(seed);
  const auto probe = layer.forward(input);
  TensorD r(probe.shape());
  for (auto& v : r.data()) v = rng.uniform(-1.0, 1.0);

  out.problem.params = layer.params();
  out.problem.params.push_back(out.input.get());
  auto* x = out.input.get();
  out.problem.evaluate = [&layer, x, r](bool with_grad) {
    nn::LayerCache<double> cache;
    const auto y = layer.forward_train(x->value, cache);
    double loss = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) loss += r[i] * y[i];
    if (with_grad) x->accumulate(layer.backward(cache, r, 0));
    return loss;
  };
  return out;
}

GradCheckProblem<double> transnet_problem(TransNetModel<double>& model, const TensorD& clips,
                                          std::vector<std::size_t> labels) {
  GradCheckProblem<double> problem;
  problem.params = model.params();
  const double scale = 1.0 / static_cast<double>(labels.size());
  problem.evaluate = [&model, clips, labels = std::move(labels), scale](bool with_grad) {
    TransNetTrace<double> trace;
    model.forward_train(clips, trace);
    if (with_grad) return model.backward(trace, labels, scale);
    double loss = 0.0;
    for (std::size_t b = 0; b < labels.size(); ++b) {
      loss += scale * nn::softmax_cross_entropy(trace.heads[b].logits, labels[b]).loss;
    }
    return loss;
  };
  return problem;
}

ToyGradCheck run_toy_gradcheck(std::size_t samples, double epsilon, double tolerance,
                               std::uint64_t seed, HeadActivation head) {
  auto config = gradcheck_toy_config();
  config.head_activation = head;
  Rng rng(seed);
  TransNetModel<double> model(config, rng);
  // Zero biases leave a dead channel's successors exactly on the ReLU kink,
  // where central differences see half a slope; check at a generic point.
  for (auto* p : model.params()) {
    if (!p->name.ends_with("bias")) continue;
    for (auto& v : p->value.data()) v = (rng.below(2) ? 1.0 : -1.0) * rng.uniform(0.05, 0.2);
  }
  const std::size_t batch = 2;
  const auto& b = config.backbone;
  TensorD clips({batch, config.frames, b.input_channels, b.input_height, b.input_width});
  for (auto& v : clips.data()) v = rng.uniform();
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < batch; ++i) labels.push_back(rng.below(config.classes));
  ToyGradCheck out;
  out.param_count = model.param_count();
  out.report = grad_check(transnet_problem(model, clips, labels), samples, epsilon, tolerance,
                          seed + 1);
  return out;
}

}  // namespace transnet
