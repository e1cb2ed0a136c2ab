#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "advlab/numcore.hpp"

namespace advlab {

struct LabeledSample {
  Vec x;
  int y = 0;
};

/// A labeled dataset; every sample shares one input dimension and class count.
struct Dataset {
  std::vector<LabeledSample> samples;
  std::size_t class_count = 2;

  std::size_t size() const noexcept { return samples.size(); }
  std::size_t input_dim() const;
  const LabeledSample& operator[](std::size_t i) const { return samples[i]; }

  /// Throws InvalidInput when empty, ragged, or holding out-of-range labels.
  void validate() const;
};

/// Gradients of one loss evaluation, both taken at the same (w, delta).
struct Gradients {
  Vec w;
  Vec delta;
};

/// Differentiable loss h(w, delta; x, y). Everything that trains or attacks
/// goes through this interface, so surrogate losses and instrumented test
/// doubles plug in without touching the algorithms.
class LossOracle {
 public:
  virtual ~LossOracle() = default;

  virtual std::size_t param_dim() const = 0;
  virtual std::size_t input_dim() const = 0;

  virtual double value(const Vec& w, const Vec& delta, const LabeledSample& sample) const = 0;
  /// One backward pass yielding both gradients at the same point.
  virtual Gradients gradients(const Vec& w, const Vec& delta,
                              const LabeledSample& sample) const = 0;

  /// Default initialization is the zero vector.
  virtual Vec initial_params(SeededRng& rng) const;

  Vec grad_w(const Vec& w, const Vec& delta, const LabeledSample& sample) const {
    return gradients(w, delta, sample).w;
  }
  Vec grad_delta(const Vec& w, const Vec& delta, const LabeledSample& sample) const {
    return gradients(w, delta, sample).delta;
  }

 protected:
  void check_dims(const Vec& w, const Vec& delta, const LabeledSample& sample) const;
};

enum class ModelKind { SoftmaxLinear, TwoLayerTanhMLP, ScalarLogistic };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

struct ModelSpec {
  ModelKind kind = ModelKind::TwoLayerTanhMLP;
  std::size_t input_dim = 20;
  std::size_t class_count = 2;
  std::size_t hidden_dim = 16;  // MLP only
  /// Squash cross-entropy through u / (1 + u) so the loss lives in [0, 1).
  bool bounded_loss = false;
};

/// Small smooth classifier with softmax cross-entropy loss and analytic
/// gradients. Immutable; weights are passed in as flat vectors.
///
/// Parameter layouts (row-major blocks, concatenated):
///   SoftmaxLinear    [W (C x d) | b (C)]
///   TwoLayerTanhMLP  [W1 (H x d) | b1 (H) | W2 (C x H) | b2 (C)]
///   ScalarLogistic   [w (d)], logits (0, w . z), two classes, no bias
class SmoothModel final : public LossOracle {
 public:
  explicit SmoothModel(ModelSpec spec);

  static SmoothModel softmax_linear(std::size_t input_dim, std::size_t classes = 2);
  static SmoothModel mlp(std::size_t input_dim, std::size_t hidden, std::size_t classes = 2);
  static SmoothModel scalar_logistic(std::size_t input_dim = 1);

  const ModelSpec& spec() const noexcept { return spec_; }
  ModelKind kind() const noexcept { return spec_.kind; }
  std::size_t class_count() const noexcept { return spec_.class_count; }
  std::size_t param_dim() const override { return param_dim_; }
  std::size_t input_dim() const override { return spec_.input_dim; }

  SmoothModel with_bounded_loss(bool bounded) const;

  /// f_w(z) for the network input z (usually x + delta).
  Vec logits(const Vec& w, const Vec& z) const;
  /// Vector-Jacobian product of the logits with `dlogits`, in w and in z.
  Gradients backprop(const Vec& w, const Vec& z, const Vec& dlogits) const;
  int predict(const Vec& w, const Vec& z) const;

  double value(const Vec& w, const Vec& delta, const LabeledSample& sample) const override;
  Gradients gradients(const Vec& w, const Vec& delta, const LabeledSample& sample) const override;
  /// Gaussian weights with scale 1/sqrt(fan_in); zero biases.
  Vec initial_params(SeededRng& rng) const override;

 private:
  ModelSpec spec_;
  std::size_t param_dim_;
};

Vec softmax(const Vec& logits);
double log_sum_exp(const Vec& logits);
/// Softmax cross-entropy of `logits` at label y.
double cross_entropy(const Vec& logits, int y);

double loss_value(const LossOracle& oracle, const Vec& w, const Vec& delta,
                  const LabeledSample& sample);

struct BatchGradients {
  Vec mean_grad_w;
  std::vector<Vec> grad_delta;
  double mean_loss = 0.0;
};

/// Mean weight gradient and per-sample perturbation gradients over a batch.
BatchGradients batch_grads(const LossOracle& oracle, const Vec& w, std::span<const Vec> deltas,
                           std::span<const LabeledSample> batch);

/// Central-difference gradients, used as an independent check of the analytic ones.
Vec central_difference_w(const LossOracle& oracle, const Vec& w, const Vec& delta,
                         const LabeledSample& sample, double step);
Vec central_difference_delta(const LossOracle& oracle, const Vec& w, const Vec& delta,
                             const LabeledSample& sample, double step);

/// ||a - b|| / (||a|| + ||b||), with 0 when both vanish.
double relative_error(const Vec& a, const Vec& b);

/// Worst relative discrepancy between analytic and central-difference
/// gradients (both w and delta) over `trials` random configurations.
double finite_diff_report(const SmoothModel& model, int trials, double step, SeededRng& rng);

}  // namespace advlab
