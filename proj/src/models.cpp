#include "advlab/models.hpp"

#include <algorithm>
#include <cmath>

namespace advlab {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

std::size_t compute_param_dim(const ModelSpec& s) {
  switch (s.kind) {
    case ModelKind::SoftmaxLinear: return s.class_count * s.input_dim + s.class_count;
    case ModelKind::TwoLayerTanhMLP:
      return s.hidden_dim * s.input_dim + s.hidden_dim + s.class_count * s.hidden_dim +
             s.class_count;
    case ModelKind::ScalarLogistic: return s.input_dim;
  }
  return 0;
}

Eigen::Index idx(std::size_t v) { return static_cast<Eigen::Index>(v); }

}  // namespace

std::size_t Dataset::input_dim() const {
  require(!samples.empty(), ErrorKind::InvalidInput, "dataset is empty");
  return static_cast<std::size_t>(samples.front().x.size());
}

void Dataset::validate() const {
  require(!samples.empty(), ErrorKind::InvalidInput, "dataset is empty");
  const auto dim = samples.front().x.size();
  for (const auto& s : samples) {
    require(s.x.size() == dim, ErrorKind::InvalidInput, "dataset samples differ in dimension");
    require(s.y >= 0 && static_cast<std::size_t>(s.y) < class_count, ErrorKind::InvalidInput,
            "label out of range");
  }
}

Vec LossOracle::initial_params(SeededRng&) const {
  return Vec::Zero(idx(param_dim()));
}

void LossOracle::check_dims(const Vec& w, const Vec& delta, const LabeledSample& sample) const {
  require(static_cast<std::size_t>(w.size()) == param_dim(), ErrorKind::InvalidInput,
          "weight vector has length " + std::to_string(w.size()) + ", expected " +
              std::to_string(param_dim()));
  require(static_cast<std::size_t>(delta.size()) == input_dim(), ErrorKind::InvalidInput,
          "perturbation has wrong dimension");
  require(static_cast<std::size_t>(sample.x.size()) == input_dim(), ErrorKind::InvalidInput,
          "sample has wrong dimension");
}

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::SoftmaxLinear: return "softmax_linear";
    case ModelKind::TwoLayerTanhMLP: return "mlp";
    case ModelKind::ScalarLogistic: return "logistic";
  }
  return "unknown";
}

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "softmax_linear" || name == "linear") return ModelKind::SoftmaxLinear;
  if (name == "mlp" || name == "tanh_mlp") return ModelKind::TwoLayerTanhMLP;
  if (name == "logistic" || name == "scalar_logistic") return ModelKind::ScalarLogistic;
  fail(ErrorKind::InvalidConfig, "unknown model kind '" + name + "'");
}

SmoothModel::SmoothModel(ModelSpec spec) : spec_(spec), param_dim_(0) {
  require(spec_.input_dim >= 1, ErrorKind::InvalidConfig, "input_dim must be positive");
  require(spec_.class_count >= 2, ErrorKind::InvalidConfig, "need at least two classes");
  if (spec_.kind == ModelKind::ScalarLogistic) {
    require(spec_.class_count == 2, ErrorKind::InvalidConfig, "logistic model is binary");
  }
  if (spec_.kind == ModelKind::TwoLayerTanhMLP) {
    require(spec_.hidden_dim >= 1, ErrorKind::InvalidConfig, "hidden_dim must be positive");
  }
  param_dim_ = compute_param_dim(spec_);
}

SmoothModel SmoothModel::softmax_linear(std::size_t input_dim, std::size_t classes) {
  return SmoothModel({ModelKind::SoftmaxLinear, input_dim, classes, 0, false});
}

SmoothModel SmoothModel::mlp(std::size_t input_dim, std::size_t hidden, std::size_t classes) {
  return SmoothModel({ModelKind::TwoLayerTanhMLP, input_dim, classes, hidden, false});
}

SmoothModel SmoothModel::scalar_logistic(std::size_t input_dim) {
  return SmoothModel({ModelKind::ScalarLogistic, input_dim, 2, 0, false});
}

SmoothModel SmoothModel::with_bounded_loss(bool bounded) const {
  ModelSpec s = spec_;
  s.bounded_loss = bounded;
  return SmoothModel(s);
}

Vec SmoothModel::logits(const Vec& w, const Vec& z) const {
  const auto d = idx(spec_.input_dim);
  const auto c = idx(spec_.class_count);
  switch (spec_.kind) {
    case ModelKind::SoftmaxLinear: {
      ConstMap W(w.data(), c, d);
      return W * z + w.segment(c * d, c);
    }
    case ModelKind::TwoLayerTanhMLP: {
      const auto h = idx(spec_.hidden_dim);
      ConstMap W1(w.data(), h, d);
      const auto b1 = w.segment(h * d, h);
      ConstMap W2(w.data() + h * d + h, c, h);
      const auto b2 = w.segment(h * d + h + c * h, c);
      const Vec hidden = (W1 * z + b1).array().tanh().matrix();
      return W2 * hidden + b2;
    }
    case ModelKind::ScalarLogistic: {
      Vec out(2);
      out << 0.0, w.dot(z);
      return out;
    }
  }
  return {};
}

Gradients SmoothModel::backprop(const Vec& w, const Vec& z, const Vec& dlogits) const {
  const auto d = idx(spec_.input_dim);
  const auto c = idx(spec_.class_count);
  Gradients g{Vec::Zero(idx(param_dim_)), Vec::Zero(d)};
  switch (spec_.kind) {
    case ModelKind::SoftmaxLinear: {
      ConstMap W(w.data(), c, d);
      MutMap gW(g.w.data(), c, d);
      gW.noalias() = dlogits * z.transpose();
      g.w.segment(c * d, c) = dlogits;
      g.delta.noalias() = W.transpose() * dlogits;
      break;
    }
    case ModelKind::TwoLayerTanhMLP: {
      const auto h = idx(spec_.hidden_dim);
      ConstMap W1(w.data(), h, d);
      const auto b1 = w.segment(h * d, h);
      ConstMap W2(w.data() + h * d + h, c, h);
      const Vec hidden = (W1 * z + b1).array().tanh().matrix();
      const Vec dhidden = W2.transpose() * dlogits;
      const Vec dpre = (dhidden.array() * (1.0 - hidden.array().square())).matrix();
      MutMap gW1(g.w.data(), h, d);
      gW1.noalias() = dpre * z.transpose();
      g.w.segment(h * d, h) = dpre;
      MutMap gW2(g.w.data() + h * d + h, c, h);
      gW2.noalias() = dlogits * hidden.transpose();
      g.w.segment(h * d + h + c * h, c) = dlogits;
      g.delta.noalias() = W1.transpose() * dpre;
      break;
    }
    case ModelKind::ScalarLogistic: {
      const double upstream = dlogits[1];
      g.w = upstream * z;
      g.delta = upstream * w;
      break;
    }
  }
  return g;
}

int SmoothModel::predict(const Vec& w, const Vec& z) const {
  const Vec a = logits(w, z);
  Eigen::Index best = 0;
  a.maxCoeff(&best);
  return static_cast<int>(best);
}

double SmoothModel::value(const Vec& w, const Vec& delta, const LabeledSample& sample) const {
  check_dims(w, delta, sample);
  const double ce = cross_entropy(logits(w, sample.x + delta), sample.y);
  return spec_.bounded_loss ? ce / (1.0 + ce) : ce;
}

Gradients SmoothModel::gradients(const Vec& w, const Vec& delta,
                                 const LabeledSample& sample) const {
  check_dims(w, delta, sample);
  const Vec z = sample.x + delta;
  const Vec a = logits(w, z);
  require(sample.y >= 0 && sample.y < a.size(), ErrorKind::InvalidInput, "label out of range");
  Vec dlogits = softmax(a);
  dlogits[sample.y] -= 1.0;
  if (spec_.bounded_loss) {
    const double ce = cross_entropy(a, sample.y);
    dlogits *= 1.0 / ((1.0 + ce) * (1.0 + ce));
  }
  return backprop(w, z, dlogits);
}

Vec SmoothModel::initial_params(SeededRng& rng) const {
  const auto d = spec_.input_dim;
  const auto c = spec_.class_count;
  Vec w = Vec::Zero(idx(param_dim_));
  auto fill = [&](Eigen::Index offset, std::size_t count, std::size_t fan_in) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < count; ++i) w[offset + idx(i)] = scale * rng.gaussian();
  };
  switch (spec_.kind) {
    case ModelKind::SoftmaxLinear: fill(0, c * d, d); break;
    case ModelKind::TwoLayerTanhMLP: {
      const auto h = spec_.hidden_dim;
      fill(0, h * d, d);
      fill(idx(h * d + h), c * h, h);
      break;
    }
    case ModelKind::ScalarLogistic: fill(0, d, d); break;
  }
  return w;
}

double log_sum_exp(const Vec& logits) {
  const double m = logits.maxCoeff();
  return m + std::log((logits.array() - m).exp().sum());
}

Vec softmax(const Vec& logits) {
  const double m = logits.maxCoeff();
  Vec e = (logits.array() - m).exp().matrix();
  return e / e.sum();
}

double cross_entropy(const Vec& logits, int y) {
  require(y >= 0 && y < logits.size(), ErrorKind::InvalidInput, "label out of range");
  // clamp tiny negative rounding so the loss stays nonnegative
  return std::max(0.0, log_sum_exp(logits) - logits[y]);
}

double loss_value(const LossOracle& oracle, const Vec& w, const Vec& delta,
                  const LabeledSample& sample) {
  return oracle.value(w, delta, sample);
}

BatchGradients batch_grads(const LossOracle& oracle, const Vec& w, std::span<const Vec> deltas,
                           std::span<const LabeledSample> batch) {
  require(deltas.size() == batch.size(), ErrorKind::InvalidInput,
          "batch and perturbation counts differ");
  require(!batch.empty(), ErrorKind::InvalidInput, "empty batch");
  BatchGradients out{Vec::Zero(idx(oracle.param_dim())), {}, 0.0};
  out.grad_delta.reserve(batch.size());
  for (std::size_t j = 0; j < batch.size(); ++j) {
    Gradients g = oracle.gradients(w, deltas[j], batch[j]);
    out.mean_grad_w += g.w;
    out.grad_delta.push_back(std::move(g.delta));
    out.mean_loss += oracle.value(w, deltas[j], batch[j]);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  out.mean_grad_w *= inv;
  out.mean_loss *= inv;
  return out;
}

Vec central_difference_w(const LossOracle& oracle, const Vec& w, const Vec& delta,
                         const LabeledSample& sample, double step) {
  require(step > 0.0, ErrorKind::InvalidInput, "finite-difference step must be positive");
  Vec g(w.size());
  Vec probe = w;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    probe[i] = w[i] + step;
    const double up = oracle.value(probe, delta, sample);
    probe[i] = w[i] - step;
    const double down = oracle.value(probe, delta, sample);
    probe[i] = w[i];
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

Vec central_difference_delta(const LossOracle& oracle, const Vec& w, const Vec& delta,
                             const LabeledSample& sample, double step) {
  require(step > 0.0, ErrorKind::InvalidInput, "finite-difference step must be positive");
  Vec g(delta.size());
  Vec probe = delta;
  for (Eigen::Index i = 0; i < delta.size(); ++i) {
    probe[i] = delta[i] + step;
    const double up = oracle.value(w, probe, sample);
    probe[i] = delta[i] - step;
    const double down = oracle.value(w, probe, sample);
    probe[i] = delta[i];
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

double relative_error(const Vec& a, const Vec& b) {
  const double denom = a.norm() + b.norm();
  if (denom == 0.0) return 0.0;
  return (a - b).norm() / denom;
}

double finite_diff_report(const SmoothModel& model, int trials, double step, SeededRng& rng) {
  require(step > 0.0, ErrorKind::InvalidInput, "finite-difference step must be positive");
  const auto d = model.input_dim();
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    const Vec w = gaussian_vector(rng, model.param_dim(), 0.7);
    const Vec delta = gaussian_vector(rng, d, 0.3);
    LabeledSample s{gaussian_vector(rng, d), static_cast<int>(rng.index(model.class_count()))};
    const Gradients g = model.gradients(w, delta, s);
    worst = std::max(worst, relative_error(g.w, central_difference_w(model, w, delta, s, step)));
    worst = std::max(worst,
                     relative_error(g.delta, central_difference_delta(model, w, delta, s, step)));
  }
  return worst;
}

}  // namespace advlab
