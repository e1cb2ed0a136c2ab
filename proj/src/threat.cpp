#include "advlab/threat.hpp"

#include <algorithm>
#include <cmath>

namespace advlab {

std::string to_string(NormKind kind) { return kind == NormKind::L2 ? "l2" : "linf"; }

NormKind norm_kind_from_string(const std::string& name) {
  if (name == "l2" || name == "L2") return NormKind::L2;
  if (name == "linf" || name == "Linf" || name == "inf") return NormKind::Linf;
  fail(ErrorKind::InvalidConfig, "unknown norm '" + name + "'");
}

double PerturbationSet::norm_of(const Vec& v) const {
  return norm == NormKind::L2 ? v.norm() : v.lpNorm<Eigen::Infinity>();
}

bool PerturbationSet::contains(const Vec& v, double tolerance) const {
  return static_cast<std::size_t>(v.size()) == dim && norm_of(v) <= radius + tolerance;
}

Vec PerturbationSet::sample_uniform(SeededRng& rng) const {
  return norm == NormKind::L2 ? sample_uniform_l2_ball(rng, dim, radius)
                              : sample_uniform_linf_ball(rng, dim, radius);
}

void PerturbationSet::validate() const {
  require(dim >= 1, ErrorKind::InvalidDimension, "perturbation dimension must be positive");
  require(radius >= 0.0 && std::isfinite(radius), ErrorKind::InvalidConfig,
          "perturbation radius must be finite and nonnegative");
}

AttackConfig AttackConfig::evaluation_default(double eps) {
  return AttackConfig{10, eps / 4.0, 1, AttackInit::Uniform};
}

void AttackConfig::validate() const {
  require(steps >= 1, ErrorKind::InvalidConfig, "attack needs at least one step");
  require(restarts >= 1, ErrorKind::InvalidConfig, "attack needs at least one restart");
  require(step_size >= 0.0 && std::isfinite(step_size), ErrorKind::InvalidConfig,
          "attack step size must be nonnegative");
}

Vec project_onto_set(const Vec& g, const PerturbationSet& set) {
  require(static_cast<std::size_t>(g.size()) == set.dim, ErrorKind::InvalidInput,
          "vector dimension does not match perturbation set");
  if (set.norm == NormKind::Linf) {
    return g.cwiseMax(-set.radius).cwiseMin(set.radius);
  }
  const double n = g.norm();
  if (n <= set.radius) return g;
  Vec out = g * (set.radius / n);
  // scaling can land one ulp outside
  const double m = out.norm();
  if (m > set.radius) out *= set.radius / m;
  return out;
}

Vec project_extreme(const Vec& g, const PerturbationSet& set) {
  require(static_cast<std::size_t>(g.size()) == set.dim, ErrorKind::InvalidInput,
          "vector dimension does not match perturbation set");
  if (set.norm == NormKind::Linf) {
    return g.unaryExpr([r = set.radius](double v) { return v < 0.0 ? -r : r; });
  }
  const double n = g.norm();
  require(n > 0.0, ErrorKind::DegenerateGradient,
          "extreme-point projection of a zero vector is undefined for the L2 ball");
  return g * (set.radius / n);
}

IdentityCheck projgrad_identity_check(const Vec& g, const PerturbationSet& set, double psi,
                                      double tolerance) {
  require(set.norm == NormKind::L2, ErrorKind::InvalidInput,
          "projected-gradient identity is stated for the L2 ball");
  require(psi > 0.0, ErrorKind::InvalidInput, "psi must be positive");
  if (g.norm() < 1.0 / psi) return IdentityCheck::NotApplicable;
  const Vec lhs = project_extreme(g, set);
  const Vec rhs = project_onto_set(set.radius * psi * g, set);
  return (lhs - rhs).lpNorm<Eigen::Infinity>() <= tolerance ? IdentityCheck::Holds
                                                             : IdentityCheck::Fails;
}

Vec projected_ascent_step(const Vec& delta, const Vec& grad, const PerturbationSet& set,
                          double step) {
  if (set.norm == NormKind::L2 && grad.norm() == 0.0) return delta;
  return project_onto_set(delta + step * project_extreme(grad, set), set);
}

Vec pgd_ascent(const LossOracle& oracle, const Vec& w, const LabeledSample& sample,
               const PerturbationSet& set, int steps, double step_size, Vec start) {
  Vec delta = std::move(start);
  for (int k = 0; k < steps; ++k) {
    const Vec g = oracle.grad_delta(w, delta, sample);
    delta = projected_ascent_step(delta, g, set, step_size);
  }
  return delta;
}

Vec pgd_attack(const LossOracle& oracle, const Vec& w, const LabeledSample& sample,
               const PerturbationSet& set, const AttackConfig& cfg, SeededRng& rng) {
  cfg.validate();
  set.validate();
  require(static_cast<std::size_t>(sample.x.size()) == set.dim, ErrorKind::InvalidInput,
          "sample dimension does not match perturbation set");
  Vec best;
  double best_loss = -1.0;
  for (int r = 0; r < cfg.restarts; ++r) {
    Vec start = cfg.init == AttackInit::Zero ? Vec::Zero(static_cast<Eigen::Index>(set.dim))
                                             : set.sample_uniform(rng);
    Vec delta = pgd_ascent(oracle, w, sample, set, cfg.steps, cfg.step_size, std::move(start));
    const double loss = oracle.value(w, delta, sample);
    if (r == 0 || loss > best_loss) {
      best_loss = loss;
      best = std::move(delta);
    }
  }
  return best;
}

double robust_loss(const LossOracle& oracle, const Vec& w, const LabeledSample& sample,
                   const PerturbationSet& set, const AttackConfig& cfg, SeededRng& rng) {
  const Vec delta = pgd_attack(oracle, w, sample, set, cfg, rng);
  return oracle.value(w, delta, sample);
}

RobustRisk empirical_robust_risk(const SmoothModel& model, const Vec& w, const Dataset& data,
                                 const PerturbationSet& set, const AttackConfig& cfg,
                                 SeededRng& rng) {
  require(data.size() > 0, ErrorKind::InvalidInput, "cannot evaluate risk on an empty dataset");
  RobustRisk out;
  std::size_t correct = 0;
  for (const auto& s : data.samples) {
    const Vec delta = pgd_attack(model, w, s, set, cfg, rng);
    out.risk += model.value(w, delta, s);
    if (model.predict(w, s.x + delta) == s.y) ++correct;
  }
  out.risk /= static_cast<double>(data.size());
  out.robust_accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return out;
}

RobustRisk empirical_clean_risk(const SmoothModel& model, const Vec& w, const Dataset& data) {
  require(data.size() > 0, ErrorKind::InvalidInput, "cannot evaluate risk on an empty dataset");
  RobustRisk out;
  std::size_t correct = 0;
  const Vec zero = Vec::Zero(static_cast<Eigen::Index>(model.input_dim()));
  for (const auto& s : data.samples) {
    out.risk += model.value(w, zero, s);
    if (model.predict(w, s.x) == s.y) ++correct;
  }
  out.risk /= static_cast<double>(data.size());
  out.robust_accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return out;
}

}  // namespace advlab
