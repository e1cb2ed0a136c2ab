#include "advlab/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace advlab {

namespace {

void require_positive(double v, const char* name) {
  require(v > 0.0 && std::isfinite(v), ErrorKind::InvalidInput,
          std::string(name) + " must be positive");
}

void require_nonnegative(double v, const char* name) {
  require(v >= 0.0 && std::isfinite(v), ErrorKind::InvalidInput,
          std::string(name) + " must be nonnegative");
}

}  // namespace

ConstantEstimates ConstantEstimates::inflated(double factor) const {
  ConstantEstimates out = *this;
  out.L *= factor;
  out.L_w *= factor;
  out.beta *= factor;
  out.psi *= factor;
  return out;
}

ProbeRegion::ProbeRegion(std::vector<Vec> anchors, double weight_margin, PerturbationSet set,
                         std::vector<LabeledSample> samples)
    : anchors_(std::move(anchors)),
      weight_margin_(weight_margin),
      set_(set),
      samples_(std::move(samples)) {
  require(!anchors_.empty(), ErrorKind::InvalidInput, "probe region needs at least one anchor");
  require(!samples_.empty(), ErrorKind::InvalidInput, "probe region needs at least one sample");
  require(weight_margin_ >= 0.0, ErrorKind::InvalidInput, "weight margin must be nonnegative");
  set_.validate();
}

ProbePoint ProbeRegion::sample(SeededRng& rng) const {
  const Vec& anchor = anchors_[rng.index(anchors_.size())];
  ProbePoint p;
  p.w = anchor + gaussian_vector(rng, static_cast<std::size_t>(anchor.size()), weight_margin_);
  p.delta = set_.sample_uniform(rng);
  p.sample = &samples_[rng.index(samples_.size())];
  return p;
}

std::string ProbeRegion::describe() const {
  std::ostringstream os;
  os << anchors_.size() << " weight anchors + N(0, " << weight_margin_ << "^2) jitter; delta ~ U("
     << to_string(set_.norm) << " ball, eps=" << set_.radius << "); " << samples_.size()
     << " data samples";
  return os.str();
}

LipschitzEstimate estimate_lipschitz(const LossOracle& oracle, const ProbeRegion& region,
                                     int probes, SeededRng& rng) {
  require(probes >= 2, ErrorKind::InvalidInput, "Lipschitz estimation needs at least two probes");
  LipschitzEstimate est;
  for (int i = 0; i < probes; ++i) {
    const ProbePoint p = region.sample(rng);
    const Gradients g = oracle.gradients(p.w, p.delta, *p.sample);
    const double gw = g.w.squaredNorm();
    est.L_w = std::max(est.L_w, std::sqrt(gw));
    est.L = std::max(est.L, std::sqrt(gw + g.delta.squaredNorm()));
  }
  est.probes = static_cast<std::size_t>(probes);
  return est;
}

double estimate_smoothness(const LossOracle& oracle, const ProbeRegion& region, int probes,
                           double pair_scale, SeededRng& rng) {
  require(probes >= 2, ErrorKind::InvalidInput, "smoothness estimation needs at least two probes");
  require(pair_scale > 0.0, ErrorKind::InvalidInput, "pair scale must be positive");
  const auto pw = static_cast<Eigen::Index>(oracle.param_dim());
  const auto pd = static_cast<Eigen::Index>(oracle.input_dim());
  double beta = 0.0;
  for (int i = 0; i < probes; ++i) {
    const ProbePoint p = region.sample(rng);
    Vec dir = gaussian_vector(rng, static_cast<std::size_t>(pw + pd));
    const double n = dir.norm();
    if (n == 0.0) continue;
    dir *= pair_scale / n;
    const Vec w2 = p.w + dir.head(pw);
    const Vec d2 = p.delta + dir.tail(pd);
    const Gradients g1 = oracle.gradients(p.w, p.delta, *p.sample);
    const Gradients g2 = oracle.gradients(w2, d2, *p.sample);
    const double diff =
        std::sqrt((g1.w - g2.w).squaredNorm() + (g1.delta - g2.delta).squaredNorm());
    const double dz = std::sqrt((w2 - p.w).squaredNorm() + (d2 - p.delta).squaredNorm());
    if (dz > 0.0) beta = std::max(beta, diff / dz);
  }
  return beta;
}

PsiEstimate estimate_psi(const TrainTrace& trace, double floor) {
  return estimate_psi(std::vector<const TrainTrace*>{&trace}, floor);
}

PsiEstimate estimate_psi(const std::vector<const TrainTrace*>& traces, double floor) {
  require(floor > 0.0, ErrorKind::InvalidInput, "psi floor must be positive");
  PsiEstimate est;
  est.min_norm = std::numeric_limits<double>::infinity();
  for (const TrainTrace* t : traces) {
    for (const auto& r : t->records) {
      est.min_norm_series.push_back(r.min_grad_delta_norm);
      est.min_norm = std::min(est.min_norm, r.min_grad_delta_norm);
    }
  }
  require(!est.min_norm_series.empty(), ErrorKind::InvalidInput,
          "cannot estimate psi from an empty trace");
  est.degenerate = !(est.min_norm >= floor);
  est.psi = 1.0 / std::max(est.min_norm, floor);
  return est;
}

double lambda_vanilla(double beta, double c) {
  require_positive(beta, "beta");
  require_positive(c, "c");
  return beta * c;
}

double lambda_free(double beta, double c, int m, double alpha_delta, double eps, double psi) {
  require_positive(beta, "beta");
  require_positive(c, "c");
  require(m >= 1, ErrorKind::InvalidInput, "free steps m must be positive");
  require_nonnegative(alpha_delta, "alpha_delta");
  require_nonnegative(eps, "eps");
  require_positive(psi, "psi");
  const double base = 1.0 + beta * c / m + alpha_delta * eps * psi * beta;
  return beta * c * std::pow(base, m - 1);
}

double lambda_fast(double beta, double c, double fast_step, double eps, double psi) {
  require_positive(beta, "beta");
  require_positive(c, "c");
  require_nonnegative(fast_step, "fast step");
  require_nonnegative(eps, "eps");
  require_positive(psi, "psi");
  return beta * c * (1.0 + fast_step * eps * psi * beta);
}

double recursion_bound(const GrowthRecursion& rec, double n, double b, double steps, double L_w) {
  require_positive(rec.nu, "nu");
  require_nonnegative(rec.xi, "xi");
  require_positive(n, "n");
  require_positive(b, "b");
  require_positive(steps, "steps");
  require_nonnegative(L_w, "L_w");
  const double nu = rec.nu;
  return (b / n) * (1.0 + 1.0 / nu) * std::pow(L_w * rec.xi * nu / b, 1.0 / (nu + 1.0)) *
         std::pow(steps, nu / (nu + 1.0));
}

double optimal_t0(const GrowthRecursion& rec, double b, double steps, double L_w) {
  return std::pow(L_w * rec.xi * std::pow(steps, rec.nu) * rec.nu / b, 1.0 / (rec.nu + 1.0));
}

void BoundReport::attach_gap(double gap) {
  measured_gap = gap;
  ratio = gap != 0.0 ? bound_value / gap : std::numeric_limits<double>::infinity();
}

namespace {

void validate_inputs(const BoundInputs& in) {
  require(in.n >= 1 && in.b >= 1 && in.T >= 1 && in.m >= 1, ErrorKind::InvalidInput,
          "n, b, T and m must be positive");
  require_positive(in.c, "c");
  require_nonnegative(in.eps, "eps");
  require_positive(in.constants.beta, "beta");
  require_nonnegative(in.constants.L, "L");
  require_nonnegative(in.constants.L_w, "L_w");
}

BoundReport finish(std::string algorithm, double lambda, GrowthRecursion rec, double steps,
                   const BoundInputs& in) {
  BoundReport r;
  r.algorithm = std::move(algorithm);
  r.lambda = lambda;
  r.steps = steps;
  rec.t0 = static_cast<int>(std::clamp(
      std::floor(optimal_t0(rec, static_cast<double>(in.b), steps, in.constants.L_w)), 1.0,
      std::max(1.0, steps)));
  r.recursion = rec;
  r.bound_value = recursion_bound(rec, static_cast<double>(in.n), static_cast<double>(in.b),
                                  steps, in.constants.L_w);
  r.measured_gap = std::numeric_limits<double>::quiet_NaN();
  r.ratio = std::numeric_limits<double>::quiet_NaN();
  return r;
}

}  // namespace

BoundReport bound_vanilla(const BoundInputs& in) {
  validate_inputs(in);
  const double beta = in.constants.beta;
  const double lambda = lambda_vanilla(beta, in.c);
  const GrowthRecursion rec{lambda,
                            2.0 * in.eps * static_cast<double>(in.n) + 2.0 * in.constants.L / beta};
  return finish("vanilla", lambda, rec, static_cast<double>(in.T), in);
}

BoundReport bound_free(const BoundInputs& in) {
  validate_inputs(in);
  require(in.T % in.m == 0, ErrorKind::InvalidInput, "T must be divisible by m");
  const double beta = in.constants.beta;
  const double lambda = lambda_free(beta, in.c, static_cast<int>(in.m), in.alpha_delta, in.eps,
                                    in.constants.psi);
  const GrowthRecursion rec{lambda, 2.0 * in.constants.L / beta};
  BoundReport r = finish("free", lambda, rec, static_cast<double>(in.T / in.m), in);
  const double lv = lambda_vanilla(beta, in.c);
  const double T = static_cast<double>(in.T);
  r.free_vs_vanilla_ratio = std::pow(T / static_cast<double>(in.n), 1.0 / (lv + 1.0)) *
                            std::pow(1.0 / T, 1.0 / (lambda + 1.0));
  return r;
}

BoundReport bound_fast(const BoundInputs& in) {
  validate_inputs(in);
  const double beta = in.constants.beta;
  const double lambda = lambda_fast(beta, in.c, in.fast_step, in.eps, in.constants.psi);
  const double expansion = 1.0 + in.fast_step * in.eps * in.constants.psi * beta;
  const GrowthRecursion rec{lambda, 2.0 * in.constants.L / (beta * expansion)};
  return finish("fast", lambda, rec, static_cast<double>(in.T), in);
}

BoundReport bound_for(Algorithm algorithm, const BoundInputs& in) {
  switch (algorithm) {
    case Algorithm::Vanilla:
    case Algorithm::Trades: return bound_vanilla(in);
    case Algorithm::Free:
    case Algorithm::FreeTrades: return bound_free(in);
    case Algorithm::Fast: return bound_fast(in);
  }
  fail(ErrorKind::InvalidInput, "unknown algorithm");
}

ExpansivityMatrix ExpansivityMatrix::from_rates(double alpha_w, double beta, double alpha_delta,
                                                double eps, double psi) {
  require_positive(alpha_w, "alpha_w");
  return {alpha_w * beta, alpha_delta * eps * psi / alpha_w};
}

Eigen::Matrix2d ExpansivityMatrix::entries() const {
  Eigen::Matrix2d m;
  m << 1.0 + alpha, alpha, alpha * r, 1.0 + alpha * r;
  return m;
}

ExpansivityPower expansivity_power(const ExpansivityMatrix& matrix, int m) {
  require(m >= 0, ErrorKind::InvalidInput, "matrix power must be nonnegative");
  const Eigen::Matrix2d eta = matrix.entries();
  ExpansivityPower out;
  out.power = Eigen::Matrix2d::Identity();
  for (int i = 0; i < m; ++i) out.power = out.power * eta;
  const double r = matrix.r;
  out.closed_form_top_left = (r + std::pow(1.0 + matrix.alpha * (r + 1.0), m)) / (r + 1.0);
  return out;
}

Eigen::Vector2d expansivity_eigenvalues(const ExpansivityMatrix& matrix) {
  Eigen::EigenSolver<Eigen::Matrix2d> solver(matrix.entries(), false);
  Eigen::Vector2d ev = solver.eigenvalues().real();
  if (ev[0] > ev[1]) std::swap(ev[0], ev[1]);
  return ev;
}

}  // namespace advlab
