#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "advlab/trainers.hpp"

namespace advlab {

/// Estimated local constants of the loss over a sampled region.
struct ConstantEstimates {
  double L = 0.0;      // joint Lipschitz constant in (w, delta)
  double L_w = 0.0;    // Lipschitz constant in w
  double beta = 0.0;   // smoothness (gradient Lipschitz) constant
  double psi = 0.0;    // 1 / lower bound of ||grad_delta h||
  std::size_t lipschitz_probes = 0;
  std::size_t smoothness_probes = 0;
  std::size_t psi_samples = 0;
  std::string region;  // human-readable description of where probes were drawn

  ConstantEstimates inflated(double factor) const;
};

struct ProbePoint {
  Vec w;
  Vec delta;
  const LabeledSample* sample = nullptr;
};

/// Region the constants are estimated over: weights near a set of anchors
/// (typically the training trajectory), perturbations uniform on the ball,
/// and data drawn from a fixed sample pool.
class ProbeRegion {
 public:
  ProbeRegion(std::vector<Vec> anchors, double weight_margin, PerturbationSet set,
              std::vector<LabeledSample> samples);

  /// Consumes a fixed number of draws per call.
  ProbePoint sample(SeededRng& rng) const;
  std::string describe() const;

 private:
  std::vector<Vec> anchors_;
  double weight_margin_;
  PerturbationSet set_;
  std::vector<LabeledSample> samples_;
};

struct LipschitzEstimate {
  double L = 0.0;
  double L_w = 0.0;
  std::size_t probes = 0;
};

/// Max joint and weight gradient norms over `probes` random points.
LipschitzEstimate estimate_lipschitz(const LossOracle& oracle, const ProbeRegion& region,
                                     int probes, SeededRng& rng);

/// Max of ||grad h(z) - grad h(z')|| / ||z - z'|| over probe pairs with
/// z' = z + pair_scale * (random unit direction in the joint (w, delta) space).
double estimate_smoothness(const LossOracle& oracle, const ProbeRegion& region, int probes,
                           double pair_scale, SeededRng& rng);

struct PsiEstimate {
  double psi = 0.0;
  double min_norm = 0.0;
  bool degenerate = false;  // the floor was engaged
  std::vector<double> min_norm_series;
};

PsiEstimate estimate_psi(const TrainTrace& trace, double floor = 1e-6);
/// Pools several traces (e.g. both runs of a coupled pair).
PsiEstimate estimate_psi(const std::vector<const TrainTrace*>& traces, double floor = 1e-6);

double lambda_vanilla(double beta, double c);
double lambda_free(double beta, double c, int m, double alpha_delta, double eps, double psi);
double lambda_fast(double beta, double c, double fast_step, double eps, double psi);

/// Coefficients of E[d_t] <= (1 + nu/t) E[d_{t-1}] + (nu / (n t)) xi.
struct GrowthRecursion {
  double nu = 0.0;
  double xi = 0.0;
  int t0 = 1;
};

/// Generalization bound implied by a growth recursion after `steps` steps:
/// (b/n)(1 + 1/nu)(L_w xi nu / b)^(1/(nu+1)) steps^(nu/(nu+1)).
double recursion_bound(const GrowthRecursion& rec, double n, double b, double steps, double L_w);

/// Conditioning step that balances the two terms of the bound.
double optimal_t0(const GrowthRecursion& rec, double b, double steps, double L_w);

struct BoundInputs {
  std::size_t n = 1;
  std::size_t b = 1;
  std::size_t T = 1;
  std::size_t m = 1;
  double c = 1.0;
  double eps = 0.0;
  double alpha_delta = 0.0;
  double fast_step = 0.0;
  ConstantEstimates constants;
};

struct BoundReport {
  std::string algorithm;
  double lambda = 0.0;
  GrowthRecursion recursion;
  double steps = 0.0;        // T, or T/m for free
  double bound_value = 0.0;
  double measured_gap = 0.0;
  double ratio = 0.0;        // bound / measured gap
  /// Free only: (T/n)^(1/(lambda_V+1)) (1/T)^(1/(lambda_F+1)).
  std::optional<double> free_vs_vanilla_ratio;

  void attach_gap(double gap);
};

BoundReport bound_vanilla(const BoundInputs& in);
BoundReport bound_free(const BoundInputs& in);
BoundReport bound_fast(const BoundInputs& in);
/// Picks the bound matching the algorithm (TRADES variants map to vanilla/free).
BoundReport bound_for(Algorithm algorithm, const BoundInputs& in);

/// 2x2 matrix governing the joint growth of (d_w, d_delta) in one free step:
/// [[1 + a, a], [a r, 1 + a r]] with a = alpha_w beta, r = alpha_delta eps psi / alpha_w.
struct ExpansivityMatrix {
  double alpha = 0.0;
  double r = 0.0;

  static ExpansivityMatrix from_rates(double alpha_w, double beta, double alpha_delta, double eps,
                                      double psi);
  Eigen::Matrix2d entries() const;
};

struct ExpansivityPower {
  Eigen::Matrix2d power;
  double closed_form_top_left = 1.0;
};

/// eta^m by repeated multiplication plus the eigendecomposition closed form
/// (r + (1 + a(r+1))^m) / (r + 1) of its top-left entry.
ExpansivityPower expansivity_power(const ExpansivityMatrix& matrix, int m);

/// Eigenvalues computed numerically, sorted ascending.
Eigen::Vector2d expansivity_eigenvalues(const ExpansivityMatrix& matrix);

}  // namespace advlab
