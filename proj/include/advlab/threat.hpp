#pragma once

#include <string>
#include <vector>

#include "advlab/models.hpp"

namespace advlab {

enum class NormKind { L2, Linf };

std::string to_string(NormKind kind);
NormKind norm_kind_from_string(const std::string& name);

/// Closed ball {delta : ||delta|| <= radius} in the declared norm.
struct PerturbationSet {
  NormKind norm = NormKind::L2;
  double radius = 0.0;
  std::size_t dim = 1;

  double norm_of(const Vec& v) const;
  bool contains(const Vec& v, double tolerance = 0.0) const;
  /// Uniform draw from the ball using the matching numcore sampler.
  Vec sample_uniform(SeededRng& rng) const;
  void validate() const;
};

enum class AttackInit { Zero, Uniform };

struct AttackConfig {
  int steps = 10;
  double step_size = 0.0;
  int restarts = 1;
  AttackInit init = AttackInit::Uniform;

  /// Evaluation adversary: 10 steps of size eps/4, one uniform restart.
  static AttackConfig evaluation_default(double eps);
  void validate() const;
};

/// Euclidean projection onto the ball (radial scaling for L2, clamp for Linf).
Vec project_onto_set(const Vec& g, const PerturbationSet& set);

/// Nearest extreme point of the ball: eps * g / ||g|| for L2, eps * sign(g)
/// with sign(0) = +1 for Linf. Throws DegenerateGradient for L2 with g = 0.
Vec project_extreme(const Vec& g, const PerturbationSet& set);

enum class IdentityCheck { Holds, Fails, NotApplicable };

/// For an L2 ball and ||g|| >= 1/psi, the extreme-point projection of g equals
/// the set projection of eps * psi * g. Reports NotApplicable below the threshold.
IdentityCheck projgrad_identity_check(const Vec& g, const PerturbationSet& set, double psi,
                                      double tolerance = 1e-10);

/// One projected-gradient ascent step: P(delta + step * pi(grad)). A zero L2
/// gradient leaves delta unchanged.
Vec projected_ascent_step(const Vec& delta, const Vec& grad, const PerturbationSet& set,
                          double step);

/// Single PGD path of `steps` ascent steps from `start`.
Vec pgd_ascent(const LossOracle& oracle, const Vec& w, const LabeledSample& sample,
               const PerturbationSet& set, int steps, double step_size, Vec start);

/// Best-of-restarts PGD; restarts draw their uniform starts from `rng`.
Vec pgd_attack(const LossOracle& oracle, const Vec& w, const LabeledSample& sample,
               const PerturbationSet& set, const AttackConfig& cfg, SeededRng& rng);

/// h at the PGD perturbation; a lower bound on the inner max.
double robust_loss(const LossOracle& oracle, const Vec& w, const LabeledSample& sample,
                   const PerturbationSet& set, const AttackConfig& cfg, SeededRng& rng);

struct RobustRisk {
  double risk = 0.0;
  double robust_accuracy = 0.0;
};

RobustRisk empirical_robust_risk(const SmoothModel& model, const Vec& w, const Dataset& data,
                                 const PerturbationSet& set, const AttackConfig& cfg,
                                 SeededRng& rng);

/// Clean risk and accuracy (no perturbation).
RobustRisk empirical_clean_risk(const SmoothModel& model, const Vec& w, const Dataset& data);

}  // namespace advlab
