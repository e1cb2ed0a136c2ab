#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <vector>

#include "advlab/bounds.hpp"
#include "advlab/trainers.hpp"

namespace advlab {

/// Two datasets that agree everywhere except at `differing_index`.
struct NeighborPair {
  Dataset s;
  Dataset s_prime;
  std::size_t differing_index = 0;
  LabeledSample replaced_sample;
};

NeighborPair make_neighbor(const Dataset& dataset, std::size_t index,
                           const LabeledSample& replacement);

/// Distances between the coupled runs around one weight update.
struct StabilityRecord {
  int step = 0;
  int iteration = 1;
  int update_index = 0;
  double alpha_w = 0.0;
  int encounter_count = 0;  // occurrences of the differing index in the batch
  double d_w_before = 0.0;
  double d_w_after = 0.0;
  /// Mean over the batch of per-sample perturbation distances, where the
  /// gradient was taken and (free-style) after the ascent step.
  double d_delta_before = 0.0;
  double d_delta_after = 0.0;

  bool in_batch() const noexcept { return encounter_count > 0; }
};

struct StabilityTrace {
  Algorithm algorithm = Algorithm::Vanilla;
  std::vector<StabilityRecord> records;
  int batch_size = 1;
  int free_steps = 1;
  std::optional<int> first_encounter_step;
  std::optional<int> first_divergence_update;
  TrainTrace trace_s;
  TrainTrace trace_s_prime;

  double final_distance() const;
  /// True when every weight distance before the first encounter is zero.
  bool pre_encounter_zero() const;
};

/// Trains on S and S' with identical seeds, so both runs share the
/// initialization, batch indices and perturbation draws.
StabilityTrace coupled_run(const LossOracle& oracle, const NeighborPair& pair,
                           const TrainConfig& cfg);
/// Uses the same loss wrapping as `train` (TRADES variants get the surrogate).
StabilityTrace coupled_run(const SmoothModel& model, const NeighborPair& pair,
                           const TrainConfig& cfg);

/// One line per record: step, iteration, alpha_w, encounter count, d_w
/// before/after, d_delta before/after.
void write_stability_records(std::ostream& out, const StabilityTrace& trace);

struct GrowthConstants {
  double beta = 0.0;
  double L = 0.0;
  double psi = 0.0;

  static GrowthConstants from(const ConstantEstimates& est) { return {est.beta, est.L, est.psi}; }
  GrowthConstants scaled(double factor) const { return {beta * factor, L * factor, psi * factor}; }
};

struct GrowthCheck {
  int update_index = 0;
  int row = 0;  // 0: weight distance, 1: perturbation distance, 2: step-wise
  bool in_batch = false;
  double lhs = 0.0;
  double rhs = 0.0;
  bool violated = false;
};

struct GrowthReport {
  std::size_t checks_out = 0;  // steps with the differing sample absent
  std::size_t violations_out = 0;
  std::size_t checks_in = 0;
  std::size_t violations_in = 0;
  std::size_t stepwise_checks = 0;
  std::size_t stepwise_violations = 0;
  double max_ratio_out = 0.0;  // max lhs / rhs
  double max_ratio_in = 0.0;
  double max_ratio_stepwise = 0.0;
  std::vector<GrowthCheck> checks;

  std::size_t total_violations() const {
    return violations_out + violations_in + stepwise_violations;
  }
  void merge(const GrowthReport& other);
};

/// L2 diameter of the perturbation set: 2 eps, or 2 eps sqrt(dim) for Linf.
double perturbation_diameter(const PerturbationSet& set);

GrowthReport verify_growth_vanilla(const StabilityTrace& trace, const GrowthConstants& k,
                                   const PerturbationSet& set);
/// Iteration-wise 2-vector inequality with the expansivity matrix, plus the
/// step-wise corollary per outer step.
GrowthReport verify_growth_free(const StabilityTrace& trace, const GrowthConstants& k,
                                const PerturbationSet& set, double alpha_delta);
GrowthReport verify_growth_fast(const StabilityTrace& trace, const GrowthConstants& k,
                                const PerturbationSet& set, double fast_step);

struct EncounterSummary {
  int t0 = 0;
  std::size_t runs = 0;
  double fraction = 0.0;  // runs whose differing sample was drawn by step t0
  double standard_error = 0.0;
  double bound = 0.0;     // b t0 / n
  bool within_bound() const { return fraction <= bound + 3.0 * standard_error; }
};

EncounterSummary encounter_check(const std::vector<StabilityTrace>& traces, int t0,
                                 std::size_t b, std::size_t n);

/// Max over eval points of |robust_loss(w) - robust_loss(w')|, with both
/// attacks fed identical restart draws.
double estimate_uniform_stability(const Vec& w, const Vec& w_prime, const LossOracle& oracle,
                                  std::span<const LabeledSample> eval_points,
                                  const PerturbationSet& set, const AttackConfig& attack,
                                  SeededRng& rng);

inline double lipschitz_cap(double L_w, const Vec& w, const Vec& w_prime) {
  return L_w * distance(w, w_prime);
}

}  // namespace advlab
