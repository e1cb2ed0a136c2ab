#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "advlab/bounds.hpp"
#include "advlab/trainers.hpp"

namespace advlab {

enum class SyntheticKind { TwoGaussians, XorClusters, Spiral2d };

std::string to_string(SyntheticKind kind);
SyntheticKind synthetic_kind_from_string(const std::string& name);

struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::TwoGaussians;
  std::size_t n_train = 500;
  std::size_t n_test = 500;
  std::size_t dim = 20;
  double noise = 1.0;
  std::uint64_t seed = 0;
};

struct SyntheticData {
  Dataset train;
  Dataset test;
};

/// Binary problems with labels alternating by index, so classes are balanced
/// to within one sample. Train and test are drawn from the same distribution.
SyntheticData make_synthetic(const SyntheticSpec& spec);

struct ExperimentConfig {
  ModelSpec model;
  SyntheticSpec data;
  TrainConfig train;
  AttackConfig eval_attack;
  int checkpoint_every = 0;      // 0 means n / b
  int trials = 1;
  /// When set, train.total_iterations is an oracle-call budget and each
  /// algorithm gets as many updates as that budget buys.
  bool matched_compute = false;
  std::uint64_t eval_seed = 0;
  std::string output_path = ".";
  bool attach_bounds = true;
  int bound_probes = 200;

  void validate() const;
  /// Weight updates actually performed.
  int effective_iterations() const;
  int effective_checkpoint_every() const;
};

/// Oracle calls one weight update costs for the configured algorithm.
int oracle_calls_per_update(const TrainConfig& cfg);

struct Checkpoint {
  int trial = 0;
  int iteration = 0;
  double train_acc = 0.0;  // robust accuracies
  double test_acc = 0.0;
  double train_risk = 0.0;  // robust risks
  double test_risk = 0.0;
  double train_clean_acc = 0.0;
  double test_clean_acc = 0.0;
  std::uint64_t oracle_calls = 0;

  double acc_gap() const { return train_acc - test_acc; }
  double risk_gap() const { return test_risk - train_risk; }
};

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;
  double se = 0.0;
  std::size_t count = 0;
};

MeanSd summarize(const std::vector<double>& values);

struct GapReport {
  ExperimentConfig config;
  std::vector<Checkpoint> checkpoints;  // grouped by trial, iterations ascending
  std::vector<double> psi_min_norm;     // per trial
  std::vector<std::vector<double>> min_norm_series;  // per trial
  std::vector<std::uint64_t> oracle_calls;           // per trial
  std::optional<ConstantEstimates> constants;
  std::optional<BoundReport> bound;
  bool bound_schedule_vanishing = false;

  /// Last checkpoint of each trial.
  std::vector<Checkpoint> final_checkpoints() const;
  MeanSd acc_gap() const;
  MeanSd risk_gap() const;
  /// Checkpoint iterations (shared by all trials).
  std::vector<int> iterations() const;
  bool psi_degenerate() const;
};

GapReport run_gap_experiment(const ExperimentConfig& cfg);

struct GapTrend {
  std::vector<double> n_values;
  std::vector<double> mean_gaps;
  double spearman = 0.0;
  /// Least-squares slope of log(gap) against log(n) over the positive gaps.
  double slope = 0.0;
  double slope_se = 0.0;
  std::size_t fitted_points = 0;
};

double spearman_correlation(const std::vector<double>& x, const std::vector<double>& y);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
};

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

GapTrend gap_trend(const std::vector<GapReport>& reports);

struct VsNResult {
  std::vector<GapReport> reports;
  GapTrend trend;
};

VsNResult run_vs_n_experiment(const ExperimentConfig& base, const std::vector<std::size_t>& n_values);

/// accuracy[source][target]: robust accuracy of `target` on perturbations
/// crafted against `source` (0 = A, 1 = B) over the test set.
struct TransferResult {
  std::array<std::array<double, 2>, 2> accuracy{};
  Vec w_a;
  Vec w_b;
};

TransferResult run_transfer_experiment(const ExperimentConfig& cfg_a, const ExperimentConfig& cfg_b);

struct PairedGapReport {
  GapReport sequential;
  GapReport free_style;
  /// Per-trial final accuracy gap, sequential minus free.
  std::vector<double> gap_differences() const;
};

PairedGapReport run_free_trades_comparison(const ExperimentConfig& cfg_trades,
                                           const ExperimentConfig& cfg_free_trades);

}  // namespace advlab
