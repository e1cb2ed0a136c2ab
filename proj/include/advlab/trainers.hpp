#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "advlab/threat.hpp"

namespace advlab {

enum class ScheduleKind { Constant, VanishingOverT, VanishingOverMT };

/// Weight step size alpha_{w,t}: c, c/t, or c/(m t).
struct StepSchedule {
  ScheduleKind kind = ScheduleKind::Constant;
  double c = 0.1;
  int m = 1;

  bool vanishing() const noexcept { return kind != ScheduleKind::Constant; }
};

std::string to_string(ScheduleKind kind);
ScheduleKind schedule_kind_from_string(const std::string& name);

double step_size(const StepSchedule& schedule, int t);

/// `Trades` is the sequential TRADES baseline: a full PGD inner loop on the
/// TRADES surrogate followed by one weight step, i.e. the vanilla loop run on
/// the surrogate loss.
enum class Algorithm { Vanilla, Free, Fast, FreeTrades, Trades };

std::string to_string(Algorithm algorithm);
Algorithm algorithm_from_string(const std::string& name);

struct TrainConfig {
  Algorithm algorithm = Algorithm::Vanilla;
  PerturbationSet set;
  StepSchedule schedule;
  double attack_lr = 0.0;   // alpha_delta, free-style ascent
  double fast_step = 0.0;   // single-step size of the fast attack
  int free_steps = 4;       // m
  int batch_size = 1;
  int total_iterations = 0; // T weight updates
  double trades_lambda = 1.0 / 6.0;
  AttackConfig inner_attack;
  std::uint64_t seed = 0;

  /// Defaults tied to the perturbation set: alpha_delta = eps, m = 4, fast
  /// step 7/8 eps (Linf) or eps/2 (L2), inner PGD 10 steps of eps/4.
  static TrainConfig with_defaults(Algorithm algorithm, const PerturbationSet& set);

  bool is_free_style() const noexcept {
    return algorithm == Algorithm::Free || algorithm == Algorithm::FreeTrades;
  }
  /// Checks the configuration against a dataset of n samples.
  void validate(std::size_t n) const;
};

struct TraceRecord {
  int step = 0;       // outer step t (equals the iteration for non-free algorithms)
  int iteration = 1;  // inner iteration i within the step, 1-based
  double alpha_w = 0.0;
  std::vector<std::size_t> batch;
  double grad_w_norm = 0.0;
  /// Minimum over the batch of ||grad_delta h|| at the point the algorithm used it.
  double min_grad_delta_norm = 0.0;
  double loss = 0.0;
};

/// One record per weight update (so T records), plus the endpoints.
struct TrainTrace {
  Algorithm algorithm = Algorithm::Vanilla;
  std::vector<TraceRecord> records;
  Vec initial_w;
  Vec final_w;
  /// Batch-level backward passes, the unit used to compare compute cost.
  std::uint64_t oracle_calls = 0;

  std::vector<double> min_grad_delta_series() const;
};

/// Writes one tab-separated line per record:
/// step, iteration, alpha_w, batch (comma-joined), grad_w_norm, min_grad_delta_norm, loss.
void write_trace_records(std::ostream& out, const TrainTrace& trace);

/// State around one weight update, handed to observers before the next update.
struct IterationView {
  int step = 0;
  int iteration = 1;
  int update_index = 0;  // 1..T
  double alpha_w = 0.0;
  std::span<const std::size_t> batch;
  const Vec& w_before;
  const Vec& w_after;
  std::span<const Vec> deltas_used;   // where the weight gradient was taken
  std::span<const Vec> deltas_after;  // free-style: after the ascent step
};

using IterationObserver = std::function<void(const IterationView&)>;

/// TRADES surrogate CE(f(x), y) + (1/lambda) KL(softmax f(x) || softmax f(x + delta)).
/// The consistency term is exactly zero at delta = 0. Uses the raw
/// cross-entropy even when the model is configured with the bounded wrapper.
class TradesLoss final : public LossOracle {
 public:
  TradesLoss(const SmoothModel& model, double lambda);

  std::size_t param_dim() const override { return model_.param_dim(); }
  std::size_t input_dim() const override { return model_.input_dim(); }
  double value(const Vec& w, const Vec& delta, const LabeledSample& sample) const override;
  Gradients gradients(const Vec& w, const Vec& delta, const LabeledSample& sample) const override;
  Vec initial_params(SeededRng& rng) const override { return model_.initial_params(rng); }

  double lambda() const noexcept { return lambda_; }

 private:
  SmoothModel model_;
  double lambda_;
};

double trades_surrogate_loss(const SmoothModel& model, const Vec& w, const Vec& delta,
                             const LabeledSample& sample, double lambda);

TrainTrace train_vanilla(const LossOracle& oracle, const Dataset& data, const TrainConfig& cfg,
                         const IterationObserver& observer = {});
TrainTrace train_free(const LossOracle& oracle, const Dataset& data, const TrainConfig& cfg,
                      const IterationObserver& observer = {});
TrainTrace train_fast(const LossOracle& oracle, const Dataset& data, const TrainConfig& cfg,
                      const IterationObserver& observer = {});
TrainTrace train_free_trades(const SmoothModel& model, const Dataset& data,
                             const TrainConfig& cfg, const IterationObserver& observer = {});

/// Minibatch index sequence the trainer draws for `cfg` on n samples: T
/// batches, or T/m for the free-style algorithms.
std::vector<std::vector<std::size_t>> batch_plan(const TrainConfig& cfg, std::size_t n);

/// Dispatches on cfg.algorithm; the TRADES variants wrap `model` in TradesLoss.
TrainTrace train(const SmoothModel& model, const Dataset& data, const TrainConfig& cfg,
                 const IterationObserver& observer = {});

}  // namespace advlab
