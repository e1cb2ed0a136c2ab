#include "advlab/trainers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

namespace advlab {

std::string to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::Constant: return "constant";
    case ScheduleKind::VanishingOverT: return "c_over_t";
    case ScheduleKind::VanishingOverMT: return "c_over_mt";
  }
  return "unknown";
}

ScheduleKind schedule_kind_from_string(const std::string& name) {
  if (name == "constant") return ScheduleKind::Constant;
  if (name == "c_over_t") return ScheduleKind::VanishingOverT;
  if (name == "c_over_mt") return ScheduleKind::VanishingOverMT;
  fail(ErrorKind::InvalidConfig, "unknown schedule '" + name + "'");
}

double step_size(const StepSchedule& schedule, int t) {
  require(t >= 1, ErrorKind::InvalidInput, "step index must be at least 1");
  require(schedule.c > 0.0, ErrorKind::InvalidConfig, "schedule constant must be positive");
  switch (schedule.kind) {
    case ScheduleKind::Constant: return schedule.c;
    case ScheduleKind::VanishingOverT: return schedule.c / t;
    case ScheduleKind::VanishingOverMT:
      require(schedule.m >= 1, ErrorKind::InvalidConfig, "schedule m must be positive");
      return schedule.c / (static_cast<double>(schedule.m) * t);
  }
  return schedule.c;
}

std::string to_string(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::Vanilla: return "vanilla";
    case Algorithm::Free: return "free";
    case Algorithm::Fast: return "fast";
    case Algorithm::FreeTrades: return "free_trades";
    case Algorithm::Trades: return "trades";
  }
  return "unknown";
}

Algorithm algorithm_from_string(const std::string& name) {
  if (name == "vanilla") return Algorithm::Vanilla;
  if (name == "free") return Algorithm::Free;
  if (name == "fast") return Algorithm::Fast;
  if (name == "free_trades" || name == "free-trades") return Algorithm::FreeTrades;
  if (name == "trades") return Algorithm::Trades;
  fail(ErrorKind::InvalidConfig, "unknown algorithm '" + name + "'");
}

TrainConfig TrainConfig::with_defaults(Algorithm algorithm, const PerturbationSet& set) {
  TrainConfig cfg;
  cfg.algorithm = algorithm;
  cfg.set = set;
  cfg.attack_lr = set.radius;
  cfg.free_steps = 4;
  cfg.fast_step = set.norm == NormKind::Linf ? 7.0 / 8.0 * set.radius : set.radius / 2.0;
  cfg.inner_attack = AttackConfig::evaluation_default(set.radius);
  return cfg;
}

void TrainConfig::validate(std::size_t n) const {
  set.validate();
  require(batch_size >= 1, ErrorKind::InvalidConfig, "batch size must be positive");
  require(static_cast<std::size_t>(batch_size) <= n, ErrorKind::InvalidConfig,
          "batch size " + std::to_string(batch_size) + " exceeds dataset size " +
              std::to_string(n));
  require(total_iterations >= 0, ErrorKind::InvalidConfig, "iteration count must be nonnegative");
  require(schedule.c > 0.0, ErrorKind::InvalidConfig, "schedule constant must be positive");
  require(attack_lr >= 0.0 && fast_step >= 0.0, ErrorKind::InvalidConfig,
          "attack step sizes must be nonnegative");
  if (is_free_style()) {
    require(free_steps >= 1, ErrorKind::InvalidConfig, "free steps m must be positive");
    require(total_iterations % free_steps == 0, ErrorKind::InvalidConfig,
            "total iterations must be divisible by the free step count");
  }
  if (algorithm == Algorithm::FreeTrades || algorithm == Algorithm::Trades) {
    require(trades_lambda > 0.0, ErrorKind::InvalidConfig, "TRADES lambda must be positive");
  }
  if (algorithm == Algorithm::Vanilla || algorithm == Algorithm::Trades) inner_attack.validate();
}

std::vector<double> TrainTrace::min_grad_delta_series() const {
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.min_grad_delta_norm);
  return out;
}

void write_trace_records(std::ostream& out, const TrainTrace& trace) {
  const auto old_precision = out.precision(17);
  for (const auto& r : trace.records) {
    out << r.step << '\t' << r.iteration << '\t' << r.alpha_w << '\t';
    for (std::size_t j = 0; j < r.batch.size(); ++j) out << (j ? "," : "") << r.batch[j];
    out << '\t' << r.grad_w_norm << '\t' << r.min_grad_delta_norm << '\t' << r.loss << '\n';
  }
  out.precision(old_precision);
}

// ---------------------------------------------------------------------------
// TRADES surrogate

TradesLoss::TradesLoss(const SmoothModel& model, double lambda)
    : model_(model.with_bounded_loss(false)), lambda_(lambda) {
  require(lambda > 0.0, ErrorKind::InvalidConfig, "TRADES lambda must be positive");
}

namespace {

struct TradesParts {
  Vec clean_logits;
  Vec adv_logits;
  Vec log_p;
  Vec log_q;
  double kl = 0.0;
};

TradesParts trades_parts(const SmoothModel& model, const Vec& w, const Vec& delta,
                         const LabeledSample& sample) {
  TradesParts p;
  p.clean_logits = model.logits(w, sample.x);
  p.adv_logits = model.logits(w, sample.x + delta);
  p.log_p = p.clean_logits.array() - log_sum_exp(p.clean_logits);
  p.log_q = p.adv_logits.array() - log_sum_exp(p.adv_logits);
  const Vec diff = p.log_p - p.log_q;
  p.kl = std::max(0.0, p.log_p.array().exp().matrix().dot(diff));
  return p;
}

}  // namespace

double TradesLoss::value(const Vec& w, const Vec& delta, const LabeledSample& sample) const {
  check_dims(w, delta, sample);
  const TradesParts p = trades_parts(model_, w, delta, sample);
  return cross_entropy(p.clean_logits, sample.y) + p.kl / lambda_;
}

Gradients TradesLoss::gradients(const Vec& w, const Vec& delta,
                                const LabeledSample& sample) const {
  check_dims(w, delta, sample);
  const TradesParts p = trades_parts(model_, w, delta, sample);
  const Vec prob_p = p.log_p.array().exp();
  const Vec prob_q = p.log_q.array().exp();
  // d KL / d clean logits = p * (log p - log q - KL); d KL / d adv logits = q - p
  Vec d_clean = softmax(p.clean_logits);
  d_clean[sample.y] -= 1.0;
  d_clean += (prob_p.array() * ((p.log_p - p.log_q).array() - p.kl)).matrix() / lambda_;
  const Vec d_adv = (prob_q - prob_p) / lambda_;
  Gradients clean = model_.backprop(w, sample.x, d_clean);
  Gradients adv = model_.backprop(w, sample.x + delta, d_adv);
  clean.w += adv.w;
  return {std::move(clean.w), std::move(adv.delta)};
}

double trades_surrogate_loss(const SmoothModel& model, const Vec& w, const Vec& delta,
                             const LabeledSample& sample, double lambda) {
  return TradesLoss(model, lambda).value(w, delta, sample);
}

// ---------------------------------------------------------------------------
// Training loops

namespace {

struct Streams {
  SeededRng init;
  SeededRng batch;
  SeededRng delta_init;
  SeededRng restart;

  explicit Streams(std::uint64_t seed)
      : init(seed, Stream::Init),
        batch(seed, Stream::Batch),
        delta_init(seed, Stream::DeltaInit),
        restart(seed, Stream::AttackRestart) {}
};

std::vector<std::size_t> draw_batch(SeededRng& rng, std::size_t n, int b) {
  std::vector<std::size_t> idx(static_cast<std::size_t>(b));
  for (auto& i : idx) i = rng.index(n);
  return idx;
}

void check_oracle(const LossOracle& oracle, const Dataset& data, const TrainConfig& cfg) {
  data.validate();
  cfg.validate(data.size());
  require(data.input_dim() == oracle.input_dim(), ErrorKind::InvalidConfig,
          "dataset dimension does not match the model");
  require(cfg.set.dim == oracle.input_dim(), ErrorKind::InvalidConfig,
          "perturbation set dimension does not match the model");
}

TrainTrace start_trace(const LossOracle& oracle, const TrainConfig& cfg, Streams& streams) {
  TrainTrace trace;
  trace.algorithm = cfg.algorithm;
  trace.initial_w = oracle.initial_params(streams.init);
  trace.records.reserve(static_cast<std::size_t>(cfg.total_iterations));
  return trace;
}

double min_norm(const std::vector<Vec>& grads) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& g : grads) m = std::min(m, g.norm());
  return m;
}

/// Weight gradient, losses and delta-gradient norms at (w, deltas) over a batch.
struct BatchEval {
  Vec mean_grad_w;
  std::vector<Vec> grad_delta;
  double mean_loss = 0.0;
};

BatchEval evaluate_batch(const LossOracle& oracle, const Vec& w, const std::vector<Vec>& deltas,
                         const Dataset& data, const std::vector<std::size_t>& batch) {
  BatchEval out{Vec::Zero(w.size()), {}, 0.0};
  out.grad_delta.reserve(batch.size());
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const auto& s = data[batch[j]];
    Gradients g = oracle.gradients(w, deltas[j], s);
    out.mean_grad_w += g.w;
    out.grad_delta.push_back(std::move(g.delta));
    out.mean_loss += oracle.value(w, deltas[j], s);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  out.mean_grad_w *= inv;
  out.mean_loss *= inv;
  return out;
}

Vec start_delta(const PerturbationSet& set, AttackInit init, SeededRng& rng) {
  return init == AttackInit::Zero ? Vec::Zero(static_cast<Eigen::Index>(set.dim))
                                  : set.sample_uniform(rng);
}

TrainTrace vanilla_loop(const LossOracle& oracle, const Dataset& data, const TrainConfig& cfg,
                        const IterationObserver& observer) {
  check_oracle(oracle, data, cfg);
  Streams streams(cfg.seed);
  TrainTrace trace = start_trace(oracle, cfg, streams);
  Vec w = trace.initial_w;
  const auto& atk = cfg.inner_attack;
  for (int t = 1; t <= cfg.total_iterations; ++t) {
    const auto batch = draw_batch(streams.batch, data.size(), cfg.batch_size);
    std::vector<Vec> deltas;
    deltas.reserve(batch.size());
    for (std::size_t j : batch) {
      const auto& s = data[j];
      // first restart starts from the shared perturbation-init stream
      Vec best = pgd_ascent(oracle, w, s, cfg.set, atk.steps, atk.step_size,
                            start_delta(cfg.set, atk.init, streams.delta_init));
      if (atk.restarts > 1) {
        double best_loss = oracle.value(w, best, s);
        for (int r = 1; r < atk.restarts; ++r) {
          Vec cand = pgd_ascent(oracle, w, s, cfg.set, atk.steps, atk.step_size,
                                start_delta(cfg.set, atk.init, streams.restart));
          const double loss = oracle.value(w, cand, s);
          if (loss > best_loss) {
            best_loss = loss;
            best = std::move(cand);
          }
        }
      }
      deltas.push_back(std::move(best));
    }
    const double alpha = step_size(cfg.schedule, t);
    const BatchEval ev = evaluate_batch(oracle, w, deltas, data, batch);
    Vec w_next = w - alpha * ev.mean_grad_w;
    trace.oracle_calls += static_cast<std::uint64_t>(atk.restarts * atk.steps + 1);
    trace.records.push_back(
        {t, 1, alpha, batch, ev.mean_grad_w.norm(), min_norm(ev.grad_delta), ev.mean_loss});
    if (observer) observer({t, 1, t, alpha, batch, w, w_next, deltas, deltas});
    w = std::move(w_next);
  }
  trace.final_w = std::move(w);
  return trace;
}

TrainTrace free_loop(const LossOracle& oracle, const Dataset& data, const TrainConfig& cfg,
                     const IterationObserver& observer) {
  check_oracle(oracle, data, cfg);
  Streams streams(cfg.seed);
  TrainTrace trace = start_trace(oracle, cfg, streams);
  Vec w = trace.initial_w;
  const int m = cfg.free_steps;
  const int outer = cfg.total_iterations / m;
  int update = 0;
  for (int t = 1; t <= outer; ++t) {
    const auto batch = draw_batch(streams.batch, data.size(), cfg.batch_size);
    std::vector<Vec> deltas;
    deltas.reserve(batch.size());
    for (std::size_t j = 0; j < batch.size(); ++j) {
      deltas.push_back(cfg.set.sample_uniform(streams.delta_init));
    }
    const double alpha = step_size(cfg.schedule, t);
    for (int i = 1; i <= m; ++i) {
      // both gradients come from the same evaluation at the pre-update (w, delta)
      const BatchEval ev = evaluate_batch(oracle, w, deltas, data, batch);
      Vec w_next = w - alpha * ev.mean_grad_w;
      std::vector<Vec> deltas_next;
      deltas_next.reserve(deltas.size());
      for (std::size_t j = 0; j < deltas.size(); ++j) {
        deltas_next.push_back(
            projected_ascent_step(deltas[j], ev.grad_delta[j], cfg.set, cfg.attack_lr));
      }
      ++update;
      trace.oracle_calls += 1;
      trace.records.push_back(
          {t, i, alpha, batch, ev.mean_grad_w.norm(), min_norm(ev.grad_delta), ev.mean_loss});
      if (observer) observer({t, i, update, alpha, batch, w, w_next, deltas, deltas_next});
      w = std::move(w_next);
      deltas = std::move(deltas_next);
    }
  }
  trace.final_w = std::move(w);
  return trace;
}

TrainTrace fast_loop(const LossOracle& oracle, const Dataset& data, const TrainConfig& cfg,
                     const IterationObserver& observer) {
  check_oracle(oracle, data, cfg);
  Streams streams(cfg.seed);
  TrainTrace trace = start_trace(oracle, cfg, streams);
  Vec w = trace.initial_w;
  for (int t = 1; t <= cfg.total_iterations; ++t) {
    const auto batch = draw_batch(streams.batch, data.size(), cfg.batch_size);
    std::vector<Vec> deltas;
    deltas.reserve(batch.size());
    double min_start_grad = std::numeric_limits<double>::infinity();
    for (std::size_t j : batch) {
      const auto& s = data[j];
      const Vec start = cfg.set.sample_uniform(streams.delta_init);
      const Vec g = oracle.grad_delta(w, start, s);
      min_start_grad = std::min(min_start_grad, g.norm());
      deltas.push_back(projected_ascent_step(start, g, cfg.set, cfg.fast_step));
    }
    const double alpha = step_size(cfg.schedule, t);
    const BatchEval ev = evaluate_batch(oracle, w, deltas, data, batch);
    Vec w_next = w - alpha * ev.mean_grad_w;
    trace.oracle_calls += 2;
    trace.records.push_back(
        {t, 1, alpha, batch, ev.mean_grad_w.norm(), min_start_grad, ev.mean_loss});
    if (observer) observer({t, 1, t, alpha, batch, w, w_next, deltas, deltas});
    w = std::move(w_next);
  }
  trace.final_w = std::move(w);
  return trace;
}

}  // namespace

TrainTrace train_vanilla(const LossOracle& oracle, const Dataset& data, const TrainConfig& cfg,
                         const IterationObserver& observer) {
  require(cfg.algorithm == Algorithm::Vanilla || cfg.algorithm == Algorithm::Trades,
          ErrorKind::InvalidConfig, "train_vanilla needs a vanilla-style configuration");
  return vanilla_loop(oracle, data, cfg, observer);
}

TrainTrace train_free(const LossOracle& oracle, const Dataset& data, const TrainConfig& cfg,
                      const IterationObserver& observer) {
  require(cfg.is_free_style(), ErrorKind::InvalidConfig,
          "train_free needs a free-style configuration");
  return free_loop(oracle, data, cfg, observer);
}

TrainTrace train_fast(const LossOracle& oracle, const Dataset& data, const TrainConfig& cfg,
                      const IterationObserver& observer) {
  require(cfg.algorithm == Algorithm::Fast, ErrorKind::InvalidConfig,
          "train_fast needs a fast configuration");
  return fast_loop(oracle, data, cfg, observer);
}

TrainTrace train_free_trades(const SmoothModel& model, const Dataset& data,
                             const TrainConfig& cfg, const IterationObserver& observer) {
  require(cfg.algorithm == Algorithm::FreeTrades, ErrorKind::InvalidConfig,
          "train_free_trades needs a FreeTrades configuration");
  return free_loop(TradesLoss(model, cfg.trades_lambda), data, cfg, observer);
}

std::vector<std::vector<std::size_t>> batch_plan(const TrainConfig& cfg, std::size_t n) {
  cfg.validate(n);
  SeededRng rng(cfg.seed, Stream::Batch);
  const int count = cfg.is_free_style() ? cfg.total_iterations / cfg.free_steps
                                        : cfg.total_iterations;
  std::vector<std::vector<std::size_t>> plan;
  plan.reserve(static_cast<std::size_t>(count));
  for (int t = 0; t < count; ++t) plan.push_back(draw_batch(rng, n, cfg.batch_size));
  return plan;
}

TrainTrace train(const SmoothModel& model, const Dataset& data, const TrainConfig& cfg,
                 const IterationObserver& observer) {
  switch (cfg.algorithm) {
    case Algorithm::Vanilla: return train_vanilla(model, data, cfg, observer);
    case Algorithm::Free: return train_free(model, data, cfg, observer);
    case Algorithm::Fast: return train_fast(model, data, cfg, observer);
    case Algorithm::FreeTrades: return train_free_trades(model, data, cfg, observer);
    case Algorithm::Trades: {
      require(cfg.trades_lambda > 0.0, ErrorKind::InvalidConfig, "TRADES lambda must be positive");
      return train_vanilla(TradesLoss(model, cfg.trades_lambda), data, cfg, observer);
    }
  }
  fail(ErrorKind::InvalidConfig, "unknown algorithm");
}

}  // namespace advlab
