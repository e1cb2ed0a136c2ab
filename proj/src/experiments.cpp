#include "advlab/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "advlab/parallel.hpp"

namespace advlab {

std::string to_string(SyntheticKind kind) {
  switch (kind) {
    case SyntheticKind::TwoGaussians: return "two_gaussians";
    case SyntheticKind::XorClusters: return "xor_clusters";
    case SyntheticKind::Spiral2d: return "spiral2d";
  }
  return "unknown";
}

SyntheticKind synthetic_kind_from_string(const std::string& name) {
  if (name == "two_gaussians") return SyntheticKind::TwoGaussians;
  if (name == "xor_clusters") return SyntheticKind::XorClusters;
  if (name == "spiral2d") return SyntheticKind::Spiral2d;
  fail(ErrorKind::InvalidConfig, "unknown synthetic data kind '" + name + "'");
}

namespace {

LabeledSample draw_sample(const SyntheticSpec& spec, int y, SeededRng& rng) {
  const auto d = static_cast<Eigen::Index>(spec.dim);
  Vec x = Vec::Zero(d);
  switch (spec.kind) {
    case SyntheticKind::TwoGaussians:
      x.setConstant((2.0 * y - 1.0) / std::sqrt(static_cast<double>(d)));
      break;
    case SyntheticKind::XorClusters: {
      const double s1 = rng.uniform() < 0.5 ? -1.0 : 1.0;
      const double s2 = y == 0 ? s1 : -s1;
      x[0] = s1 / std::numbers::sqrt2;
      x[1] = s2 / std::numbers::sqrt2;
      break;
    }
    case SyntheticKind::Spiral2d: {
      const double t = rng.uniform();
      const double r = 0.2 + 0.8 * t;
      const double theta = 3.0 * std::numbers::pi * t + std::numbers::pi * y;
      x[0] = r * std::cos(theta);
      x[1] = r * std::sin(theta);
      break;
    }
  }
  x += gaussian_vector(rng, spec.dim, spec.noise);
  return {std::move(x), y};
}

Dataset draw_dataset(const SyntheticSpec& spec, std::size_t n, SeededRng rng) {
  Dataset out;
  out.class_count = 2;
  out.samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.samples.push_back(draw_sample(spec, static_cast<int>(i % 2), rng));
  return out;
}

}  // namespace

SyntheticData make_synthetic(const SyntheticSpec& spec) {
  require(spec.n_train >= 2 && spec.n_test >= 2, ErrorKind::InvalidInput,
          "synthetic datasets need at least two samples");
  require(spec.dim >= 1, ErrorKind::InvalidDimension, "synthetic dimension must be positive");
  require(spec.kind == SyntheticKind::TwoGaussians || spec.dim >= 2, ErrorKind::InvalidDimension,
          to_string(spec.kind) + " needs at least two dimensions");
  require(spec.noise >= 0.0, ErrorKind::InvalidInput, "noise must be nonnegative");
  const SeededRng base(spec.seed, Stream::Data);
  return {draw_dataset(spec, spec.n_train, base.split(1)),
          draw_dataset(spec, spec.n_test, base.split(2))};
}

// ---------------------------------------------------------------------------
// Configuration

int oracle_calls_per_update(const TrainConfig& cfg) {
  switch (cfg.algorithm) {
    case Algorithm::Vanilla:
    case Algorithm::Trades: return cfg.inner_attack.restarts * cfg.inner_attack.steps + 1;
    case Algorithm::Free:
    case Algorithm::FreeTrades: return 1;
    case Algorithm::Fast: return 2;
  }
  return 1;
}

int ExperimentConfig::effective_iterations() const {
  if (!matched_compute) return train.total_iterations;
  int t = train.total_iterations / oracle_calls_per_update(train);
  if (train.is_free_style()) t -= t % std::max(train.free_steps, 1);
  return t;
}

int ExperimentConfig::effective_checkpoint_every() const {
  if (checkpoint_every > 0) return checkpoint_every;
  return std::max(1, static_cast<int>(data.n_train) / std::max(train.batch_size, 1));
}

void ExperimentConfig::validate() const {
  require(trials >= 1, ErrorKind::InvalidConfig, "trials must be positive");
  require(checkpoint_every >= 0, ErrorKind::InvalidConfig, "checkpoint cadence must be nonnegative");
  require(data.n_train >= 2 && data.n_test >= 2, ErrorKind::InvalidConfig,
          "synthetic datasets need at least two samples");
  require(model.input_dim == data.dim, ErrorKind::InvalidConfig,
          "model input dimension does not match the data dimension");
  require(train.set.dim == data.dim, ErrorKind::InvalidConfig,
          "perturbation set dimension does not match the data dimension");
  require(model.class_count == 2, ErrorKind::InvalidConfig, "synthetic problems are binary");
  require(bound_probes >= 2 || !attach_bounds, ErrorKind::InvalidConfig,
          "bound estimation needs at least two probes");
  TrainConfig t = train;
  t.total_iterations = effective_iterations();
  require(t.total_iterations >= 1, ErrorKind::InvalidConfig,
          "the configuration performs no weight updates");
  t.validate(data.n_train);
  eval_attack.validate();
}

MeanSd summarize(const std::vector<double>& values) {
  MeanSd s;
  s.count = values.size();
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(s.count);
  if (s.count > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(s.count - 1));
    s.se = s.sd / std::sqrt(static_cast<double>(s.count));
  }
  return s;
}

std::vector<Checkpoint> GapReport::final_checkpoints() const {
  std::vector<Checkpoint> out;
  for (std::size_t i = 0; i < checkpoints.size(); ++i) {
    if (i + 1 == checkpoints.size() || checkpoints[i + 1].trial != checkpoints[i].trial) {
      out.push_back(checkpoints[i]);
    }
  }
  return out;
}

MeanSd GapReport::acc_gap() const {
  std::vector<double> v;
  for (const auto& c : final_checkpoints()) v.push_back(c.acc_gap());
  return summarize(v);
}

MeanSd GapReport::risk_gap() const {
  std::vector<double> v;
  for (const auto& c : final_checkpoints()) v.push_back(c.risk_gap());
  return summarize(v);
}

std::vector<int> GapReport::iterations() const {
  std::vector<int> out;
  for (const auto& c : checkpoints) {
    if (c.trial != checkpoints.front().trial) break;
    out.push_back(c.iteration);
  }
  return out;
}

bool GapReport::psi_degenerate() const {
  return std::any_of(psi_min_norm.begin(), psi_min_norm.end(),
                     [](double v) { return !(v > 0.0); });
}

// ---------------------------------------------------------------------------
// Gap experiment

namespace {

struct TrialResult {
  std::vector<Checkpoint> checkpoints;
  std::vector<Vec> weights;  // at each checkpoint
  TrainTrace trace;
};

TrainConfig trial_train_config(const ExperimentConfig& cfg, int trial) {
  TrainConfig t = cfg.train;
  t.seed = mix_seed(cfg.train.seed, static_cast<std::uint64_t>(trial));
  t.total_iterations = cfg.effective_iterations();
  return t;
}

/// Evaluation randomness depends only on (eval seed, trial, iteration), so
/// every algorithm faces the identical adversary.
SeededRng evaluation_rng(const ExperimentConfig& cfg, int trial, int iteration, int split) {
  return SeededRng(mix_seed(cfg.eval_seed, static_cast<std::uint64_t>(trial)), Stream::Evaluation)
      .split(2 * static_cast<std::uint64_t>(iteration) + static_cast<std::uint64_t>(split));
}

TrialResult run_trial(const ExperimentConfig& cfg, const SyntheticData& data, int trial) {
  const SmoothModel model(cfg.model);
  const TrainConfig tc = trial_train_config(cfg, trial);
  const int every = cfg.effective_checkpoint_every();
  TrialResult out;
  std::vector<int> iters;
  out.trace = train(model, data.train, tc, [&](const IterationView& v) {
    if (v.update_index % every == 0 || v.update_index == tc.total_iterations) {
      iters.push_back(v.update_index);
      out.weights.push_back(v.w_after);
    }
  });
  const auto calls = static_cast<std::uint64_t>(oracle_calls_per_update(tc));
  for (std::size_t i = 0; i < iters.size(); ++i) {
    const Vec& w = out.weights[i];
    Checkpoint c;
    c.trial = trial;
    c.iteration = iters[i];
    SeededRng r_train = evaluation_rng(cfg, trial, iters[i], 0);
    SeededRng r_test = evaluation_rng(cfg, trial, iters[i], 1);
    const RobustRisk tr = empirical_robust_risk(model, w, data.train, tc.set, cfg.eval_attack, r_train);
    const RobustRisk te = empirical_robust_risk(model, w, data.test, tc.set, cfg.eval_attack, r_test);
    c.train_acc = tr.robust_accuracy;
    c.test_acc = te.robust_accuracy;
    c.train_risk = tr.risk;
    c.test_risk = te.risk;
    c.train_clean_acc = empirical_clean_risk(model, w, data.train).robust_accuracy;
    c.test_clean_acc = empirical_clean_risk(model, w, data.test).robust_accuracy;
    c.oracle_calls = calls * static_cast<std::uint64_t>(iters[i]);
    out.checkpoints.push_back(c);
  }
  return out;
}

void attach_bounds(GapReport& report, const ExperimentConfig& cfg, const SyntheticData& data,
                   const std::vector<TrialResult>& trials) {
  const SmoothModel model(cfg.model);
  const TrainConfig& tc = cfg.train;
  const bool trades = tc.algorithm == Algorithm::Trades || tc.algorithm == Algorithm::FreeTrades;
  const TradesLoss trades_loss(model, tc.trades_lambda > 0.0 ? tc.trades_lambda : 1.0);
  const LossOracle& oracle = trades ? static_cast<const LossOracle&>(trades_loss) : model;

  std::vector<Vec> anchors{trials.front().trace.initial_w};
  for (const auto& w : trials.front().weights) anchors.push_back(w);
  const ProbeRegion region(std::move(anchors), 0.01, tc.set, data.train.samples);
  SeededRng rng(tc.seed, Stream::Probe);
  const LipschitzEstimate lip = estimate_lipschitz(oracle, region, cfg.bound_probes, rng);
  ConstantEstimates k;
  k.L = lip.L;
  k.L_w = lip.L_w;
  k.lipschitz_probes = lip.probes;
  k.beta = estimate_smoothness(oracle, region, cfg.bound_probes, 1e-3, rng);
  k.smoothness_probes = static_cast<std::size_t>(cfg.bound_probes);
  std::vector<const TrainTrace*> traces;
  for (const auto& t : trials) traces.push_back(&t.trace);
  const PsiEstimate psi = estimate_psi(traces);
  k.psi = psi.psi;
  k.psi_samples = psi.min_norm_series.size();
  k.region = region.describe();
  report.constants = k;

  if (!(k.beta > 0.0)) return;
  BoundInputs in;
  in.n = cfg.data.n_train;
  in.b = static_cast<std::size_t>(tc.batch_size);
  in.T = static_cast<std::size_t>(cfg.effective_iterations());
  in.m = tc.is_free_style() ? static_cast<std::size_t>(tc.free_steps) : 1;
  in.c = tc.schedule.c;
  in.eps = tc.set.radius;
  in.alpha_delta = tc.attack_lr;
  in.fast_step = tc.fast_step;
  in.constants = k;
  BoundReport bound = bound_for(tc.algorithm, in);
  bound.attach_gap(report.risk_gap().mean);
  report.bound = bound;
  report.bound_schedule_vanishing = tc.schedule.vanishing();
}

}  // namespace

GapReport run_gap_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const SyntheticData data = make_synthetic(cfg.data);
  const auto trials = parallel_map(static_cast<std::size_t>(cfg.trials), [&](std::size_t k) {
    return run_trial(cfg, data, static_cast<int>(k));
  });
  GapReport report;
  report.config = cfg;
  for (const auto& t : trials) {
    report.checkpoints.insert(report.checkpoints.end(), t.checkpoints.begin(), t.checkpoints.end());
    const auto series = t.trace.min_grad_delta_series();
    report.psi_min_norm.push_back(series.empty() ? 0.0
                                                 : *std::min_element(series.begin(), series.end()));
    report.min_norm_series.push_back(series);
    report.oracle_calls.push_back(t.trace.oracle_calls);
  }
  if (cfg.attach_bounds) attach_bounds(report, cfg, data, trials);
  return report;
}

// ---------------------------------------------------------------------------
// Gap versus n

namespace {

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

double spearman_correlation(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size() && x.size() >= 2, ErrorKind::InvalidInput,
          "rank correlation needs two equal-length series of at least two points");
  return pearson(ranks(x), ranks(y));
}

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size() && x.size() >= 2, ErrorKind::InvalidInput,
          "line fit needs at least two points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  require(sxx > 0.0, ErrorKind::InvalidInput, "line fit needs distinct x values");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  if (x.size() > 2) {
    double ssr = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double e = y[i] - (f.intercept + f.slope * x[i]);
      ssr += e * e;
    }
    f.slope_se = std::sqrt(ssr / (n - 2.0) / sxx);
  } else {
    f.slope_se = std::numeric_limits<double>::quiet_NaN();
  }
  return f;
}

GapTrend gap_trend(const std::vector<GapReport>& reports) {
  GapTrend trend;
  for (const auto& r : reports) {
    trend.n_values.push_back(static_cast<double>(r.config.data.n_train));
    trend.mean_gaps.push_back(r.acc_gap().mean);
  }
  trend.slope = std::numeric_limits<double>::quiet_NaN();
  trend.slope_se = std::numeric_limits<double>::quiet_NaN();
  if (reports.size() < 2) return trend;
  trend.spearman = spearman_correlation(trend.n_values, trend.mean_gaps);
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    if (trend.mean_gaps[i] > 0.0) {
      lx.push_back(std::log(trend.n_values[i]));
      ly.push_back(std::log(trend.mean_gaps[i]));
    }
  }
  trend.fitted_points = lx.size();
  const bool distinct = lx.size() >= 2 && std::adjacent_find(lx.begin(), lx.end(),
                                                             std::not_equal_to<>()) != lx.end();
  if (distinct) {
    const LineFit f = fit_line(lx, ly);
    trend.slope = f.slope;
    trend.slope_se = f.slope_se;
  }
  return trend;
}

VsNResult run_vs_n_experiment(const ExperimentConfig& base,
                              const std::vector<std::size_t>& n_values) {
  require(!n_values.empty(), ErrorKind::InvalidConfig, "no sample sizes given");
  require(std::is_sorted(n_values.begin(), n_values.end()), ErrorKind::InvalidConfig,
          "sample sizes must be increasing");
  for (std::size_t n : n_values) {
    require(n >= static_cast<std::size_t>(std::max(base.train.batch_size, 2)),
            ErrorKind::InvalidConfig,
            "sample size " + std::to_string(n) + " is smaller than the batch size");
  }
  VsNResult out;
  for (std::size_t n : n_values) {
    ExperimentConfig cfg = base;
    cfg.data.n_train = n;
    out.reports.push_back(run_gap_experiment(cfg));
  }
  out.trend = gap_trend(out.reports);
  return out;
}

// ---------------------------------------------------------------------------
// Transfer attacks

namespace {

Vec train_final(const ExperimentConfig& cfg, const SyntheticData& data) {
  const SmoothModel model(cfg.model);
  return train(model, data.train, trial_train_config(cfg, 0)).final_w;
}

bool same_data(const SyntheticSpec& a, const SyntheticSpec& b) {
  return a.kind == b.kind && a.n_train == b.n_train && a.n_test == b.n_test && a.dim == b.dim &&
         a.noise == b.noise && a.seed == b.seed;
}

}  // namespace

TransferResult run_transfer_experiment(const ExperimentConfig& cfg_a,
                                       const ExperimentConfig& cfg_b) {
  require(cfg_a.model.input_dim == cfg_b.model.input_dim &&
              cfg_a.model.class_count == cfg_b.model.class_count,
          ErrorKind::InvalidConfig, "transfer models must share input dimension and classes");
  require(same_data(cfg_a.data, cfg_b.data), ErrorKind::InvalidConfig,
          "transfer experiments need one shared data specification");
  require(cfg_a.train.set.norm == cfg_b.train.set.norm &&
              cfg_a.train.set.radius == cfg_b.train.set.radius,
          ErrorKind::InvalidConfig, "transfer experiments need one shared perturbation set");
  cfg_a.validate();
  cfg_b.validate();
  const SyntheticData data = make_synthetic(cfg_a.data);
  const auto weights = parallel_map(2, [&](std::size_t i) {
    return train_final(i == 0 ? cfg_a : cfg_b, data);
  });
  const std::array<SmoothModel, 2> models{SmoothModel(cfg_a.model), SmoothModel(cfg_b.model)};
  const PerturbationSet& set = cfg_a.train.set;

  TransferResult out;
  out.w_a = weights[0];
  out.w_b = weights[1];
  std::array<std::array<std::size_t, 2>, 2> correct{};
  SeededRng rng(cfg_a.eval_seed, Stream::Evaluation);
  for (const auto& s : data.test.samples) {
    SeededRng draws = rng;
    for (std::size_t src = 0; src < 2; ++src) {
      SeededRng r = draws;
      const Vec delta = pgd_attack(models[src], weights[src], s, set, cfg_a.eval_attack, r);
      if (src == 1) rng = r;
      for (std::size_t tgt = 0; tgt < 2; ++tgt) {
        correct[src][tgt] += models[tgt].predict(weights[tgt], s.x + delta) == s.y;
      }
    }
  }
  const double n = static_cast<double>(data.test.size());
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 2; ++j) out.accuracy[i][j] = static_cast<double>(correct[i][j]) / n;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Free-TRADES comparison

std::vector<double> PairedGapReport::gap_differences() const {
  const auto a = sequential.final_checkpoints();
  const auto b = free_style.final_checkpoints();
  std::vector<double> out;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
    out.push_back(a[i].acc_gap() - b[i].acc_gap());
  }
  return out;
}

PairedGapReport run_free_trades_comparison(const ExperimentConfig& cfg_trades,
                                           const ExperimentConfig& cfg_free_trades) {
  require(cfg_trades.train.algorithm == Algorithm::Trades, ErrorKind::InvalidConfig,
          "the sequential arm must use the TRADES algorithm");
  require(cfg_free_trades.train.algorithm == Algorithm::FreeTrades, ErrorKind::InvalidConfig,
          "the simultaneous arm must use the Free-TRADES algorithm");
  return {run_gap_experiment(cfg_trades), run_gap_experiment(cfg_free_trades)};
}

}  // namespace advlab
