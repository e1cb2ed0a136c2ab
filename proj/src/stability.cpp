#include "advlab/stability.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace advlab {

NeighborPair make_neighbor(const Dataset& dataset, std::size_t index,
                           const LabeledSample& replacement) {
  dataset.validate();
  require(index < dataset.size(), ErrorKind::InvalidInput,
          "neighbor index " + std::to_string(index) + " out of range for n = " +
              std::to_string(dataset.size()));
  require(static_cast<std::size_t>(replacement.x.size()) == dataset.input_dim(),
          ErrorKind::InvalidInput, "replacement sample has the wrong dimension");
  require(replacement.y >= 0 && static_cast<std::size_t>(replacement.y) < dataset.class_count,
          ErrorKind::InvalidInput, "replacement label out of range");
  NeighborPair pair{dataset, dataset, index, replacement};
  pair.s_prime.samples[index] = replacement;
  return pair;
}

double StabilityTrace::final_distance() const {
  return records.empty() ? 0.0 : records.back().d_w_after;
}

bool StabilityTrace::pre_encounter_zero() const {
  for (const auto& r : records) {
    if (first_encounter_step && r.step >= *first_encounter_step) break;
    if (r.d_w_after != 0.0 || r.d_w_before != 0.0) return false;
  }
  return true;
}

namespace {

struct Snapshot {
  Vec w_before;
  Vec w_after;
  std::vector<Vec> deltas_used;
  std::vector<Vec> deltas_after;
};

double mean_delta_distance(std::span<const Vec> a, const std::vector<Vec>& b) {
  if (a.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) sum += distance(a[j], b[j]);
  return sum / static_cast<double>(a.size());
}

template <class Train>
StabilityTrace run_coupled(const NeighborPair& pair, const TrainConfig& cfg, Train&& train) {
  require(pair.s.size() == pair.s_prime.size(), ErrorKind::InvalidInput,
          "neighboring datasets must have equal size");
  StabilityTrace out;
  out.algorithm = cfg.algorithm;
  out.batch_size = cfg.batch_size;
  out.free_steps = cfg.is_free_style() ? cfg.free_steps : 1;

  std::vector<Snapshot> snaps;
  snaps.reserve(static_cast<std::size_t>(cfg.total_iterations));
  out.trace_s = train(pair.s, [&](const IterationView& v) {
    snaps.push_back({v.w_before, v.w_after, {v.deltas_used.begin(), v.deltas_used.end()},
                     {v.deltas_after.begin(), v.deltas_after.end()}});
  });

  out.records.reserve(snaps.size());
  out.trace_s_prime = train(pair.s_prime, [&](const IterationView& v) {
    const Snapshot& a = snaps.at(static_cast<std::size_t>(v.update_index - 1));
    StabilityRecord r;
    r.step = v.step;
    r.iteration = v.iteration;
    r.update_index = v.update_index;
    r.alpha_w = v.alpha_w;
    r.encounter_count = static_cast<int>(
        std::count(v.batch.begin(), v.batch.end(), pair.differing_index));
    r.d_w_before = distance(a.w_before, v.w_before);
    r.d_w_after = distance(a.w_after, v.w_after);
    r.d_delta_before = mean_delta_distance(v.deltas_used, a.deltas_used);
    r.d_delta_after = mean_delta_distance(v.deltas_after, a.deltas_after);
    if (r.in_batch() && !out.first_encounter_step) out.first_encounter_step = r.step;
    if (r.d_w_after > 0.0 && !out.first_divergence_update) {
      out.first_divergence_update = r.update_index;
    }
    out.records.push_back(r);
  });
  return out;
}

}  // namespace

StabilityTrace coupled_run(const LossOracle& oracle, const NeighborPair& pair,
                           const TrainConfig& cfg) {
  return run_coupled(pair, cfg, [&](const Dataset& data, const IterationObserver& obs) {
    switch (cfg.algorithm) {
      case Algorithm::Vanilla:
      case Algorithm::Trades: return train_vanilla(oracle, data, cfg, obs);
      case Algorithm::Free:
      case Algorithm::FreeTrades: return train_free(oracle, data, cfg, obs);
      case Algorithm::Fast: return train_fast(oracle, data, cfg, obs);
    }
    fail(ErrorKind::InvalidConfig, "unknown algorithm");
  });
}

StabilityTrace coupled_run(const SmoothModel& model, const NeighborPair& pair,
                           const TrainConfig& cfg) {
  return run_coupled(pair, cfg, [&](const Dataset& data, const IterationObserver& obs) {
    return train(model, data, cfg, obs);
  });
}

void write_stability_records(std::ostream& out, const StabilityTrace& trace) {
  const auto old_precision = out.precision(17);
  for (const auto& r : trace.records) {
    out << r.step << '\t' << r.iteration << '\t' << r.alpha_w << '\t' << r.encounter_count
        << '\t' << r.d_w_before << '\t' << r.d_w_after << '\t' << r.d_delta_before << '\t'
        << r.d_delta_after << '\n';
  }
  out.precision(old_precision);
}

// ---------------------------------------------------------------------------
// Growth verification

void GrowthReport::merge(const GrowthReport& other) {
  checks_out += other.checks_out;
  violations_out += other.violations_out;
  checks_in += other.checks_in;
  violations_in += other.violations_in;
  stepwise_checks += other.stepwise_checks;
  stepwise_violations += other.stepwise_violations;
  max_ratio_out = std::max(max_ratio_out, other.max_ratio_out);
  max_ratio_in = std::max(max_ratio_in, other.max_ratio_in);
  max_ratio_stepwise = std::max(max_ratio_stepwise, other.max_ratio_stepwise);
  checks.insert(checks.end(), other.checks.begin(), other.checks.end());
}

double perturbation_diameter(const PerturbationSet& set) {
  const double scale = set.norm == NormKind::L2 ? 1.0 : std::sqrt(static_cast<double>(set.dim));
  return 2.0 * set.radius * scale;
}

namespace {

constexpr double kRelTol = 1e-9;
constexpr double kAbsTol = 1e-13;

void check_constants(const GrowthConstants& k) {
  // zero is accepted so that a falsification control can switch a term off
  require(k.beta >= 0.0 && k.L >= 0.0 && k.psi >= 0.0 && std::isfinite(k.beta) &&
              std::isfinite(k.L) && std::isfinite(k.psi),
          ErrorKind::InvalidInput, "growth constants must be finite and nonnegative");
}

double ratio_of(double lhs, double rhs) {
  if (rhs > 0.0) return lhs / rhs;
  return lhs > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
}

void record(GrowthReport& rep, int update, int row, bool in_batch, double lhs, double rhs) {
  const bool bad = lhs > rhs * (1.0 + kRelTol) + kAbsTol;
  const double ratio = ratio_of(lhs, rhs);
  if (row == 2) {
    ++rep.stepwise_checks;
    rep.stepwise_violations += bad;
    rep.max_ratio_stepwise = std::max(rep.max_ratio_stepwise, ratio);
  } else if (in_batch) {
    ++rep.checks_in;
    rep.violations_in += bad;
    rep.max_ratio_in = std::max(rep.max_ratio_in, ratio);
  } else {
    ++rep.checks_out;
    rep.violations_out += bad;
    rep.max_ratio_out = std::max(rep.max_ratio_out, ratio);
  }
  rep.checks.push_back({update, row, in_batch, lhs, rhs, bad});
}

void require_algorithm(const StabilityTrace& trace, bool ok, const char* what) {
  require(ok, ErrorKind::InvalidTrace, std::string("trace does not come from a ") + what + " run");
  require(!trace.records.empty() || trace.trace_s.records.empty(), ErrorKind::InvalidTrace,
          "trace is missing its records");
}

}  // namespace

GrowthReport verify_growth_vanilla(const StabilityTrace& trace, const GrowthConstants& k,
                                   const PerturbationSet& set) {
  check_constants(k);
  require_algorithm(trace,
                    trace.algorithm == Algorithm::Vanilla || trace.algorithm == Algorithm::Trades,
                    "vanilla-style");
  const double diam = perturbation_diameter(set);
  const double b = trace.batch_size;
  GrowthReport rep;
  for (const auto& r : trace.records) {
    const double a = r.alpha_w;
    const double absent = (1.0 + a * k.beta) * r.d_w_before + diam * a * k.beta;
    double rhs = absent;
    if (r.in_batch()) {
      const double kb = r.encounter_count / b;
      rhs = (1.0 - kb) * absent + kb * (r.d_w_before + 2.0 * a * k.L);
    }
    record(rep, r.update_index, 0, r.in_batch(), r.d_w_after, rhs);
  }
  return rep;
}

GrowthReport verify_growth_free(const StabilityTrace& trace, const GrowthConstants& k,
                                const PerturbationSet& set, double alpha_delta) {
  check_constants(k);
  require(alpha_delta >= 0.0, ErrorKind::InvalidInput, "alpha_delta must be nonnegative");
  require_algorithm(trace,
                    trace.algorithm == Algorithm::Free || trace.algorithm == Algorithm::FreeTrades,
                    "free-style");
  const int m = trace.free_steps;
  require(m >= 1 && trace.records.size() % static_cast<std::size_t>(m) == 0,
          ErrorKind::InvalidTrace, "free trace lacks per-iteration records");
  const double eps = set.radius;
  const double b = trace.batch_size;
  GrowthReport rep;
  for (std::size_t start = 0; start < trace.records.size(); start += static_cast<std::size_t>(m)) {
    for (int i = 0; i < m; ++i) {
      const auto& r = trace.records[start + static_cast<std::size_t>(i)];
      require(r.iteration == i + 1, ErrorKind::InvalidTrace,
              "free trace records are not per-iteration");
      const double a = r.alpha_w * k.beta;
      const double ad = alpha_delta * eps * k.psi * k.beta;
      const double kb = r.encounter_count / b;
      const double rhs_w = (1.0 + a) * r.d_w_before + a * r.d_delta_before +
                           kb * 2.0 * r.alpha_w * k.L;
      const double rhs_d = ad * r.d_w_before + (1.0 + ad) * r.d_delta_before +
                           kb * 2.0 * alpha_delta * eps * k.psi * k.L;
      record(rep, r.update_index, 0, r.in_batch(), r.d_w_after, rhs_w);
      record(rep, r.update_index, 1, r.in_batch(), r.d_delta_after, rhs_d);
    }
    // step-wise: d_t + K <= F (d_{t-1} + K), K = k 2L / (b beta)
    const auto& first = trace.records[start];
    const auto& last = trace.records[start + static_cast<std::size_t>(m) - 1];
    const double a = first.alpha_w * k.beta;
    const double ad = alpha_delta * eps * k.psi * k.beta;
    const double factor = 1.0 + m * a * std::pow(1.0 + a + ad, m - 1);
    const double source =
        k.beta > 0.0 ? first.encounter_count * 2.0 * k.L / (b * k.beta) : 0.0;
    record(rep, last.update_index, 2, first.in_batch(), last.d_w_after + source,
           factor * (first.d_w_before + source));
  }
  return rep;
}

GrowthReport verify_growth_fast(const StabilityTrace& trace, const GrowthConstants& k,
                                const PerturbationSet& set, double fast_step) {
  check_constants(k);
  require(fast_step >= 0.0, ErrorKind::InvalidInput, "fast step must be nonnegative");
  require_algorithm(trace, trace.algorithm == Algorithm::Fast, "fast");
  const double expansion = 1.0 + fast_step * set.radius * k.psi * k.beta;
  const double b = trace.batch_size;
  GrowthReport rep;
  for (const auto& r : trace.records) {
    const double rhs = (1.0 + r.alpha_w * k.beta * expansion) * r.d_w_before +
                       r.encounter_count / b * 2.0 * r.alpha_w * k.L;
    record(rep, r.update_index, 0, r.in_batch(), r.d_w_after, rhs);
  }
  return rep;
}

EncounterSummary encounter_check(const std::vector<StabilityTrace>& traces, int t0,
                                 std::size_t b, std::size_t n) {
  require(!traces.empty(), ErrorKind::InvalidInput, "encounter check needs at least one run");
  require(t0 >= 1 && n >= 1, ErrorKind::InvalidInput, "t0 and n must be positive");
  EncounterSummary s;
  s.t0 = t0;
  s.runs = traces.size();
  std::size_t hits = 0;
  for (const auto& tr : traces) {
    if (tr.first_encounter_step && *tr.first_encounter_step <= t0) ++hits;
  }
  const double N = static_cast<double>(traces.size());
  s.fraction = static_cast<double>(hits) / N;
  s.standard_error = std::sqrt(s.fraction * (1.0 - s.fraction) / N);
  s.bound = static_cast<double>(b) * t0 / static_cast<double>(n);
  return s;
}

double estimate_uniform_stability(const Vec& w, const Vec& w_prime, const LossOracle& oracle,
                                  std::span<const LabeledSample> eval_points,
                                  const PerturbationSet& set, const AttackConfig& attack,
                                  SeededRng& rng) {
  require(!eval_points.empty(), ErrorKind::InvalidInput, "evaluation set is empty");
  double worst = 0.0;
  for (const auto& s : eval_points) {
    SeededRng ra = rng;
    SeededRng rb = rng;
    const double la = robust_loss(oracle, w, s, set, attack, ra);
    const double lb = robust_loss(oracle, w_prime, s, set, attack, rb);
    worst = std::max(worst, std::abs(la - lb));
    rng = ra;
  }
  return worst;
}

}  // namespace advlab
