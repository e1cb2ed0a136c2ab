#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "advlab/bounds.hpp"
#include "advlab/experiments.hpp"
#include "advlab/parallel.hpp"
#include "advlab/report.hpp"
#include "advlab/stability.hpp"

using namespace advlab;
namespace fs = std::filesystem;

namespace {

ExperimentConfig default_config() {
  ExperimentConfig cfg;
  const PerturbationSet set{NormKind::L2, 0.5, cfg.data.dim};
  cfg.train = TrainConfig::with_defaults(Algorithm::Vanilla, set);
  cfg.train.total_iterations = 2000;
  cfg.train.batch_size = 1;
  cfg.train.schedule = {ScheduleKind::Constant, 0.05, 1};
  cfg.eval_attack = AttackConfig::evaluation_default(set.radius);
  return cfg;
}

/// Flags shared by the experiment subcommands; each one overrides exactly the
/// config field it names, after the config file has been applied.
struct Flags {
  std::string config_file;
  std::string out_dir;
  std::string algorithm, model, norm, data_kind, schedule;
  double eps = 0, noise = 0, c = 0, attack_lr = 0, fast_step = 0, trades_lambda = 0,
         eval_step_size = 0;
  std::size_t n = 0, n_test = 0, dim = 0, hidden = 0;
  int iterations = 0, batch = 0, m = 0, trials = 0, checkpoint_every = 0, eval_steps = 0,
      inner_steps = 0, bound_probes = 0;
  std::uint64_t seed = 0, data_seed = 0, eval_seed = 0;
  bool matched_compute = false, no_bounds = false, bounded_loss = false;

  std::vector<CLI::Option*> opts;
};

void add_flags(CLI::App& app, Flags& f) {
  app.add_option("--config", f.config_file, "JSON configuration file")->check(CLI::ExistingFile);
  app.add_option("--out", f.out_dir, "output directory (overrides output_path)");
  auto add = [&](const char* name, auto& target, const char* help) {
    f.opts.push_back(app.add_option(name, target, help));
  };
  add("--algorithm", f.algorithm, "vanilla | free | fast | free_trades | trades");
  add("--model", f.model, "softmax_linear | mlp | logistic");
  add("--norm", f.norm, "l2 | linf");
  add("--data", f.data_kind, "two_gaussians | xor_clusters | spiral2d");
  add("--schedule", f.schedule, "constant | c_over_t | c_over_mt");
  add("--eps", f.eps, "perturbation radius (resets the radius-derived step sizes)");
  add("--noise", f.noise, "per-coordinate data noise");
  add("--c", f.c, "weight step-size constant");
  add("--attack-lr", f.attack_lr, "free-style ascent step alpha_delta");
  add("--fast-step", f.fast_step, "fast single-step size");
  add("--trades-lambda", f.trades_lambda, "TRADES regularization lambda");
  add("--eval-step-size", f.eval_step_size, "evaluation PGD step size");
  add("--n", f.n, "training set size");
  add("--n-test", f.n_test, "test set size");
  add("--dim", f.dim, "input dimension");
  add("--hidden", f.hidden, "MLP hidden width");
  add("--iterations", f.iterations, "weight updates T (or oracle budget with --matched-compute)");
  add("--batch", f.batch, "minibatch size b");
  add("--m", f.m, "free steps per minibatch");
  add("--trials", f.trials, "independent training seeds");
  add("--checkpoint-every", f.checkpoint_every, "evaluation cadence in updates (0 = n/b)");
  add("--eval-steps", f.eval_steps, "evaluation PGD steps");
  add("--inner-steps", f.inner_steps, "inner PGD steps for vanilla-style training");
  add("--bound-probes", f.bound_probes, "probes for constant estimation");
  add("--seed", f.seed, "training seed");
  add("--data-seed", f.data_seed, "data seed");
  add("--eval-seed", f.eval_seed, "evaluation seed");
  f.opts.push_back(app.add_flag("--matched-compute", f.matched_compute,
                                "treat --iterations as an oracle-call budget"));
  f.opts.push_back(app.add_flag("--no-bounds", f.no_bounds, "skip constant and bound estimation"));
  f.opts.push_back(app.add_flag("--bounded-loss", f.bounded_loss, "use the bounded loss ce/(1+ce)"));
}

bool given(const Flags& f, const std::string& name) {
  for (const auto* o : f.opts) {
    if (o->check_lname(name.substr(2)) && o->count() > 0) return true;
  }
  return false;
}

ExperimentConfig build_config(const Flags& f) {
  ExperimentConfig cfg = default_config();
  if (!f.config_file.empty()) {
    std::ifstream in(f.config_file);
    require(static_cast<bool>(in), ErrorKind::Io, "cannot read " + f.config_file);
    json patch;
    try {
      patch = json::parse(in);
    } catch (const json::exception& e) {
      fail(ErrorKind::InvalidConfig, "malformed config file " + f.config_file + ": " + e.what());
    }
    cfg = config_from_json(patch, cfg);
  }
  auto& t = cfg.train;
  if (given(f, "--algorithm")) t.algorithm = algorithm_from_string(f.algorithm);
  if (given(f, "--model")) cfg.model.kind = model_kind_from_string(f.model);
  if (given(f, "--norm")) t.set.norm = norm_kind_from_string(f.norm);
  if (given(f, "--data")) cfg.data.kind = synthetic_kind_from_string(f.data_kind);
  if (given(f, "--schedule")) t.schedule.kind = schedule_kind_from_string(f.schedule);
  if (given(f, "--dim")) cfg.data.dim = cfg.model.input_dim = t.set.dim = f.dim;
  if (given(f, "--eps") || given(f, "--norm")) {
    if (given(f, "--eps")) t.set.radius = f.eps;
    const TrainConfig d = TrainConfig::with_defaults(t.algorithm, t.set);
    t.attack_lr = d.attack_lr;
    t.fast_step = d.fast_step;
    t.inner_attack.step_size = d.inner_attack.step_size;
    cfg.eval_attack.step_size = AttackConfig::evaluation_default(t.set.radius).step_size;
  }
  if (given(f, "--noise")) cfg.data.noise = f.noise;
  if (given(f, "--c")) t.schedule.c = f.c;
  if (given(f, "--attack-lr")) t.attack_lr = f.attack_lr;
  if (given(f, "--fast-step")) t.fast_step = f.fast_step;
  if (given(f, "--trades-lambda")) t.trades_lambda = f.trades_lambda;
  if (given(f, "--eval-step-size")) cfg.eval_attack.step_size = f.eval_step_size;
  if (given(f, "--n")) cfg.data.n_train = f.n;
  if (given(f, "--n-test")) cfg.data.n_test = f.n_test;
  if (given(f, "--hidden")) cfg.model.hidden_dim = f.hidden;
  if (given(f, "--iterations")) t.total_iterations = f.iterations;
  if (given(f, "--batch")) t.batch_size = f.batch;
  if (given(f, "--m")) t.free_steps = t.schedule.m = f.m;
  if (given(f, "--trials")) cfg.trials = f.trials;
  if (given(f, "--checkpoint-every")) cfg.checkpoint_every = f.checkpoint_every;
  if (given(f, "--eval-steps")) cfg.eval_attack.steps = f.eval_steps;
  if (given(f, "--inner-steps")) t.inner_attack.steps = f.inner_steps;
  if (given(f, "--bound-probes")) cfg.bound_probes = f.bound_probes;
  if (given(f, "--seed")) t.seed = f.seed;
  if (given(f, "--data-seed")) cfg.data.seed = f.data_seed;
  if (given(f, "--eval-seed")) cfg.eval_seed = f.eval_seed;
  if (f.matched_compute) cfg.matched_compute = true;
  if (f.no_bounds) cfg.attach_bounds = false;
  if (f.bounded_loss) cfg.model.bounded_loss = true;
  if (!f.out_dir.empty()) cfg.output_path = f.out_dir;
  return cfg;
}

json gap_summary(const GapReport& r) {
  return {{"algorithm", to_string(r.config.train.algorithm)},
          {"n_train", r.config.data.n_train},
          {"acc_gap", r.acc_gap()},
          {"risk_gap", r.risk_gap()},
          {"psi_degenerate", r.psi_degenerate()}};
}

void print_written(const std::vector<fs::path>& files) {
  json j = {{"status", "ok"}, {"files", json::array()}};
  for (const auto& p : files) j["files"].push_back(p.string());
  std::cout << j.dump() << '\n';
}

std::vector<fs::path> emit_all(const std::vector<GapReport>& reports, const fs::path& dir,
                               const json& summary) {
  auto files = emit_report(reports, ReportFormat::Json, dir, summary);
  auto csv = emit_report(reports, ReportFormat::Csv, dir);
  files.insert(files.end(), csv.begin(), csv.end());
  return files;
}

// ---------------------------------------------------------------------------

int cmd_gap(const Flags& f) {
  const ExperimentConfig cfg = build_config(f);
  const GapReport r = run_gap_experiment(cfg);
  print_written(emit_all({r}, cfg.output_path, gap_summary(r)));
  return 0;
}

int cmd_vs_n(const Flags& f, const std::vector<std::size_t>& n_values) {
  const ExperimentConfig cfg = build_config(f);
  const VsNResult res = run_vs_n_experiment(cfg, n_values);
  print_written(emit_all(res.reports, cfg.output_path, {{"trend", res.trend}}));
  return 0;
}

int cmd_free_trades(const Flags& f) {
  ExperimentConfig seq = build_config(f);
  seq.train.algorithm = Algorithm::Trades;
  ExperimentConfig fr = seq;
  fr.train.algorithm = Algorithm::FreeTrades;
  const PairedGapReport p = run_free_trades_comparison(seq, fr);
  json summary = {{"sequential", gap_summary(p.sequential)},
                  {"free_trades", gap_summary(p.free_style)},
                  {"gap_differences", p.gap_differences()}};
  print_written(emit_all({p.sequential, p.free_style}, seq.output_path, summary));
  return 0;
}

int cmd_transfer(const Flags& f, const std::string& algorithm_b, std::uint64_t seed_b) {
  const ExperimentConfig a = build_config(f);
  ExperimentConfig b = a;
  b.train.algorithm = algorithm_from_string(algorithm_b);
  b.train.seed = seed_b;
  const TransferResult res = run_transfer_experiment(a, b);
  const fs::path dir = a.output_path;
  fs::create_directories(dir);
  json j = {{"config_a", a}, {"config_b", b}, {"accuracy", json::array()}};
  for (const auto& row : res.accuracy) {
    j["accuracy"].push_back({number_to_json(row[0]), number_to_json(row[1])});
  }
  write_json_file(dir / "report.json", j);
  std::ofstream trace(dir / "trace.csv");
  std::ofstream plot(dir / "plotdata_transfer.csv");
  require(trace && plot, ErrorKind::Io, "cannot write into " + dir.string());
  trace.precision(17);
  plot.precision(17);
  trace << "source,target,robust_accuracy\n";
  plot << "series,x,mean,stderr\n";
  const char* names[] = {"A", "B"};
  for (int s = 0; s < 2; ++s) {
    for (int t = 0; t < 2; ++t) {
      trace << names[s] << ',' << names[t] << ',' << res.accuracy[s][t] << '\n';
      plot << "source_" << names[s] << ',' << t << ',' << res.accuracy[s][t] << ",0\n";
    }
  }
  print_written({dir / "report.json", dir / "trace.csv", dir / "plotdata_transfer.csv"});
  return 0;
}

int cmd_stability(const Flags& f, int pairs, double inflate) {
  ExperimentConfig cfg = build_config(f);
  require(pairs >= 1, ErrorKind::InvalidConfig, "pairs must be positive");
  const SyntheticData data = make_synthetic(cfg.data);
  SyntheticSpec fresh_spec = cfg.data;
  fresh_spec.seed = mix_seed(cfg.data.seed, 0xfeed);
  fresh_spec.n_train = std::max<std::size_t>(static_cast<std::size_t>(pairs), 2);
  const SyntheticData fresh = make_synthetic(fresh_spec);
  const SmoothModel model(cfg.model);
  const TrainConfig& base = cfg.train;
  base.validate(data.train.size());

  SeededRng pick(base.seed, Stream::Probe);
  std::vector<NeighborPair> neighbor;
  std::vector<TrainConfig> cfgs;
  for (int p = 0; p < pairs; ++p) {
    neighbor.push_back(make_neighbor(data.train, pick.index(data.train.size()),
                                     fresh.train[static_cast<std::size_t>(p)]));
    TrainConfig c = base;
    c.seed = mix_seed(base.seed, static_cast<std::uint64_t>(p));
    cfgs.push_back(c);
  }
  const auto traces = parallel_map(neighbor.size(), [&](std::size_t i) {
    return coupled_run(model, neighbor[i], cfgs[i]);
  });

  // constants over the pooled trajectories
  std::vector<Vec> anchors;
  for (const auto& t : traces) {
    anchors.push_back(t.trace_s.final_w);
    anchors.push_back(t.trace_s.initial_w);
  }
  const bool trades = base.algorithm == Algorithm::Trades || base.algorithm == Algorithm::FreeTrades;
  const TradesLoss trades_loss(model, base.trades_lambda);
  const LossOracle& oracle = trades ? static_cast<const LossOracle&>(trades_loss) : model;
  const ProbeRegion region(anchors, 0.01, base.set, data.train.samples);
  SeededRng rng(base.seed, Stream::Probe);
  const auto lip = estimate_lipschitz(oracle, region, cfg.bound_probes, rng);
  const double beta = estimate_smoothness(oracle, region, cfg.bound_probes, 1e-3, rng);
  std::vector<const TrainTrace*> all;
  for (const auto& t : traces) {
    all.push_back(&t.trace_s);
    all.push_back(&t.trace_s_prime);
  }
  const PsiEstimate psi = estimate_psi(all);
  const GrowthConstants k = GrowthConstants{beta, lip.L, psi.psi}.scaled(inflate);

  GrowthReport growth;
  for (const auto& t : traces) {
    switch (base.algorithm) {
      case Algorithm::Vanilla:
      case Algorithm::Trades: growth.merge(verify_growth_vanilla(t, k, base.set)); break;
      case Algorithm::Free:
      case Algorithm::FreeTrades:
        growth.merge(verify_growth_free(t, k, base.set, base.attack_lr));
        break;
      case Algorithm::Fast: growth.merge(verify_growth_fast(t, k, base.set, base.fast_step)); break;
    }
  }
  json enc = json::array();
  for (int t0 : {5, 10, 20}) {
    const auto s = encounter_check(traces, t0, static_cast<std::size_t>(base.batch_size),
                                   data.train.size());
    enc.push_back({{"t0", t0},
                   {"fraction", number_to_json(s.fraction)},
                   {"standard_error", number_to_json(s.standard_error)},
                   {"bound", number_to_json(s.bound)},
                   {"within_bound", s.within_bound()}});
  }
  const fs::path dir = cfg.output_path;
  fs::create_directories(dir);
  json j = {{"config", cfg},
            {"pairs", pairs},
            {"constants",
             {{"L", number_to_json(lip.L)},
              {"L_w", number_to_json(lip.L_w)},
              {"beta", number_to_json(beta)},
              {"psi", number_to_json(psi.psi)},
              {"psi_degenerate", psi.degenerate},
              {"inflation", number_to_json(inflate)},
              {"region", region.describe()}}},
            {"growth",
             {{"checks_out", growth.checks_out},
              {"violations_out", growth.violations_out},
              {"checks_in", growth.checks_in},
              {"violations_in", growth.violations_in},
              {"stepwise_checks", growth.stepwise_checks},
              {"stepwise_violations", growth.stepwise_violations},
              {"max_ratio_out", number_to_json(growth.max_ratio_out)},
              {"max_ratio_in", number_to_json(growth.max_ratio_in)},
              {"max_ratio_stepwise", number_to_json(growth.max_ratio_stepwise)}}},
            {"encounter", enc}};
  write_json_file(dir / "report.json", j);

  std::ofstream trace(dir / "trace.csv");
  std::ofstream plot(dir / "plotdata_divergence.csv");
  require(trace && plot, ErrorKind::Io, "cannot write into " + dir.string());
  trace.precision(17);
  plot.precision(17);
  trace << "pair,step,iteration,alpha_w,encounter_count,d_w_before,d_w_after,d_delta_before,"
           "d_delta_after\n";
  for (std::size_t p = 0; p < traces.size(); ++p) {
    for (const auto& r : traces[p].records) {
      trace << p << ',' << r.step << ',' << r.iteration << ',' << r.alpha_w << ','
            << r.encounter_count << ',' << r.d_w_before << ',' << r.d_w_after << ','
            << r.d_delta_before << ',' << r.d_delta_after << '\n';
    }
  }
  plot << "series,x,mean,stderr\n";
  const std::size_t len = traces.front().records.size();
  for (std::size_t u = 0; u < len; ++u) {
    std::vector<double> v;
    for (const auto& t : traces) v.push_back(t.records[u].d_w_after);
    const MeanSd s = summarize(v);
    plot << "d_w," << u + 1 << ',' << s.mean << ',' << s.se << '\n';
  }
  print_written({dir / "report.json", dir / "trace.csv", dir / "plotdata_divergence.csv"});
  return 0;
}

int cmd_bounds(const Flags& f) {
  ExperimentConfig cfg = build_config(f);
  cfg.attach_bounds = true;
  cfg.trials = 1;
  const GapReport r = run_gap_experiment(cfg);
  require(r.constants.has_value(), ErrorKind::InvalidInput, "constant estimation failed");
  const auto& t = cfg.train;
  BoundInputs in;
  in.n = cfg.data.n_train;
  in.b = static_cast<std::size_t>(t.batch_size);
  in.T = static_cast<std::size_t>(cfg.effective_iterations());
  in.m = static_cast<std::size_t>(t.free_steps);
  in.c = t.schedule.c;
  in.eps = t.set.radius;
  in.alpha_delta = t.attack_lr;
  in.fast_step = t.fast_step;
  in.constants = *r.constants;
  json bounds = json::object();
  const double gap = r.risk_gap().mean;
  for (Algorithm a : {Algorithm::Vanilla, Algorithm::Free, Algorithm::Fast}) {
    BoundInputs ai = in;
    if (a == Algorithm::Free) ai.T -= ai.T % ai.m;
    BoundReport b = bound_for(a, ai);
    b.attach_gap(gap);
    bounds[to_string(a)] = b;
  }
  json summary = {{"bounds_with_shared_constants", bounds},
                  {"schedule_vanishing", t.schedule.vanishing()},
                  {"lower_bound_note",
                   "a matching lower bound of order sqrt(T) + T/n is known for general "
                   "smooth nonconvex-nonconcave losses; it is not evaluated here"}};
  print_written(emit_all({r}, cfg.output_path, summary));
  return 0;
}

// Quick self-checks of the core identities.
int cmd_check(const fs::path& dir) {
  json results = json::array();
  bool ok = true;
  auto note = [&](const std::string& name, bool pass, double value) {
    ok = ok && pass;
    results.push_back({{"check", name}, {"pass", pass}, {"value", number_to_json(value)}});
  };
  SeededRng rng(12345, Stream::Probe);
  for (ModelKind kind :
       {ModelKind::SoftmaxLinear, ModelKind::TwoLayerTanhMLP, ModelKind::ScalarLogistic}) {
    ModelSpec spec;
    spec.kind = kind;
    spec.input_dim = kind == ModelKind::ScalarLogistic ? 3 : 6;
    spec.hidden_dim = 5;
    const double err = finite_diff_report(SmoothModel(spec), 20, 1e-5, rng);
    note("gradient_" + to_string(kind), err < 1e-6, err);
  }
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const PerturbationSet set{NormKind::L2, rng.uniform(0.1, 2.0), 5};
    const double psi = rng.uniform(0.5, 20.0);
    Vec g = gaussian_vector(rng, 5);
    g *= (1.0 / psi) * (1.0 + rng.uniform(0.0, 5.0)) / g.norm();
    worst = std::max(worst, (project_extreme(g, set) - project_onto_set(set.radius * psi * g, set))
                                .lpNorm<Eigen::Infinity>());
  }
  note("extreme_point_identity", worst <= 1e-10, worst);
  double eig = 0.0;
  for (int i = 0; i < 200; ++i) {
    const ExpansivityMatrix e{rng.uniform(0.01, 10.0), rng.uniform(0.01, 10.0)};
    const Eigen::Vector2d ev = expansivity_eigenvalues(e);
    eig = std::max({eig, std::abs(ev[0] - 1.0), std::abs(ev[1] - (1.0 + e.alpha * (e.r + 1.0)))});
  }
  note("expansivity_eigenvalues", eig <= 1e-10 * 100.0, eig);
  note("lambda_free_m1", lambda_free(1.3, 0.7, 1, 0.2, 0.5, 3.0) == lambda_vanilla(1.3, 0.7), 0.0);
  note("lambda_fast_zero_step", lambda_fast(1.3, 0.7, 0.0, 0.5, 3.0) == lambda_vanilla(1.3, 0.7),
       0.0);
  fs::create_directories(dir);
  write_json_file(dir / "report.json", {{"checks", results}, {"all_passed", ok}});
  std::cout << json({{"status", ok ? "ok" : "failed"}, {"checks", results}}).dump() << '\n';
  return ok ? 0 : 3;
}

int emit_error(const std::string& kind, const std::string& message, int code) {
  std::cout << json({{"error", {{"kind", kind}, {"message", message}}}}).dump() << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial-training stability laboratory"};
  app.require_subcommand(1);

  Flags gap_f, vsn_f, transfer_f, ft_f, stab_f, bounds_f;
  auto* gap = app.add_subcommand("gap", "train and track the robust generalization gap");
  add_flags(*gap, gap_f);

  auto* vsn = app.add_subcommand("vs-n", "gap as a function of the training-set size");
  add_flags(*vsn, vsn_f);
  std::vector<std::size_t> n_values{250, 500, 1000, 2000};
  vsn->add_option("--n-values", n_values, "training-set sizes")->delimiter(',');

  auto* transfer = app.add_subcommand("transfer", "transferred attacks between two models");
  add_flags(*transfer, transfer_f);
  std::string algorithm_b = "free";
  std::uint64_t seed_b = 1;
  transfer->add_option("--algorithm-b", algorithm_b, "algorithm of model B");
  transfer->add_option("--seed-b", seed_b, "training seed of model B");

  auto* ft = app.add_subcommand("free-trades", "sequential TRADES versus Free-TRADES");
  add_flags(*ft, ft_f);

  auto* stab = app.add_subcommand("stability", "coupled runs and growth-recursion checks");
  add_flags(*stab, stab_f);
  int pairs = 20;
  double inflate = 1.1;
  stab->add_option("--pairs", pairs, "coupled pairs");
  stab->add_option("--inflate", inflate, "multiplier applied to the estimated constants");

  auto* bounds = app.add_subcommand("bounds", "estimate constants and evaluate the bounds");
  add_flags(*bounds, bounds_f);

  auto* check = app.add_subcommand("check", "run the built-in verification checks");
  std::string check_dir = ".";
  check->add_option("--out", check_dir, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return emit_error("invalid-arguments", e.what(), 2);
  }

  try {
    if (*gap) return cmd_gap(gap_f);
    if (*vsn) return cmd_vs_n(vsn_f, n_values);
    if (*transfer) return cmd_transfer(transfer_f, algorithm_b, seed_b);
    if (*ft) return cmd_free_trades(ft_f);
    if (*stab) return cmd_stability(stab_f, pairs, inflate);
    if (*bounds) return cmd_bounds(bounds_f);
    if (*check) return cmd_check(check_dir);
  } catch (const Error& e) {
    return emit_error(std::string(to_string(e.kind())), e.what(), 1);
  } catch (const std::exception& e) {
    return emit_error("internal", e.what(), 1);
  }
  return emit_error("invalid-arguments", "no subcommand", 2);
}
