#include "advlab/report.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace advlab {

json number_to_json(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double number_from_json(const json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
  }
  fail(ErrorKind::InvalidConfig, "expected a number, got " + j.dump());
}

namespace {

json numbers(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(number_to_json(x));
  return a;
}

std::vector<double> numbers_from(const json& j) {
  std::vector<double> out;
  for (const auto& x : j) out.push_back(number_from_json(x));
  return out;
}

double num(const json& j, const char* key) { return number_from_json(j.at(key)); }

}  // namespace

void to_json(json& j, const ModelSpec& v) {
  j = {{"kind", to_string(v.kind)},
       {"input_dim", v.input_dim},
       {"class_count", v.class_count},
       {"hidden_dim", v.hidden_dim},
       {"bounded_loss", v.bounded_loss}};
}

void from_json(const json& j, ModelSpec& v) {
  v.kind = model_kind_from_string(j.at("kind").get<std::string>());
  j.at("input_dim").get_to(v.input_dim);
  j.at("class_count").get_to(v.class_count);
  j.at("hidden_dim").get_to(v.hidden_dim);
  j.at("bounded_loss").get_to(v.bounded_loss);
}

void to_json(json& j, const SyntheticSpec& v) {
  j = {{"kind", to_string(v.kind)}, {"n_train", v.n_train}, {"n_test", v.n_test},
       {"dim", v.dim},              {"noise", number_to_json(v.noise)}, {"seed", v.seed}};
}

void from_json(const json& j, SyntheticSpec& v) {
  v.kind = synthetic_kind_from_string(j.at("kind").get<std::string>());
  j.at("n_train").get_to(v.n_train);
  j.at("n_test").get_to(v.n_test);
  j.at("dim").get_to(v.dim);
  v.noise = num(j, "noise");
  j.at("seed").get_to(v.seed);
}

void to_json(json& j, const PerturbationSet& v) {
  j = {{"norm", to_string(v.norm)}, {"radius", number_to_json(v.radius)}, {"dim", v.dim}};
}

void from_json(const json& j, PerturbationSet& v) {
  v.norm = norm_kind_from_string(j.at("norm").get<std::string>());
  v.radius = num(j, "radius");
  j.at("dim").get_to(v.dim);
}

void to_json(json& j, const AttackConfig& v) {
  j = {{"steps", v.steps},
       {"step_size", number_to_json(v.step_size)},
       {"restarts", v.restarts},
       {"init", v.init == AttackInit::Zero ? "zero" : "uniform"}};
}

void from_json(const json& j, AttackConfig& v) {
  j.at("steps").get_to(v.steps);
  v.step_size = num(j, "step_size");
  j.at("restarts").get_to(v.restarts);
  const auto init = j.at("init").get<std::string>();
  require(init == "zero" || init == "uniform", ErrorKind::InvalidConfig,
          "attack init must be 'zero' or 'uniform'");
  v.init = init == "zero" ? AttackInit::Zero : AttackInit::Uniform;
}

void to_json(json& j, const StepSchedule& v) {
  j = {{"kind", to_string(v.kind)}, {"c", number_to_json(v.c)}, {"m", v.m}};
}

void from_json(const json& j, StepSchedule& v) {
  v.kind = schedule_kind_from_string(j.at("kind").get<std::string>());
  v.c = num(j, "c");
  j.at("m").get_to(v.m);
}

void to_json(json& j, const TrainConfig& v) {
  j = {{"algorithm", to_string(v.algorithm)},
       {"set", v.set},
       {"schedule", v.schedule},
       {"attack_lr", number_to_json(v.attack_lr)},
       {"fast_step", number_to_json(v.fast_step)},
       {"free_steps", v.free_steps},
       {"batch_size", v.batch_size},
       {"total_iterations", v.total_iterations},
       {"trades_lambda", number_to_json(v.trades_lambda)},
       {"inner_attack", v.inner_attack},
       {"seed", v.seed}};
}

void from_json(const json& j, TrainConfig& v) {
  v.algorithm = algorithm_from_string(j.at("algorithm").get<std::string>());
  j.at("set").get_to(v.set);
  j.at("schedule").get_to(v.schedule);
  v.attack_lr = num(j, "attack_lr");
  v.fast_step = num(j, "fast_step");
  j.at("free_steps").get_to(v.free_steps);
  j.at("batch_size").get_to(v.batch_size);
  j.at("total_iterations").get_to(v.total_iterations);
  v.trades_lambda = num(j, "trades_lambda");
  j.at("inner_attack").get_to(v.inner_attack);
  j.at("seed").get_to(v.seed);
}

void to_json(json& j, const ExperimentConfig& v) {
  j = {{"model", v.model},
       {"data", v.data},
       {"train", v.train},
       {"eval_attack", v.eval_attack},
       {"checkpoint_every", v.checkpoint_every},
       {"trials", v.trials},
       {"matched_compute", v.matched_compute},
       {"eval_seed", v.eval_seed},
       {"output_path", v.output_path},
       {"attach_bounds", v.attach_bounds},
       {"bound_probes", v.bound_probes}};
}

void from_json(const json& j, ExperimentConfig& v) {
  j.at("model").get_to(v.model);
  j.at("data").get_to(v.data);
  j.at("train").get_to(v.train);
  j.at("eval_attack").get_to(v.eval_attack);
  j.at("checkpoint_every").get_to(v.checkpoint_every);
  j.at("trials").get_to(v.trials);
  j.at("matched_compute").get_to(v.matched_compute);
  j.at("eval_seed").get_to(v.eval_seed);
  j.at("output_path").get_to(v.output_path);
  j.at("attach_bounds").get_to(v.attach_bounds);
  j.at("bound_probes").get_to(v.bound_probes);
}

void to_json(json& j, const Checkpoint& v) {
  j = {{"trial", v.trial},
       {"iteration", v.iteration},
       {"train_acc", number_to_json(v.train_acc)},
       {"test_acc", number_to_json(v.test_acc)},
       {"train_risk", number_to_json(v.train_risk)},
       {"test_risk", number_to_json(v.test_risk)},
       {"train_clean_acc", number_to_json(v.train_clean_acc)},
       {"test_clean_acc", number_to_json(v.test_clean_acc)},
       {"oracle_calls", v.oracle_calls},
       {"acc_gap", number_to_json(v.acc_gap())},
       {"risk_gap", number_to_json(v.risk_gap())}};
}

void from_json(const json& j, Checkpoint& v) {
  j.at("trial").get_to(v.trial);
  j.at("iteration").get_to(v.iteration);
  v.train_acc = num(j, "train_acc");
  v.test_acc = num(j, "test_acc");
  v.train_risk = num(j, "train_risk");
  v.test_risk = num(j, "test_risk");
  v.train_clean_acc = num(j, "train_clean_acc");
  v.test_clean_acc = num(j, "test_clean_acc");
  j.at("oracle_calls").get_to(v.oracle_calls);
}

void to_json(json& j, const ConstantEstimates& v) {
  j = {{"L", number_to_json(v.L)},
       {"L_w", number_to_json(v.L_w)},
       {"beta", number_to_json(v.beta)},
       {"psi", number_to_json(v.psi)},
       {"lipschitz_probes", v.lipschitz_probes},
       {"smoothness_probes", v.smoothness_probes},
       {"psi_samples", v.psi_samples},
       {"region", v.region}};
}

void from_json(const json& j, ConstantEstimates& v) {
  v.L = num(j, "L");
  v.L_w = num(j, "L_w");
  v.beta = num(j, "beta");
  v.psi = num(j, "psi");
  j.at("lipschitz_probes").get_to(v.lipschitz_probes);
  j.at("smoothness_probes").get_to(v.smoothness_probes);
  j.at("psi_samples").get_to(v.psi_samples);
  j.at("region").get_to(v.region);
}

void to_json(json& j, const BoundReport& v) {
  j = {{"algorithm", v.algorithm},
       {"lambda", number_to_json(v.lambda)},
       {"nu", number_to_json(v.recursion.nu)},
       {"xi", number_to_json(v.recursion.xi)},
       {"t0", v.recursion.t0},
       {"steps", number_to_json(v.steps)},
       {"bound_value", number_to_json(v.bound_value)},
       {"measured_gap", number_to_json(v.measured_gap)},
       {"ratio", number_to_json(v.ratio)},
       {"free_vs_vanilla_ratio", v.free_vs_vanilla_ratio
                                     ? number_to_json(*v.free_vs_vanilla_ratio)
                                     : json(nullptr)}};
}

void from_json(const json& j, BoundReport& v) {
  j.at("algorithm").get_to(v.algorithm);
  v.lambda = num(j, "lambda");
  v.recursion.nu = num(j, "nu");
  v.recursion.xi = num(j, "xi");
  j.at("t0").get_to(v.recursion.t0);
  v.steps = num(j, "steps");
  v.bound_value = num(j, "bound_value");
  v.measured_gap = num(j, "measured_gap");
  v.ratio = num(j, "ratio");
  if (const auto& r = j.at("free_vs_vanilla_ratio"); !r.is_null()) {
    v.free_vs_vanilla_ratio = number_from_json(r);
  } else {
    v.free_vs_vanilla_ratio.reset();
  }
}

void to_json(json& j, const MeanSd& v) {
  j = {{"mean", number_to_json(v.mean)},
       {"sd", number_to_json(v.sd)},
       {"se", number_to_json(v.se)},
       {"count", v.count}};
}

void to_json(json& j, const GapReport& v) {
  json series = json::array();
  for (const auto& s : v.min_norm_series) series.push_back(numbers(s));
  j = {{"config", v.config},
       {"checkpoints", v.checkpoints},
       {"psi_min_norm", numbers(v.psi_min_norm)},
       {"psi_degenerate", v.psi_degenerate()},
       {"min_norm_series", series},
       {"oracle_calls", v.oracle_calls},
       {"constants", v.constants ? json(*v.constants) : json(nullptr)},
       {"bound", v.bound ? json(*v.bound) : json(nullptr)},
       {"bound_schedule_vanishing", v.bound_schedule_vanishing},
       {"acc_gap", v.acc_gap()},
       {"risk_gap", v.risk_gap()}};
}

void from_json(const json& j, GapReport& v) {
  j.at("config").get_to(v.config);
  j.at("checkpoints").get_to(v.checkpoints);
  v.psi_min_norm = numbers_from(j.at("psi_min_norm"));
  v.min_norm_series.clear();
  for (const auto& s : j.at("min_norm_series")) v.min_norm_series.push_back(numbers_from(s));
  j.at("oracle_calls").get_to(v.oracle_calls);
  if (const auto& c = j.at("constants"); !c.is_null()) {
    v.constants = c.get<ConstantEstimates>();
  } else {
    v.constants.reset();
  }
  if (const auto& b = j.at("bound"); !b.is_null()) {
    v.bound = b.get<BoundReport>();
  } else {
    v.bound.reset();
  }
  j.at("bound_schedule_vanishing").get_to(v.bound_schedule_vanishing);
}

void to_json(json& j, const GapTrend& v) {
  j = {{"n_values", numbers(v.n_values)},
       {"mean_gaps", numbers(v.mean_gaps)},
       {"spearman", number_to_json(v.spearman)},
       {"slope", number_to_json(v.slope)},
       {"slope_se", number_to_json(v.slope_se)},
       {"fitted_points", v.fitted_points}};
}

namespace {

void check_known_keys(const json& patch, const json& base, const std::string& prefix) {
  for (const auto& [key, value] : patch.items()) {
    require(base.contains(key), ErrorKind::InvalidConfig,
            "unknown configuration key '" + prefix + key + "'");
    if (value.is_object() && base.at(key).is_object()) {
      check_known_keys(value, base.at(key), prefix + key + ".");
    }
  }
}

}  // namespace

ExperimentConfig config_from_json(const json& patch, ExperimentConfig base) {
  require(patch.is_object(), ErrorKind::InvalidConfig, "configuration must be a JSON object");
  json merged = base;
  check_known_keys(patch, merged, "");
  merged.merge_patch(patch);
  try {
    return merged.get<ExperimentConfig>();
  } catch (const json::exception& e) {
    fail(ErrorKind::InvalidConfig, std::string("malformed configuration: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Files

namespace {

std::ofstream open_for_write(const std::filesystem::path& file) {
  std::ofstream out(file);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + file.string());
  return out;
}

void close_checked(std::ofstream& out, const std::filesystem::path& file) {
  out.close();
  require(!out.fail(), ErrorKind::Io, "failed writing " + file.string());
}

std::string series_name(std::size_t index, const GapReport& r, const std::string& what) {
  return "r" + std::to_string(index) + ":" + to_string(r.config.train.algorithm) + ":" + what;
}

void write_plot_rows(std::ostream& out, const std::string& series, double x,
                     const std::vector<double>& values) {
  const MeanSd s = summarize(values);
  out << series << ',' << x << ',' << s.mean << ',' << s.se << '\n';
}

}  // namespace

void write_json_file(const std::filesystem::path& file, const json& j) {
  auto out = open_for_write(file);
  out << j.dump(2) << '\n';
  close_checked(out, file);
}

std::vector<std::filesystem::path> emit_report(const std::vector<GapReport>& reports,
                                               ReportFormat format,
                                               const std::filesystem::path& dir,
                                               const json& summary) {
  require(!reports.empty(), ErrorKind::InvalidInput, "no reports to emit");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  require(!ec && std::filesystem::is_directory(dir), ErrorKind::Io,
          "cannot create output directory " + dir.string());
  std::vector<std::filesystem::path> written;

  if (format == ReportFormat::Json) {
    const auto file = dir / "report.json";
    json j = {{"reports", reports}};
    if (!summary.empty()) j["summary"] = summary;
    write_json_file(file, j);
    written.push_back(file);
    return written;
  }

  const auto trace_file = dir / "trace.csv";
  {
    auto out = open_for_write(trace_file);
    out.precision(17);
    out << "report,algorithm,n_train,trial,iteration,oracle_calls,train_acc,test_acc,"
           "train_risk,test_risk,train_clean_acc,test_clean_acc,acc_gap,risk_gap\n";
    for (std::size_t i = 0; i < reports.size(); ++i) {
      const auto& r = reports[i];
      for (const auto& c : r.checkpoints) {
        out << i << ',' << to_string(r.config.train.algorithm) << ',' << r.config.data.n_train
            << ',' << c.trial << ',' << c.iteration << ',' << c.oracle_calls << ','
            << c.train_acc << ',' << c.test_acc << ',' << c.train_risk << ',' << c.test_risk
            << ',' << c.train_clean_acc << ',' << c.test_clean_acc << ',' << c.acc_gap() << ','
            << c.risk_gap() << '\n';
      }
    }
    close_checked(out, trace_file);
    written.push_back(trace_file);
  }

  const auto curve_file = dir / "plotdata_learning_curve.csv";
  {
    auto out = open_for_write(curve_file);
    out.precision(17);
    out << "series,x,mean,stderr\n";
    for (std::size_t i = 0; i < reports.size(); ++i) {
      const auto& r = reports[i];
      std::map<int, std::vector<const Checkpoint*>> by_iter;
      for (const auto& c : r.checkpoints) by_iter[c.iteration].push_back(&c);
      for (const char* what : {"train_acc", "test_acc", "acc_gap", "risk_gap"}) {
        const std::string name = series_name(i, r, what);
        for (const auto& [iter, cps] : by_iter) {
          std::vector<double> v;
          for (const Checkpoint* c : cps) {
            const std::string w = what;
            v.push_back(w == "train_acc"  ? c->train_acc
                        : w == "test_acc" ? c->test_acc
                        : w == "acc_gap"  ? c->acc_gap()
                                          : c->risk_gap());
          }
          write_plot_rows(out, name, iter, v);
        }
      }
    }
    close_checked(out, curve_file);
    written.push_back(curve_file);
  }

  const auto gap_file = dir / "plotdata_gap_vs_n.csv";
  {
    auto out = open_for_write(gap_file);
    out.precision(17);
    out << "series,x,mean,stderr\n";
    for (const auto& r : reports) {
      std::vector<double> v;
      for (const auto& c : r.final_checkpoints()) v.push_back(c.acc_gap());
      write_plot_rows(out, to_string(r.config.train.algorithm), static_cast<double>(r.config.data.n_train), v);
    }
    close_checked(out, gap_file);
    written.push_back(gap_file);
  }

  const auto psi_file = dir / "plotdata_psi.csv";
  {
    auto out = open_for_write(psi_file);
    out.precision(17);
    out << "series,x,mean,stderr\n";
    for (std::size_t i = 0; i < reports.size(); ++i) {
      const auto& r = reports[i];
      std::size_t len = 0;
      for (const auto& s : r.min_norm_series) len = std::max(len, s.size());
      const std::string name = series_name(i, r, "min_grad_delta_norm");
      for (std::size_t k = 0; k < len; ++k) {
        std::vector<double> v;
        for (const auto& s : r.min_norm_series) {
          if (k < s.size()) v.push_back(s[k]);
        }
        write_plot_rows(out, name, static_cast<double>(k + 1), v);
      }
    }
    close_checked(out, psi_file);
    written.push_back(psi_file);
  }
  return written;
}

std::vector<GapReport> read_report(const std::filesystem::path& file) {
  std::ifstream in(file);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot read " + file.string());
  try {
    const json j = json::parse(in);
    return j.at("reports").get<std::vector<GapReport>>();
  } catch (const json::exception& e) {
    fail(ErrorKind::InvalidInput, "malformed report " + file.string() + ": " + e.what());
  }
}

}  // namespace advlab
