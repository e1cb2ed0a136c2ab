#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "advlab/report.hpp"

using namespace advlab;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.data.n_train = 30;
  cfg.data.n_test = 30;
  cfg.data.dim = 3;
  cfg.data.seed = 2;
  cfg.model.input_dim = 3;
  cfg.model.hidden_dim = 4;
  const PerturbationSet set{NormKind::L2, 0.25, 3};
  cfg.train = TrainConfig::with_defaults(Algorithm::Free, set);
  cfg.train.total_iterations = 24;
  cfg.train.batch_size = 3;
  cfg.train.schedule = {ScheduleKind::Constant, 0.1, 1};
  cfg.train.seed = 5;
  cfg.eval_attack = AttackConfig::evaluation_default(0.25);
  cfg.eval_attack.steps = 3;
  cfg.checkpoint_every = 8;
  cfg.trials = 2;
  cfg.bound_probes = 10;
  return cfg;
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("advlab_report_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("non-finite numbers survive serialization") {
  CHECK(std::isnan(number_from_json(number_to_json(std::nan("")))));
  CHECK(number_from_json(number_to_json(-INFINITY)) == -INFINITY);
  CHECK(number_from_json(number_to_json(0.1)) == 0.1);
}

TEST_CASE("json round trip is bit exact") {
  const auto rep = run_gap_experiment(small_config());
  REQUIRE(rep.bound.has_value());
  const fs::path dir = scratch("roundtrip");
  emit_report({rep}, ReportFormat::Json, dir);
  const auto back = read_report(dir / "report.json");
  REQUIRE(back.size() == 1);
  const auto& r = back[0];
  REQUIRE(r.checkpoints.size() == rep.checkpoints.size());
  for (std::size_t i = 0; i < r.checkpoints.size(); ++i) {
    const auto& a = rep.checkpoints[i];
    const auto& b = r.checkpoints[i];
    CHECK(a.iteration == b.iteration);
    CHECK(same_bits(a.train_acc, b.train_acc));
    CHECK(same_bits(a.test_acc, b.test_acc));
    CHECK(same_bits(a.train_risk, b.train_risk));
    CHECK(same_bits(a.test_risk, b.test_risk));
    CHECK(same_bits(a.train_clean_acc, b.train_clean_acc));
    CHECK(a.oracle_calls == b.oracle_calls);
  }
  for (std::size_t i = 0; i < rep.psi_min_norm.size(); ++i)
    CHECK(same_bits(rep.psi_min_norm[i], r.psi_min_norm[i]));
  CHECK(rep.min_norm_series == r.min_norm_series);
  REQUIRE(r.constants.has_value());
  CHECK(same_bits(rep.constants->beta, r.constants->beta));
  CHECK(same_bits(rep.constants->L, r.constants->L));
  CHECK(rep.constants->region == r.constants->region);
  REQUIRE(r.bound.has_value());
  CHECK(same_bits(rep.bound->bound_value, r.bound->bound_value));
  CHECK(same_bits(rep.bound->lambda, r.bound->lambda));
  CHECK(same_bits(rep.bound->ratio, r.bound->ratio));
  CHECK(same_bits(r.config.train.schedule.c, rep.config.train.schedule.c));
  CHECK(r.config.train.seed == rep.config.train.seed);
  CHECK(r.config.train.algorithm == Algorithm::Free);
  fs::remove_all(dir);
}

TEST_CASE("csv output has one row per checkpoint per trial") {
  const auto rep = run_gap_experiment(small_config());
  const fs::path dir = scratch("csv");
  const auto files = emit_report({rep, rep}, ReportFormat::Csv, dir);
  CHECK(files.size() >= 2);
  // header plus 2 reports x 2 trials x 3 checkpoints
  const std::size_t per_report = rep.checkpoints.size();
  CHECK(per_report == 2 * rep.iterations().size());
  CHECK(line_count(dir / "trace.csv") == 1 + 2 * per_report);
  for (const auto& f : files) {
    CHECK(fs::exists(f));
    if (f.filename().string().rfind("plotdata_", 0) == 0) {
      std::ifstream in(f);
      std::string header;
      std::getline(in, header);
      CHECK(header == "series,x,mean,stderr");
    }
  }
  fs::remove_all(dir);
}

TEST_CASE("emission errors") {
  try {
    emit_report({}, ReportFormat::Json, scratch("empty"));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidInput);
  }
  GapReport rep;
  rep.config = small_config();
  const fs::path blocker = scratch("blocker");
  std::ofstream(blocker) << "not a directory";
  try {
    emit_report({rep}, ReportFormat::Json, blocker / "sub");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Io);
    CHECK(std::string(e.what()).find((blocker / "sub").string()) != std::string::npos);
  }
  fs::remove_all(blocker);
}

TEST_CASE("configuration patches") {
  const ExperimentConfig base = small_config();
  const json full = base;
  const auto same = config_from_json(full);
  CHECK(json(same) == full);
  const auto patched =
      config_from_json(json::parse(R"({"trials": 7, "train": {"batch_size": 6}})"), base);
  CHECK(patched.trials == 7);
  CHECK(patched.train.batch_size == 6);
  CHECK(patched.train.total_iterations == base.train.total_iterations);
  try {
    config_from_json(json::parse(R"({"trails": 7})"), base);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidConfig);
  }
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"train": {"algorithm": "sgd"}})"), base), Error);
  CHECK_THROWS_AS(config_from_json(json::parse("[1, 2]"), base), Error);
}
