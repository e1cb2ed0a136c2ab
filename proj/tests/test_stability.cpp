#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "advlab/stability.hpp"

using namespace advlab;

namespace {

Dataset toy_data(std::size_t n, std::size_t dim, std::uint64_t seed) {
  SeededRng rng(seed, Stream::Data);
  Dataset d;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = static_cast<int>(i % 2);
    Vec x = gaussian_vector(rng, dim);
    x.array() += y ? 0.5 : -0.5;
    d.samples.push_back({x, y});
  }
  return d;
}

TrainConfig config(Algorithm a, double eps, int T, int b, std::uint64_t seed) {
  TrainConfig cfg = TrainConfig::with_defaults(a, {NormKind::L2, eps, 4});
  cfg.total_iterations = T;
  cfg.batch_size = b;
  cfg.schedule = {ScheduleKind::Constant, 0.1, 1};
  cfg.seed = seed;
  cfg.inner_attack.steps = 3;
  return cfg;
}

const Algorithm kAll[] = {Algorithm::Vanilla, Algorithm::Free, Algorithm::Fast,
                          Algorithm::FreeTrades, Algorithm::Trades};

StabilityRecord rec(int update, int iteration, double alpha, int count, double dw0, double dw1,
                    double dd0 = 0.0, double dd1 = 0.0) {
  StabilityRecord r;
  r.step = update;
  r.iteration = iteration;
  r.update_index = update;
  r.alpha_w = alpha;
  r.encounter_count = count;
  r.d_w_before = dw0;
  r.d_w_after = dw1;
  r.d_delta_before = dd0;
  r.d_delta_after = dd1;
  return r;
}

}  // namespace

TEST_CASE("neighboring datasets differ in exactly one position") {
  const Dataset d = toy_data(10, 3, 1);
  const LabeledSample z{Vec::Constant(3, 9.0), 1};
  const auto pair = make_neighbor(d, 4, z);
  CHECK(pair.differing_index == 4);
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(pair.s[i].x == d[i].x);
    if (i == 4) {
      CHECK(pair.s_prime[i].x == z.x);
    } else {
      CHECK(pair.s_prime[i].x == d[i].x);
    }
  }
  CHECK_THROWS_AS(make_neighbor(d, 10, z), Error);
  CHECK_THROWS_AS(make_neighbor(d, 0, {Vec::Zero(2), 0}), Error);
  CHECK_THROWS_AS(make_neighbor(d, 0, {Vec::Zero(3), 2}), Error);
}

TEST_CASE("identical datasets give zero distance for every update") {
  const auto model = SmoothModel::mlp(4, 5, 2);
  const Dataset d = toy_data(16, 4, 2);
  for (Algorithm a : kAll) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      const auto pair = make_neighbor(d, 3, d[3]);
      const auto st = coupled_run(model, pair, config(a, 0.3, 16, 2, seed));
      CHECK(st.records.size() == 16);
      for (const auto& r : st.records) {
        CHECK(r.d_w_after == 0.0);
        CHECK(r.d_delta_after == 0.0);
      }
      CHECK_FALSE(st.first_divergence_update.has_value());
      CHECK(st.trace_s.final_w == st.trace_s_prime.final_w);
    }
  }
}

TEST_CASE("a never-drawn differing sample leaves the runs identical") {
  const auto model = SmoothModel::mlp(4, 3, 2);
  const Dataset d = toy_data(40, 4, 3);
  for (Algorithm a : {Algorithm::Vanilla, Algorithm::Free, Algorithm::Fast}) {
    const auto cfg = config(a, 0.2, 8, 1, 11);
    const auto plan = batch_plan(cfg, d.size());
    std::vector<bool> used(d.size(), false);
    for (const auto& batch : plan)
      for (std::size_t j : batch) used[j] = true;
    const auto unused = static_cast<std::size_t>(std::find(used.begin(), used.end(), false) -
                                                 used.begin());
    REQUIRE(unused < d.size());
    const auto st = coupled_run(model, make_neighbor(d, unused, {Vec::Constant(4, 5.0), 0}), cfg);
    CHECK(st.final_distance() == 0.0);
    CHECK_FALSE(st.first_encounter_step.has_value());
    CHECK(st.pre_encounter_zero());
  }
}

TEST_CASE("runs agree until the differing sample is first drawn") {
  const auto model = SmoothModel::mlp(4, 3, 2);
  const Dataset d = toy_data(20, 4, 4);
  SeededRng pick(5, Stream::Probe);
  for (Algorithm a : kAll) {
    for (int p = 0; p < 5; ++p) {
      const std::size_t idx = pick.index(d.size());
      const auto pair = make_neighbor(d, idx, {Vec::Constant(4, 2.0), 1 - d[idx].y});
      const auto cfg = config(a, 0.2, 40, 2, 100 + static_cast<std::uint64_t>(p));
      const auto st = coupled_run(model, pair, cfg);
      CHECK(st.pre_encounter_zero());
      const auto plan = batch_plan(cfg, d.size());
      int first = 0;
      for (std::size_t t = 0; t < plan.size() && !first; ++t)
        if (std::count(plan[t].begin(), plan[t].end(), idx)) first = static_cast<int>(t) + 1;
      if (first) {
        REQUIRE(st.first_encounter_step.has_value());
        CHECK(*st.first_encounter_step == first);
      } else {
        CHECK_FALSE(st.first_encounter_step.has_value());
      }
    }
  }
}

TEST_CASE("stability records are written one per update") {
  const auto model = SmoothModel::mlp(4, 3, 2);
  const Dataset d = toy_data(12, 4, 6);
  const auto st = coupled_run(model, make_neighbor(d, 0, d[1]), config(Algorithm::Free, 0.2, 8, 2, 1));
  std::ostringstream os;
  write_stability_records(os, st);
  const std::string text = os.str();
  CHECK(std::count(text.begin(), text.end(), '\n') == 8);
}

TEST_CASE("perturbation diameter") {
  CHECK(perturbation_diameter({NormKind::L2, 0.5, 9}) == 1.0);
  CHECK(perturbation_diameter({NormKind::Linf, 0.5, 9}) == doctest::Approx(3.0));
}

TEST_CASE("vanilla growth check on hand-built records") {
  StabilityTrace tr;
  tr.algorithm = Algorithm::Vanilla;
  tr.batch_size = 4;
  const GrowthConstants k{2.0, 3.0, 0.0};
  const PerturbationSet set{NormKind::L2, 0.25, 2};  // diameter 0.5
  // absent: (1 + 0.2) * 1 + 0.5 * 0.2 = 1.3
  tr.records.push_back(rec(1, 1, 0.1, 0, 1.0, 1.3));
  tr.records.push_back(rec(2, 1, 0.1, 0, 1.0, 1.31));
  // present once in four: 0.75 * 1.3 + 0.25 * (1 + 0.6) = 1.375
  tr.records.push_back(rec(3, 1, 0.1, 1, 1.0, 1.375));
  tr.records.push_back(rec(4, 1, 0.1, 1, 1.0, 1.38));
  const auto rep = verify_growth_vanilla(tr, k, set);
  CHECK(rep.checks_out == 2);
  CHECK(rep.violations_out == 1);
  CHECK(rep.checks_in == 2);
  CHECK(rep.violations_in == 1);
  REQUIRE(rep.checks.size() == 4);
  CHECK(rep.checks[0].rhs == doctest::Approx(1.3).epsilon(1e-14));
  CHECK(rep.checks[2].rhs == doctest::Approx(1.375).epsilon(1e-14));
  CHECK_FALSE(rep.checks[0].violated);
  CHECK(rep.checks[1].violated);
}

TEST_CASE("free growth check on hand-built records") {
  StabilityTrace tr;
  tr.algorithm = Algorithm::Free;
  tr.batch_size = 1;
  tr.free_steps = 2;
  const GrowthConstants k{1.0, 1.0, 2.0};
  const PerturbationSet set{NormKind::L2, 0.5, 2};
  const double alpha = 0.1, alpha_delta = 0.5;
  // a = 0.1, ad = 0.5 * 0.5 * 2 * 1 = 0.5
  // w-row: 1.1 dw + 0.1 dd; delta-row: 0.5 dw + 1.5 dd
  tr.records.push_back(rec(1, 1, alpha, 0, 1.0, 1.1, 1.0, 2.0));
  tr.records.push_back(rec(1, 2, alpha, 0, 1.1, 1.2, 2.0, 3.5));
  tr.records[1].update_index = 2;
  const auto rep = verify_growth_free(tr, k, set, alpha_delta);
  CHECK(rep.checks_out == 4);
  CHECK(rep.violations_out == 0);
  CHECK(rep.checks[0].rhs == doctest::Approx(1.2));
  CHECK(rep.checks[1].rhs == doctest::Approx(2.0));
  CHECK(rep.checks[2].rhs == doctest::Approx(1.41));
  CHECK(rep.checks[3].rhs == doctest::Approx(3.55));
  // step-wise factor 1 + 2 * 0.1 * (1 + 0.1 + 0.5) = 1.32, no source
  CHECK(rep.stepwise_checks == 1);
  CHECK(rep.checks[4].rhs == doctest::Approx(1.32));
  CHECK(rep.stepwise_violations == 0);

  tr.records[1].d_w_after = 1.5;
  const auto bad = verify_growth_free(tr, k, set, alpha_delta);
  CHECK(bad.violations_out == 1);
  CHECK(bad.stepwise_violations == 1);
}

TEST_CASE("fast growth check on hand-built records") {
  StabilityTrace tr;
  tr.algorithm = Algorithm::Fast;
  tr.batch_size = 2;
  const GrowthConstants k{1.0, 4.0, 2.0};
  const PerturbationSet set{NormKind::L2, 0.5, 2};
  // expansion 1 + 0.25 * 0.5 * 2 * 1 = 1.25; rhs = (1 + 0.2 * 1.25) d + (1/2) 2 * 0.2 * 4
  tr.records.push_back(rec(1, 1, 0.2, 1, 1.0, 2.05));
  const auto rep = verify_growth_fast(tr, k, set, 0.25);
  CHECK(rep.checks[0].rhs == doctest::Approx(1.25 + 0.8));
  CHECK(rep.violations_in == 0);
}

TEST_CASE("growth checks reject mismatched traces and constants") {
  const auto model = SmoothModel::mlp(4, 3, 2);
  const Dataset d = toy_data(12, 4, 7);
  const auto st = coupled_run(model, make_neighbor(d, 0, d[1]), config(Algorithm::Vanilla, 0.2, 6, 2, 1));
  const PerturbationSet set{NormKind::L2, 0.2, 4};
  try {
    verify_growth_free(st, {1, 1, 1}, set, 0.2);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidTrace);
  }
  CHECK_THROWS_AS(verify_growth_fast(st, {1, 1, 1}, set, 0.1), Error);
  CHECK_THROWS_AS(verify_growth_vanilla(st, {-1, 1, 1}, set), Error);

  StabilityTrace broken;
  broken.algorithm = Algorithm::Free;
  broken.free_steps = 4;
  broken.records.push_back(rec(1, 1, 0.1, 0, 0, 0));
  CHECK_THROWS_AS(verify_growth_free(broken, {1, 1, 1}, set, 0.2), Error);
}

TEST_CASE("estimated constants bound the measured growth") {
  const auto model = SmoothModel::mlp(4, 6, 2);
  const Dataset d = toy_data(20, 4, 8);
  const PerturbationSet set{NormKind::L2, 0.05, 4};
  std::vector<StabilityTrace> traces;
  std::vector<Vec> anchors;
  for (int p = 0; p < 6; ++p) {
    const auto pair = make_neighbor(d, static_cast<std::size_t>(p), d[static_cast<std::size_t>(p) + 10]);
    auto cfg = config(Algorithm::Vanilla, 0.05, 60, 1, 200 + static_cast<std::uint64_t>(p));
    traces.push_back(coupled_run(model, pair, cfg));
    anchors.push_back(traces.back().trace_s.initial_w);
    anchors.push_back(traces.back().trace_s.final_w);
  }
  const ProbeRegion region(anchors, 0.01, set, d.samples);
  SeededRng rng(1, Stream::Probe);
  const auto lip = estimate_lipschitz(model, region, 200, rng);
  const double beta = estimate_smoothness(model, region, 200, 1e-3, rng);
  const GrowthConstants k = GrowthConstants{beta, lip.L, 1.0}.scaled(1.1);
  GrowthReport all;
  for (const auto& t : traces) all.merge(verify_growth_vanilla(t, k, set));
  CHECK(all.checks_out + all.checks_in == 360);
  CHECK(all.violations_out == 0);
  // with the weight terms switched off any divergence is a violation
  GrowthReport off;
  for (const auto& t : traces) off.merge(verify_growth_vanilla(t, {0.0, 0.0, 0.0}, set));
  CHECK(off.total_violations() > 0);
}

TEST_CASE("encounter summary arithmetic") {
  std::vector<StabilityTrace> traces(4);
  traces[0].first_encounter_step = 3;
  traces[1].first_encounter_step = 12;
  traces[2].first_encounter_step = 5;
  const auto s = encounter_check(traces, 5, 1, 50);
  CHECK(s.runs == 4);
  CHECK(s.fraction == 0.5);
  CHECK(s.standard_error == doctest::Approx(0.25));
  CHECK(s.bound == doctest::Approx(0.1));
  CHECK(s.within_bound());
  // 3 of 4 drawn by step 20 against a bound of 0.02
  CHECK_FALSE(encounter_check(traces, 20, 1, 1000).within_bound());
  CHECK_THROWS_AS(encounter_check({}, 5, 1, 50), Error);
  CHECK_THROWS_AS(encounter_check(traces, 0, 1, 50), Error);
}

TEST_CASE("uniform stability estimate") {
  const auto model = SmoothModel::mlp(3, 4, 2);
  SeededRng rng(9, 1);
  const PerturbationSet set{NormKind::L2, 0.3, 3};
  const auto attack = AttackConfig::evaluation_default(0.3);
  std::vector<LabeledSample> pts;
  for (int i = 0; i < 10; ++i) pts.push_back({gaussian_vector(rng, 3), i % 2});
  const Vec w = model.initial_params(rng);
  CHECK(estimate_uniform_stability(w, w, model, pts, set, attack, rng) == 0.0);
  const Vec w2 = w + gaussian_vector(rng, model.param_dim(), 0.01);
  SeededRng r1 = rng, r2 = rng;
  const double single =
      estimate_uniform_stability(w, w2, model, std::span(pts).first(1), set, attack, rng);
  CHECK(single == std::abs(robust_loss(model, w, pts[0], set, attack, r1) -
                           robust_loss(model, w2, pts[0], set, attack, r2)));
  CHECK(lipschitz_cap(2.0, w, w2) == doctest::Approx(2.0 * (w - w2).norm()));
  CHECK_THROWS_AS(estimate_uniform_stability(w, w2, model, {}, set, attack, rng), Error);
}
