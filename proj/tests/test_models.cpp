#include <doctest.h>

#include <cmath>
#include <vector>

#include "advlab/models.hpp"

using namespace advlab;

namespace {

LabeledSample random_sample(SeededRng& rng, std::size_t dim, std::size_t classes) {
  return {gaussian_vector(rng, dim), static_cast<int>(rng.index(classes))};
}

// Straightforward forward pass of the tanh MLP written from the layout
// description, without Eigen maps.
double naive_mlp_loss(const Vec& w, const Vec& z, int y, std::size_t d, std::size_t h,
                      std::size_t c) {
  std::size_t k = 0;
  std::vector<std::vector<double>> W1(h, std::vector<double>(d));
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < d; ++j) W1[i][j] = w[static_cast<Eigen::Index>(k++)];
  std::vector<double> b1(h);
  for (auto& v : b1) v = w[static_cast<Eigen::Index>(k++)];
  std::vector<std::vector<double>> W2(c, std::vector<double>(h));
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = 0; j < h; ++j) W2[i][j] = w[static_cast<Eigen::Index>(k++)];
  std::vector<double> b2(c);
  for (auto& v : b2) v = w[static_cast<Eigen::Index>(k++)];
  std::vector<double> a(h);
  for (std::size_t i = 0; i < h; ++i) {
    double s = b1[i];
    for (std::size_t j = 0; j < d; ++j) s += W1[i][j] * z[static_cast<Eigen::Index>(j)];
    a[i] = std::tanh(s);
  }
  std::vector<double> logit(c);
  double mx = -1e300;
  for (std::size_t i = 0; i < c; ++i) {
    double s = b2[i];
    for (std::size_t j = 0; j < h; ++j) s += W2[i][j] * a[j];
    logit[i] = s;
    mx = std::max(mx, s);
  }
  double se = 0;
  for (double v : logit) se += std::exp(v - mx);
  return mx + std::log(se) - logit[static_cast<std::size_t>(y)];
}

}  // namespace

TEST_CASE("loss values at trivial weights") {
  SUBCASE("softmax linear with zero weights gives log C") {
    for (std::size_t c : {2u, 3u, 5u}) {
      const auto m = SmoothModel::softmax_linear(4, c);
      SeededRng rng(1, 1);
      const auto s = random_sample(rng, 4, c);
      CHECK(m.value(Vec::Zero(static_cast<Eigen::Index>(m.param_dim())), gaussian_vector(rng, 4),
                    s) == doctest::Approx(std::log(static_cast<double>(c))).epsilon(1e-14));
    }
  }
  SUBCASE("scalar logistic at zero is log 2") {
    const auto m = SmoothModel::scalar_logistic();
    Vec x(1);
    x << 0.7;
    CHECK(m.value(Vec::Zero(1), Vec::Zero(1), {x, 1}) == doctest::Approx(std::log(2.0)));
  }
}

TEST_CASE("mlp forward pass matches an independent implementation") {
  const std::size_t d = 6, h = 5, c = 3;
  const auto m = SmoothModel::mlp(d, h, c);
  SeededRng rng(3, 1);
  for (int t = 0; t < 50; ++t) {
    const Vec w = gaussian_vector(rng, m.param_dim());
    const Vec delta = gaussian_vector(rng, d, 0.3);
    const auto s = random_sample(rng, d, c);
    CHECK(std::abs(m.value(w, delta, s) - naive_mlp_loss(w, s.x + delta, s.y, d, h, c)) < 1e-12);
  }
}

TEST_CASE("analytic gradients") {
  SUBCASE("scalar logistic weight gradient at zero") {
    const auto m = SmoothModel::scalar_logistic();
    Vec x(1);
    x << 1.0;
    const Vec g = m.grad_w(Vec::Zero(1), Vec::Zero(1), {x, 1});
    CHECK(g[0] == doctest::Approx(-0.5).epsilon(1e-15));
  }
  SUBCASE("softmax linear delta gradient is W^T (p - e_y)") {
    const std::size_t d = 4, c = 3;
    const auto m = SmoothModel::softmax_linear(d, c);
    SeededRng rng(5, 1);
    for (int t = 0; t < 20; ++t) {
      const Vec w = gaussian_vector(rng, m.param_dim());
      const Vec delta = gaussian_vector(rng, d, 0.2);
      const auto s = random_sample(rng, d, c);
      Mat W(c, d);
      for (std::size_t i = 0; i < c; ++i)
        for (std::size_t j = 0; j < d; ++j) W(i, j) = w[static_cast<Eigen::Index>(i * d + j)];
      const Vec b = w.tail(static_cast<Eigen::Index>(c));
      Vec logits = W * (s.x + delta) + b;
      Vec p = (logits.array() - logits.maxCoeff()).exp();
      p /= p.sum();
      p[s.y] -= 1.0;
      const Vec expected = W.transpose() * p;
      CHECK((m.grad_delta(w, delta, s) - expected).norm() < 1e-12);
    }
  }
  SUBCASE("softmax linear with zero weights has zero delta gradient") {
    const auto m = SmoothModel::softmax_linear(3, 2);
    SeededRng rng(6, 1);
    const auto s = random_sample(rng, 3, 2);
    CHECK(m.grad_delta(Vec::Zero(8), gaussian_vector(rng, 3), s).norm() == 0.0);
  }
  SUBCASE("central differences agree for every model kind") {
    SeededRng rng(7, 1);
    for (const auto& m : {SmoothModel::softmax_linear(5, 3), SmoothModel::mlp(5, 4, 2),
                          SmoothModel::scalar_logistic(3),
                          SmoothModel::mlp(4, 3, 2).with_bounded_loss(true)}) {
      CHECK(finite_diff_report(m, 30, 1e-5, rng) < 1e-6);
    }
  }
  SUBCASE("gradient vanishes at the minimum of a convex fit") {
    // a non-separable logistic problem has a unique interior minimizer
    const auto m = SmoothModel::softmax_linear(2, 2);
    std::vector<LabeledSample> data;
    SeededRng rng(8, 1);
    for (int i = 0; i < 40; ++i) {
      const int y = i % 2;
      Vec x = gaussian_vector(rng, 2);
      x[0] += y ? 0.5 : -0.5;
      data.push_back({x, y});
    }
    Vec w = Vec::Zero(static_cast<Eigen::Index>(m.param_dim()));
    std::vector<Vec> deltas(data.size(), Vec::Zero(2));
    for (int it = 0; it < 20000; ++it) {
      w -= 1.0 * batch_grads(m, w, deltas, data).mean_grad_w;
    }
    CHECK(batch_grads(m, w, deltas, data).mean_grad_w.norm() < 1e-8);
  }
}

TEST_CASE("loss is finite and nonnegative") {
  const auto m = SmoothModel::mlp(3, 4, 2);
  SeededRng rng(9, 1);
  for (int t = 0; t < 200; ++t) {
    const Vec w = gaussian_vector(rng, m.param_dim(), 10.0);
    const auto s = random_sample(rng, 3, 2);
    const double v = m.value(w, gaussian_vector(rng, 3, 5.0), s);
    CHECK(std::isfinite(v));
    CHECK(v >= 0.0);
  }
  const auto bounded = m.with_bounded_loss(true);
  const Vec w = gaussian_vector(rng, m.param_dim(), 10.0);
  const auto s = random_sample(rng, 3, 2);
  const double v = bounded.value(w, Vec::Zero(3), s);
  CHECK(v >= 0.0);
  CHECK(v < 1.0);
}

TEST_CASE("batch gradients") {
  const auto m = SmoothModel::mlp(4, 3, 2);
  SeededRng rng(10, 1);
  const Vec w = gaussian_vector(rng, m.param_dim());
  std::vector<LabeledSample> batch;
  std::vector<Vec> deltas;
  for (int j = 0; j < 8; ++j) {
    batch.push_back(random_sample(rng, 4, 2));
    deltas.push_back(gaussian_vector(rng, 4, 0.2));
  }
  SUBCASE("single sample equals the per-sample gradient") {
    const auto bg = batch_grads(m, w, std::span(deltas).first(1), std::span(batch).first(1));
    CHECK((bg.mean_grad_w - m.grad_w(w, deltas[0], batch[0])).norm() == 0.0);
    CHECK((bg.grad_delta[0] - m.grad_delta(w, deltas[0], batch[0])).norm() == 0.0);
  }
  SUBCASE("mean of eight equals the naive sum over eight") {
    Vec sum = Vec::Zero(static_cast<Eigen::Index>(m.param_dim()));
    for (int j = 0; j < 8; ++j) sum += m.grad_w(w, deltas[j], batch[j]);
    const auto bg = batch_grads(m, w, deltas, batch);
    CHECK((bg.mean_grad_w - sum / 8.0).norm() < 1e-12);
    CHECK(bg.grad_delta.size() == 8);
  }
  SUBCASE("duplicating the batch leaves the mean unchanged") {
    auto b2 = batch;
    auto d2 = deltas;
    b2.insert(b2.end(), batch.begin(), batch.end());
    d2.insert(d2.end(), deltas.begin(), deltas.end());
    CHECK((batch_grads(m, w, d2, b2).mean_grad_w - batch_grads(m, w, deltas, batch).mean_grad_w)
              .norm() < 1e-14);
  }
  SUBCASE("length mismatch and empty batches are rejected") {
    CHECK_THROWS_AS(batch_grads(m, w, std::span(deltas).first(3), batch), Error);
    CHECK_THROWS_AS(batch_grads(m, w, std::span<const Vec>{}, std::span<const LabeledSample>{}),
                    Error);
  }
}

TEST_CASE("dimension mismatches raise invalid input") {
  const auto m = SmoothModel::mlp(4, 3, 2);
  const Vec w = Vec::Zero(static_cast<Eigen::Index>(m.param_dim()));
  const LabeledSample s{Vec::Zero(4), 0};
  try {
    m.value(w, Vec::Zero(3), s);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidInput);
  }
  CHECK_THROWS_AS(m.grad_w(Vec::Zero(2), Vec::Zero(4), s), Error);
  CHECK_THROWS_AS(m.value(w, Vec::Zero(4), {Vec::Zero(4), 2}), Error);
}

TEST_CASE("dataset validation") {
  Dataset d;
  CHECK_THROWS_AS(d.validate(), Error);
  d.samples = {{Vec::Zero(2), 0}, {Vec::Zero(3), 1}};
  CHECK_THROWS_AS(d.validate(), Error);
  d.samples = {{Vec::Zero(2), 0}, {Vec::Zero(2), 1}};
  CHECK_NOTHROW(d.validate());
  CHECK(d.input_dim() == 2);
}

TEST_CASE("finite difference report rejects a nonpositive step") {
  SeededRng rng(1, 1);
  CHECK_THROWS_AS(finite_diff_report(SmoothModel::mlp(2, 2, 2), 3, 0.0, rng), Error);
}
