#include "lnadmm/prox.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <random>

using namespace lnadmm;

TEST_SUITE("prox") {

TEST_CASE("pinball loss values") {
  CHECK(quantile_loss(0.5, 2.0) == 1.0);
  CHECK(quantile_loss(0.9, -1.0) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(quantile_loss(0.3, 4.0) == doctest::Approx(1.2).epsilon(1e-15));
  CHECK(quantile_loss(0.3, 0.0) == 0.0);
  CHECK(QuantileLossSpec(0.25)(-4.0) == 3.0);
  CHECK_THROWS(QuantileLossSpec(0.0));
  CHECK_THROWS(QuantileLossSpec(1.5));
  CHECK_THROWS(LogL1PenaltySpec(-1.0, 0.5));
  CHECK_THROWS(LogL1PenaltySpec(0.1, 0.0));
}

TEST_CASE("soft threshold examples") {
  const Vector v{{0.25, -0.05, 0.0}};
  const Vector out = soft_threshold(v, 0.1);
  CHECK(out[0] == doctest::Approx(0.15).epsilon(1e-15));
  CHECK(out[1] == 0.0);
  CHECK(out[2] == 0.0);
  CHECK(soft_threshold(v, 0.0) == v);
}

TEST_CASE("soft threshold equals the brute-force prox on random inputs") {
  std::mt19937_64 gen(21);
  std::normal_distribution<double> normal;
  const double th = 0.3;
  double worst = 0.0;
  for (int rep = 0; rep < 1000; ++rep) {
    const double v = normal(gen);
    const long double ref = oracle::golden_section(
        [&](long double x) { return 0.5L * (x - v) * (x - v) + th * std::abs(x); },
        -std::abs(v) - 1.0, std::abs(v) + 1.0);
    const double got = soft_threshold(Vector::Constant(1, v), th)[0];
    worst = std::max(worst, double(std::abs(got - ref)));
    // First-order optimality of the 1-D problem.
    if (got != 0.0)
      CHECK(std::abs(got - v + th * (got > 0 ? 1.0 : -1.0)) <= 1e-8);
    else
      CHECK(std::abs(v) <= th + 1e-8);
  }
  CHECK(worst <= 1e-8);
}

TEST_CASE("soft threshold preserves signs and shrinks the sup norm") {
  std::mt19937_64 gen(22);
  std::normal_distribution<double> normal;
  for (int rep = 0; rep < 100; ++rep) {
    Vector v(17);
    for (auto& x : v) x = 2.0 * normal(gen);
    const Vector s = soft_threshold(v, 0.5);
    for (Eigen::Index i = 0; i < v.size(); ++i) CHECK((s[i] == 0.0 || s[i] * v[i] > 0.0));
    CHECK(s.lpNorm<Eigen::Infinity>() <= v.lpNorm<Eigen::Infinity>());
  }
}

TEST_CASE("ball projection") {
  const Vector v{{3.0, 4.0}};
  CHECK(ball_project(v, 10.0) == v);
  CHECK(ball_project(v, 5.0) == v);
  const Vector p = ball_project(v, 1.0);
  CHECK(p[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(p[1] == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(ball_project(v, std::numeric_limits<double>::infinity()) == v);
}

TEST_CASE("log-L1 remainder value and gradient") {
  const LogL1PenaltySpec spec(0.1, 0.5);
  const auto at0 = logl1_remainder(spec, Vector::Zero(4));
  CHECK(at0.value == 0.0);
  CHECK(at0.grad == Vector::Zero(4));
  CHECK(logl1_remainder(spec, Vector::Constant(1, 0.5)).grad[0] ==
        doctest::Approx(-0.05).epsilon(1e-15));

  const LogL1PenaltySpec l1(0.1, std::numeric_limits<double>::infinity());
  CHECK(l1.is_l1());
  const Vector x{{1e300, -2.0, 0.0}};
  const auto r = logl1_remainder(l1, x);
  CHECK(r.value == 0.0);
  CHECK(r.grad == Vector::Zero(3));
  CHECK(logl1_penalty(l1, Vector{{1.0, -2.0}}) == doctest::Approx(0.3).epsilon(1e-15));
}

TEST_CASE("log-L1 penalty matches its definition") {
  const LogL1PenaltySpec spec(0.1, 0.5);
  const Vector x{{1.0, -0.25, 0.0}};
  double ref = 0.0;
  for (double a : {0.0, -0.25, 1.0}) ref += 0.5 * std::log(1.0 + std::abs(a) / 0.5);
  CHECK(logl1_penalty(spec, x) == doctest::Approx(0.1 * ref).epsilon(1e-14));
  // The remainder plus lambda |x|_1 is the full penalty.
  CHECK(logl1_remainder(spec, x).value + 0.1 * x.lpNorm<1>() ==
        doctest::Approx(logl1_penalty(spec, x)).epsilon(1e-14));
}

TEST_CASE("log-L1 remainder gradient matches central differences") {
  std::mt19937_64 gen(23);
  std::normal_distribution<double> normal;
  const LogL1PenaltySpec spec(0.1, 0.5);
  for (int rep = 0; rep < 20; ++rep) {
    Vector x(8);
    for (auto& a : x) a = normal(gen);
    const Vector g = logl1_remainder(spec, x).grad;
    const Vector fd = oracle::fd_gradient(
        [&](const Vector& z) { return logl1_remainder(spec, z).value; }, x, 1e-6);
    CHECK((g - fd).norm() <= 1e-5 * g.norm());
    // Odd symmetry.
    CHECK((logl1_remainder(spec, -x).grad + g).lpNorm<Eigen::Infinity>() == 0.0);
    // Hessian diagonal against differences of the gradient.
    const Vector h = logl1_remainder_hessian_diag(spec, x);
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      Vector xp = x, xm = x;
      xp[j] += 1e-6;
      xm[j] -= 1e-6;
      const double ref =
          (logl1_remainder(spec, xp).grad[j] - logl1_remainder(spec, xm).grad[j]) / 2e-6;
      CHECK(h[j] == doctest::Approx(ref).epsilon(1e-5));
      CHECK(h[j] >= -spec.lambda / spec.beta);
    }
  }
}

TEST_CASE("qexp values") {
  const auto z = qexp(0.0);
  CHECK(z.value == 1.0);
  CHECK(z.d1 == 1.0);
  CHECK(z.d2 == 1.0);
  const auto one = qexp(1.0);
  CHECK(one.value == 2.5);
  CHECK(one.d1 == 2.0);
  CHECK(one.d2 == 1.0);
  const auto m = qexp(-1.0);
  CHECK(m.value == std::exp(-1.0));
  CHECK(m.d1 == std::exp(-1.0));
  CHECK(m.d2 == std::exp(-1.0));
}

TEST_CASE("qexp is twice continuously differentiable at zero") {
  const double tiny = std::numeric_limits<double>::denorm_min();
  const auto left = qexp(-tiny), right = qexp(tiny), mid = qexp(0.0);
  CHECK(left.value == right.value);
  CHECK(left.d1 == right.d1);
  CHECK(left.d2 == right.d2);
  CHECK(mid.value == right.value);
  // Positive branch polynomial and the exponential agree at 0 in all orders.
  CHECK(1.0 + 0.0 + 0.5 * 0.0 * 0.0 == std::exp(0.0));
  for (double t : {1e-3, 0.5, 3.0, 100.0}) CHECK(qexp(t).d2 <= 1.0);
}

TEST_CASE("quantile prox update examples") {
  CHECK(quantile_prox_update(0.0, -10.0, 0.5, 1, 1.0) == -9.5);
  CHECK(quantile_prox_update(0.0, 0.0, 0.5, 1, 1.0) == 0.0);
  CHECK(quantile_prox_update(0.0, 10.0, 0.5, 1, 1.0) == 9.5);
}

TEST_CASE("quantile prox update equals the brute-force minimizer") {
  std::mt19937_64 gen(24);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uq(0.05, 0.95), us(0.2, 5.0);
  std::uniform_int_distribution<int> un(1, 5);
  double worst = 0.0;
  for (int rep = 0; rep < 1000; ++rep) {
    const double w = normal(gen), anchor = normal(gen), q = uq(gen), sigma = us(gen);
    const int n = un(gen);
    const long double ref = oracle::golden_section(
        [&](long double y) {
          const long double t = w - y;
          const long double l = t > 0 ? q * t : (q - 1.0L) * t;
          return l / n + 0.5L * sigma * y * y - y * sigma * anchor;
        },
        -std::abs(w) - std::abs(anchor) - 10.0, std::abs(w) + std::abs(anchor) + 10.0);
    const double got = quantile_prox_update(w, anchor, q, n, sigma);
    worst = std::max(worst, double(std::abs(got - ref)));
    // Subgradient residual: 0 in -(1/n) dl_q(w - y) + sigma (y - anchor).
    const double g = sigma * (got - anchor);
    if (got < w)
      CHECK(std::abs(g - q / n) <= 1e-8);
    else if (got > w)
      CHECK(std::abs(g + (1.0 - q) / n) <= 1e-8);
    else
      CHECK((g >= -(1.0 - q) / n - 1e-8 && g <= q / n + 1e-8));
  }
  CHECK(worst <= 1e-8);
}

TEST_CASE("quantile prox update is nonexpansive in the anchor") {
  std::mt19937_64 gen(25);
  std::normal_distribution<double> normal;
  for (int rep = 0; rep < 1000; ++rep) {
    const double w = normal(gen), a1 = normal(gen), a2 = normal(gen);
    const double d = std::abs(quantile_prox_update(w, a1, 0.3, 4, 0.8) -
                              quantile_prox_update(w, a2, 0.3, 4, 0.8));
    CHECK(d <= std::abs(a1 - a2) + 1e-15);
  }
}

}  // TEST_SUITE
