// Independent reference computations used by the tests. None of these call
// into the library's solvers.
#ifndef LNADMM_TESTS_ORACLES_HPP
#define LNADMM_TESTS_ORACLES_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <vector>

namespace oracle {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Minimizer of a unimodal f on [a, b] by golden-section search. Works in
/// long double so that the resolution near a smooth minimum (about the
/// square root of the working epsilon) stays well below 1e-8.
inline long double golden_section(const std::function<long double(long double)>& f,
                                  long double a, long double b, int iters = 200) {
  const long double r = (std::sqrt(5.0L) - 1.0L) / 2.0L;
  long double c = b - r * (b - a), d = a + r * (b - a);
  long double fc = f(c), fd = f(d);
  for (int i = 0; i < iters; ++i) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - r * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + r * (b - a);
      fd = f(d);
    }
  }
  return (a + b) / 2.0L;
}

/// Root of a nondecreasing function on [a, b] by bisection in long double:
/// the minimizer of a convex function given its derivative. Resolves to the
/// spacing of long doubles near the root, where golden section on the value
/// stalls near sqrt(epsilon * |f| / f'').
inline long double bisect_increasing(const std::function<long double(long double)>& f,
                                     long double a, long double b, int iters = 200) {
  for (int i = 0; i < iters; ++i) {
    const long double m = (a + b) / 2.0L;
    if (m <= a || m >= b) break;
    (f(m) < 0.0L ? a : b) = m;
  }
  return (a + b) / 2.0L;
}

/// Central finite-difference gradient.
inline Vec fd_gradient(const std::function<double(const Vec&)>& f, const Vec& x, double h) {
  Vec g(x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    Vec xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    g[j] = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

inline double pinball(double q, double t) { return t > 0 ? q * t : (q - 1.0) * t; }

inline Vec shrink(const Vec& z, double t) {
  return z.unaryExpr([t](double a) { return a > t ? a - t : (a < -t ? a + t : 0.0); });
}

/// Minimizer of lambda |x|_1 + 1/2 |A x - w|^2 by proximal gradient.
inline Vec lasso_prox_gradient(const Mat& A, const Vec& w, double lambda, double tol = 1e-14,
                               int max_iter = 1000000) {
  const double L = Eigen::JacobiSVD<Mat>(A).singularValues()(0);
  const double step = 1.0 / (L * L);
  Vec x = Vec::Zero(A.cols());
  for (int k = 0; k < max_iter; ++k) {
    const Vec next = shrink(x - step * A.transpose() * (A * x - w), step * lambda);
    const double change = (next - x).lpNorm<Eigen::Infinity>();
    x = next;
    if (change < tol) break;
  }
  return x;
}

/// Minimizer of (1/n) sum l_q(w - Phi x) + lambda |x|_1 by accelerated
/// proximal gradient (with adaptive restart) on the Moreau-smoothed pinball
/// loss, continued down to smoothing 1e-8. The smoothed objective is within
/// delta/2 of the true one, so the returned point is optimal to ~1e-8.
inline Vec quantile_l1_prox_gradient(const Mat& Phi, const Vec& w, double q, double lambda) {
  const double n = double(Phi.rows());
  const double L0 = std::pow(Eigen::JacobiSVD<Mat>(Phi).singularValues()(0), 2) / n;
  Vec x = Vec::Zero(Phi.cols());
  for (double delta = 1e-1; delta >= 1e-8 * 0.99; delta /= 10.0) {
    const double L = L0 / delta;
    Vec y = x;
    double tk = 1.0;
    for (int k = 0; k < 200000; ++k) {
      const Vec r = w - Phi * y;
      const Vec g = r.unaryExpr([&](double t) {
        if (t > q * delta) return q;
        if (t < -(1.0 - q) * delta) return q - 1.0;
        return t / delta;
      });
      const Vec next = shrink(y + Phi.transpose() * g / (n * L), lambda / L);
      const double tn = (1.0 + std::sqrt(1.0 + 4.0 * tk * tk)) / 2.0;
      if ((y - next).dot(next - x) > 0.0) {
        y = next;
        tk = 1.0;
      } else {
        y = next + ((tk - 1.0) / tn) * (next - x);
        tk = tn;
      }
      const double change = (next - x).lpNorm<Eigen::Infinity>();
      x = next;
      if (change < 1e-13) break;
    }
  }
  return x;
}

/// Ray-pixel lengths by dense midpoint sampling along the line
/// s*(-sin, cos) + t*(cos, sin), t in [-T, T], binned into pixels of a grid
/// centered at the origin. Returns pixel -> length.
inline std::map<long, double> sampled_ray_lengths(long nx, long ny, double ps, double angle,
                                                  double offset, long samples = 100000) {
  const double w = nx * ps, h = ny * ps;
  const double T = 0.5 * std::hypot(w, h) + ps;
  const double dt = 2.0 * T / double(samples);
  const double c = std::cos(angle), s = std::sin(angle);
  std::map<long, double> out;
  for (long k = 0; k < samples; ++k) {
    const double t = -T + (double(k) + 0.5) * dt;
    const double px = -offset * s + t * c + 0.5 * w;
    const double py = offset * c + t * s + 0.5 * h;
    if (px < 0 || py < 0 || px >= w || py >= h) continue;
    const long ix = std::min(nx - 1, long(px / ps)), iy = std::min(ny - 1, long(py / ps));
    out[iy * nx + ix] += dt;
  }
  return out;
}

}  // namespace oracle

#endif  // LNADMM_TESTS_ORACLES_HPP
