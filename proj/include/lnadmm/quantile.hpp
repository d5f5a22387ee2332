// Sparse high-dimensional quantile regression with a log-L1 penalty.
//
//   Loss(x) = (1/n) sum_i l_q(w_i - phi_i^T x) + lambda sum_j beta log(1 + |x_j|/beta)
//
// solved as  min f(x) + g(y)  s.t.  Phi x - y = 0  with
//   f_c = lambda |x|_1 + indicator(|x|_2 <= R),  f_d = log-L1 remainder,
//   g_c = (1/n) sum_i l_q(w_i - y_i),            g_d = 0,
// Sigma = sigma I, H_f = sigma (gamma I - Phi^T Phi), H_g = 0.
#ifndef LNADMM_QUANTILE_HPP
#define LNADMM_QUANTILE_HPP

#include "lnadmm/admm.hpp"
#include "lnadmm/prox.hpp"

#include <cstdint>
#include <limits>
#include <vector>

namespace lnadmm::quantile {

struct ProblemSpec {
  Eigen::Index d = 2000;
  Eigen::Index n = 1000;
  Eigen::Index s_star = 10;
  double q = 0.5;
  double lambda = 0.1;
  double beta = 0.5;
  double R = std::numeric_limits<double>::infinity();
  double sigma = 1e-4;
  /// Noise degrees of freedom: finite > 0 draws Student t, +inf draws
  /// standard normal, 0 injects no noise.
  double noise_df = 5.0;
  std::uint64_t seed = 1;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
  LogL1PenaltySpec penalty() const { return {lambda, beta}; }
};

struct Dataset {
  Matrix Phi;     // n x d
  Vector w;       // n
  Vector x_true;  // d
  Vector noise;   // n, w - Phi x_true
};

/// Phi ~ iid N(0,1) drawn row by row, then noise z_i, both from one
/// std::mt19937_64 seeded with spec.seed. Student t draws are
/// N(0,1) / sqrt(chi2_df / df). x_true = (1,...,1,0,...,0) with s_star ones.
Dataset generate_dataset(const ProblemSpec& spec);

double objective(const ProblemSpec& spec, const Dataset& data, const Vector& x);

/// ||Phi||^2 from power iteration, inflated by (1 + 1e-6) so that
/// gamma I - Phi^T Phi stays PSD despite the estimation error.
double step_gamma(const Matrix& Phi);

/// Closed-form x-update: soft-threshold at lambda/(sigma gamma) of
///   x_t - Phi^T(Phi x_t - y_t + u_t/sigma)/gamma + lambda/(sigma gamma) x_t/(beta + |x_t|)
/// followed by projection onto the R-ball.
Vector x_update(const ProblemSpec& spec, const Dataset& data, double gamma, const Vector& x_t,
                const Vector& y_t, const Vector& u_t);

/// Closed-form y-update with anchor Phi x_{t+1} + u_t / sigma.
Vector y_update(const ProblemSpec& spec, const Dataset& data, const Vector& x_next,
                const Vector& u_t);

/// The same problem expressed for the generic engine.
AdmmProblem make_problem(const ProblemSpec& spec, const Dataset& data, double gamma);

/// Subgradient selectors. Nonzero coordinates use the derivative of the
/// full penalty; kinks use zero unless an anchor element is supplied.
Vector f_subgradient(const ProblemSpec& spec, const Vector& x);
Vector g_subgradient(const ProblemSpec& spec, const Dataset& data, const Vector& y);

/// Reference triple at the true signal: y* = Phi x*, u*_i = (1/n)(-q 1{z_i>0}
/// + (1-q) 1{z_i<0}), zeta* = u*, and xi* equal to the penalty derivative on
/// the support and -Phi^T u* (clamped to [-lambda, lambda]) off it.
struct ReferencePoint {
  Vector x, y, u, xi, zeta;
};
ReferencePoint reference_point(const ProblemSpec& spec, const Dataset& data);

struct SweepRun {
  double sigma = 0.0;
  RunResult result;
};

/// Runs the sigma sweep. The trace objective is Loss(x_t); the extra column
/// "objective_avg" is Loss(x_bar_t). Runs are distributed over `workers`
/// threads; each run is sequential.
std::vector<SweepRun> run_sweep(const ProblemSpec& base, const Dataset& data,
                                const std::vector<double>& sigmas, long iters, int workers = 1);

/// File name used for a sweep trace, e.g. "quantile_sigma5e-05.csv".
std::string trace_filename(double sigma);

}  // namespace lnadmm::quantile

#endif  // LNADMM_QUANTILE_HPP
