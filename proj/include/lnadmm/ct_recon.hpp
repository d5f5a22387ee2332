// Spectral CT reconstruction by linearized ADMM with f == 0.
//
//   min_x g(Px),   g = g_c + g_d,   constraint Px - y = 0,
//
// with the diagonal preconditioners (Q_f)_kk = sigma sum_l P_lk and
// Sigma~_ll = sigma / sum_k P_lk. The x- and u-updates are matrix-vector
// products; the y-update separates over rays and runs a fixed number of
// Newton steps per ray with g_d linearized at y_t.
#ifndef LNADMM_CT_RECON_HPP
#define LNADMM_CT_RECON_HPP

#include "lnadmm/admm.hpp"
#include "lnadmm/ct_forward.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace lnadmm::ct {

struct Preconditioners {
  double sigma = 1.0;
  /// Per pixel; pixels no ray touches get sigma so the metric stays positive
  /// (their x-update direction is zero anyway).
  Vector Q_f;
  /// Per ray; requires every ray to have a positive row sum.
  Vector Sigma_tilde;
};
Preconditioners make_preconditioners(const SparseMatrix& P, double sigma);

/// A reconstruction instance restricted to the rays that hit the grid.
struct ReconProblem {
  SpectralModel model;  // ray_scale restricted to the active rays
  SparseMatrix P;       // active rows only
  CountMatrix counts;   // active columns only
  std::vector<Eigen::Index> active_rays;
  Preconditioners pre;
  int newton_iters = 10;

  Eigen::Index n_rays() const { return P.rows(); }
  Eigen::Index n_pixels() const { return P.cols(); }
  Eigen::Index n_materials() const { return model.n_materials(); }
};

/// Drops rays whose row of P sums to zero and builds the preconditioners.
ReconProblem make_recon_problem(const SpectralModel& model, const SparseMatrix& P,
                                const CountMatrix& counts, double sigma, int newton_iters = 10);

/// x_t + Q_f^{-1} P^T (Sigma~ (y_t - P x_t) - u_t)
RowMatrix ct_x_update(const ReconProblem& rp, const RowMatrix& x, const RowMatrix& y,
                      const RowMatrix& u);
/// Per-ray Newton solve of the y-subproblem started at y_t.
RowMatrix ct_y_update(const ReconProblem& rp, const RowMatrix& x_next, const RowMatrix& y,
                      const RowMatrix& u);
/// u_t + Sigma~ (P x_{t+1} - y_{t+1})
RowMatrix ct_u_update(const ReconProblem& rp, const RowMatrix& x_next, const RowMatrix& y_next,
                      const RowMatrix& u);

/// One ray's subproblem
///   phi(v) = g_{c,l}(v) + <v, lin> + (s/2) |v - center|^2
/// where g_{c,l} uses the model's spectral response times `scale`.
struct RaySubproblem {
  Vector lin;
  Vector center;
  double s = 1.0;
  double scale = 1.0;
};
double ray_objective(const SpectralModel& model, const RaySubproblem& sp, const Vector& v);
Vector ray_gradient(const SpectralModel& model, const RaySubproblem& sp, const Vector& v);
/// Undamped Newton iterations from `start`. The observer sees every iterate,
/// the start included (step 0).
Vector newton_solve(const SpectralModel& model, const RaySubproblem& sp, Vector start, int iters,
                    const std::function<void(int, const Vector&)>& observer = {});

/// Empirical RSC ratio
///   [<y - y*, grad_t - grad*> + 1/2 |residual|^2_W] / |y - y*|^2
/// or nullopt when |y - y*|^2 <= tol. Inputs are flattened alike.
std::optional<double> alpha_ratio(const Vector& y, const Vector& y_star, const Vector& grad_t,
                                  const Vector& grad_star, const Vector& residual,
                                  const Vector& weights, double tol);

/// CT form of the ratio with grad = grad g (qexp loss), residual P x_t - y_t
/// and weights Sigma~ (x) I; skip tolerance 1e-12 * n_rays * n_materials.
std::optional<double> alpha_t_diagnostic(const ReconProblem& rp, const RowMatrix& x,
                                         const RowMatrix& y, const RowMatrix& y_star,
                                         const RowMatrix& grad_star);

/// |grad g(y*)|_2 / |grad g(0)|_2. Throws std::domain_error if grad g(0) == 0.
double fosp_ratio(const SpectralModel& model, const RowMatrix& y_star, const CountMatrix& counts);

/// Generic-engine form: A = P (x) I, B = -I, c = 0, Sigma = Sigma~ (x) I,
/// H_f = Q_f (x) I - A^T Sigma A, H_g = 0, f = 0 and a Newton prox for g
/// with g_d linearized through grad_d. Vectors are row-major flattenings.
AdmmProblem make_admm_problem(const ReconProblem& rp);

struct CtState {
  long t = 0;
  RowMatrix x, y, u;
  KahanSum sum_x;
};
CtState ct_step(const ReconProblem& rp, const CtState& s);

struct CtRunOptions {
  long iters = 1000;
  /// Phantom projections for the alpha_t column; empty disables it.
  RowMatrix y_star;
  std::function<void(const CtState&, const CtState&)> observer;
};
struct CtRunResult {
  CtState state;
  RowMatrix x_avg;
  /// objective = Loss(P x_t) - saturated loss; extra column objective_avg
  /// evaluates the same at the running average.
  Trace trace;
};
CtRunResult run_ct_recon(const ReconProblem& rp, const CtRunOptions& options);

/// Loss(P x) - saturated_loss(counts) over the active rays.
double shifted_loss(const ReconProblem& rp, const RowMatrix& x);

struct CtExperimentConfig {
  Geometry geometry;
  SpectralConfig spectral;
  std::vector<double> sigmas{1.0, 10.0, 100.0};
  long iters = 1000;
  int newton_iters = 10;
  std::uint64_t seed = 1;
  std::string phantom_file;  // empty: builtin phantom
  bool alpha = true;
  int workers = 1;
};

struct CtSigmaRun {
  double sigma = 0.0;
  CtRunResult result;
};

struct CtExperimentResult {
  RowMatrix phantom;
  SparseMatrix P;
  SpectralModel model;
  CountMatrix counts;
  double fosp_ratio = 0.0;
  std::vector<CtSigmaRun> runs;
};

CtExperimentResult run_ct_experiment(const CtExperimentConfig& config);

/// File name used for a sweep trace, e.g. "ct_sigma10.csv".
std::string ct_trace_filename(double sigma);

}  // namespace lnadmm::ct

#endif  // LNADMM_CT_RECON_HPP
