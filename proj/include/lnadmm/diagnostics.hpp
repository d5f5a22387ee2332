// Empirical probes of the restricted-strong-convexity and stationarity
// assumptions, plus trace summaries.
//
// The RSC probe evaluates one subgradient selection per point. The assumption
// quantifies over all subgradients, so a probe is evidence, not a proof.
#ifndef LNADMM_DIAGNOSTICS_HPP
#define LNADMM_DIAGNOSTICS_HPP

#include "lnadmm/admm.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace lnadmm {

using SubgradientSelector = std::function<Vector(const Vector&)>;

struct RscProbeResult {
  long t = 0;
  /// <x - x*, xi_x - xi*> + <y - y*, zeta_y - zeta*>
  double lhs = 0.0;
  /// 1/2 |Ax + By - c|^2_Sigma
  double penalty = 0.0;
  double dist_x = 0.0;
  double dist_y = 0.0;
};

struct ProbeAnchor {
  Vector x, y, xi, zeta;
};

RscProbeResult rsc_probe(const AdmmProblem& problem, const SubgradientSelector& subgrad_f,
                         const SubgradientSelector& subgrad_g, const Vector& x, const Vector& y,
                         const ProbeAnchor& anchor, long t = 0);

struct FospResidual {
  double primal = 0.0;  // |Ax* + By* - c|
  double dual_x = 0.0;  // |-A^T u* - xi*|
  double dual_y = 0.0;  // |-B^T u* - zeta*|
};

FospResidual fosp_residuals(const AdmmProblem& problem, const Vector& x, const Vector& y,
                            const Vector& u, const Vector& xi, const Vector& zeta);

/// Values of a trace column ("objective", "primal_residual", "alpha_t",
/// "seconds" or an extra column name) for iterations t in [t_lo, t_hi].
/// Missing optional cells are skipped.
std::vector<double> trace_column(const Trace& trace, const std::string& name, long t_lo = 1,
                                 long t_hi = -1);

double median(std::vector<double> v);
/// Sample standard deviation (n - 1 denominator).
double stddev(const std::vector<double>& v);
/// Number of k with v[k+1] > v[k] + tol.
long count_increases(const std::vector<double>& v, double tol);

struct TraceSummary {
  std::size_t rows = 0;
  double first_objective = 0.0;
  double last_objective = 0.0;
  double min_objective = 0.0;
  std::optional<double> min_alpha;
  double final_residual = 0.0;
  double seconds = 0.0;
};

TraceSummary summarize_trace(const Trace& trace);

}  // namespace lnadmm

#endif  // LNADMM_DIAGNOSTICS_HPP
