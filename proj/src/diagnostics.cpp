#include "lnadmm/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace lnadmm {

RscProbeResult rsc_probe(const AdmmProblem& p, const SubgradientSelector& subgrad_f,
                         const SubgradientSelector& subgrad_g, const Vector& x, const Vector& y,
                         const ProbeAnchor& a, long t) {
  if (x.size() != p.dim_x() || a.x.size() != p.dim_x() || a.xi.size() != p.dim_x())
    throw DimensionError("rsc_probe: x-block length mismatch");
  if (y.size() != p.dim_y() || a.y.size() != p.dim_y() || a.zeta.size() != p.dim_y())
    throw DimensionError("rsc_probe: y-block length mismatch");
  const Vector xi = subgrad_f(x);
  const Vector zeta = subgrad_g(y);
  const Vector r = p.residual(x, y);
  RscProbeResult out;
  out.t = t;
  out.lhs = (x - a.x).dot(xi - a.xi) + (y - a.y).dot(zeta - a.zeta);
  out.penalty = 0.5 * r.dot(p.sigma().cwiseProduct(r));
  out.dist_x = (x - a.x).norm();
  out.dist_y = (y - a.y).norm();
  return out;
}

FospResidual fosp_residuals(const AdmmProblem& p, const Vector& x, const Vector& y,
                            const Vector& u, const Vector& xi, const Vector& zeta) {
  if (u.size() != p.dim_u() || xi.size() != p.dim_x() || zeta.size() != p.dim_y())
    throw DimensionError("fosp_residuals: length mismatch");
  FospResidual out;
  out.primal = p.residual(x, y).norm();
  out.dual_x = (-(p.A().transpose() * u) - xi).norm();
  out.dual_y = (-(p.B().transpose() * u) - zeta).norm();
  return out;
}

std::vector<double> trace_column(const Trace& trace, const std::string& name, long t_lo,
                                 long t_hi) {
  std::optional<std::size_t> extra;
  if (name != "objective" && name != "primal_residual" && name != "alpha_t" && name != "seconds") {
    const auto& cols = trace.extra_columns();
    const auto it = std::find(cols.begin(), cols.end(), name);
    if (it == cols.end()) throw std::invalid_argument("trace has no column \"" + name + "\"");
    extra = std::size_t(it - cols.begin());
  }
  std::vector<double> out;
  for (const auto& r : trace.records()) {
    if (r.t < t_lo || (t_hi >= 0 && r.t > t_hi)) continue;
    std::optional<double> v;
    if (extra)
      v = r.extras.at(*extra);
    else if (name == "objective")
      v = r.objective;
    else if (name == "primal_residual")
      v = r.primal_residual;
    else if (name == "alpha_t")
      v = r.alpha;
    else
      v = r.seconds;
    if (v) out.push_back(*v);
  }
  return out;
}

double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of an empty range");
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + std::ptrdiff_t(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + std::ptrdiff_t(mid));
  return 0.5 * (lo + hi);
}

double stddev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double mean = 0.0;
  for (double a : v) mean += a;
  mean /= double(v.size());
  double ss = 0.0;
  for (double a : v) ss += (a - mean) * (a - mean);
  return std::sqrt(ss / double(v.size() - 1));
}

long count_increases(const std::vector<double>& v, double tol) {
  long n = 0;
  for (std::size_t k = 1; k < v.size(); ++k)
    if (v[k] > v[k - 1] + tol) ++n;
  return n;
}

TraceSummary summarize_trace(const Trace& trace) {
  TraceSummary s;
  s.rows = trace.size();
  if (trace.size() == 0) return s;
  const auto obj = trace_column(trace, "objective");
  if (!obj.empty()) {
    s.first_objective = obj.front();
    s.last_objective = obj.back();
    s.min_objective = *std::min_element(obj.begin(), obj.end());
  } else {
    s.first_objective = s.last_objective = s.min_objective =
        std::numeric_limits<double>::quiet_NaN();
  }
  const auto alpha = trace_column(trace, "alpha_t");
  if (!alpha.empty()) s.min_alpha = *std::min_element(alpha.begin(), alpha.end());
  s.final_residual = trace.records().back().primal_residual;
  s.seconds = trace.records().back().seconds;
  return s;
}

}  // namespace lnadmm
