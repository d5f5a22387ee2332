#include "lnadmm/quantile.hpp"

#include "parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <stdexcept>

namespace lnadmm::quantile {

void ProblemSpec::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument("quantile." + field + ": " + why);
  };
  if (d < 1) fail("d", "must be >= 1");
  if (n < 1) fail("n", "must be >= 1");
  if (s_star < 0 || s_star > d) fail("s_star", "must lie in [0, d]");
  if (!(q > 0.0 && q < 1.0)) fail("q", "must lie in (0, 1)");
  if (!(lambda > 0.0) || !std::isfinite(lambda)) fail("lambda", "must be finite and > 0");
  if (!(beta > 0.0)) fail("beta", "must be > 0 (inf allowed)");
  if (!(R > 0.0)) fail("R", "must be > 0 (inf allowed)");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) fail("sigma", "must be finite and > 0");
  if (!(noise_df >= 0.0)) fail("noise_df", "must be >= 0 (0 = no noise, inf = Gaussian)");
}

Dataset generate_dataset(const ProblemSpec& spec) {
  spec.validate();
  std::mt19937_64 gen(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  Dataset data;
  data.Phi.resize(spec.n, spec.d);
  for (Eigen::Index i = 0; i < spec.n; ++i)
    for (Eigen::Index j = 0; j < spec.d; ++j) data.Phi(i, j) = normal(gen);

  data.x_true = Vector::Zero(spec.d);
  data.x_true.head(spec.s_star).setOnes();

  data.noise = Vector::Zero(spec.n);
  if (spec.noise_df > 0.0) {
    const bool gaussian = std::isinf(spec.noise_df);
    std::chi_squared_distribution<double> chi2(gaussian ? 1.0 : spec.noise_df);
    for (Eigen::Index i = 0; i < spec.n; ++i) {
      const double z = normal(gen);
      data.noise[i] = gaussian ? z : z / std::sqrt(chi2(gen) / spec.noise_df);
    }
  }
  data.w = data.Phi * data.x_true + data.noise;
  return data;
}

double objective(const ProblemSpec& spec, const Dataset& data, const Vector& x) {
  const Vector r = data.w - data.Phi * x;
  double loss = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i) loss += quantile_loss(spec.q, r[i]);
  return loss / double(spec.n) + logl1_penalty(spec.penalty(), x);
}

double step_gamma(const Matrix& Phi) {
  const double norm = spectral_norm(Phi, 1e-12);
  return norm * norm * (1.0 + 1e-6);
}

Vector x_update(const ProblemSpec& spec, const Dataset& data, double gamma, const Vector& x_t,
                const Vector& y_t, const Vector& u_t) {
  const double sg = spec.sigma * gamma;
  const Vector back = data.Phi.transpose() * (data.Phi * x_t - y_t + u_t / spec.sigma);
  Vector tilde = x_t - back / gamma;
  if (!std::isinf(spec.beta))
    tilde += (spec.lambda / sg) *
             x_t.unaryExpr([&](double v) { return v / (spec.beta + std::abs(v)); });
  return ball_project(soft_threshold(tilde, spec.lambda / sg), spec.R);
}

Vector y_update(const ProblemSpec& spec, const Dataset& data, const Vector& x_next,
                const Vector& u_t) {
  const Vector anchor = data.Phi * x_next + u_t / spec.sigma;
  Vector y(anchor.size());
  for (Eigen::Index i = 0; i < y.size(); ++i)
    y[i] = quantile_prox_update(data.w[i], anchor[i], spec.q, spec.n, spec.sigma);
  return y;
}

AdmmProblem make_problem(const ProblemSpec& spec, const Dataset& data, double gamma) {
  spec.validate();
  const Eigen::Index n = spec.n, d = spec.d;
  SparseMatrix A = data.Phi.sparseView(0.0, 0.0);
  A.makeCompressed();
  SparseMatrix B(n, n);
  B.setIdentity();
  B *= -1.0;

  const LogL1PenaltySpec pen = spec.penalty();
  CompositeObjective f;
  f.prox_step = [pen, R = spec.R](const Vector& lin, const Metric& D, const Vector& center) {
    if (!D.is_diagonal()) throw std::invalid_argument("quantile x prox needs a diagonal metric");
    const Vector z = center - lin.cwiseQuotient(D.diag());
    const Vector th = D.diag().cwiseInverse() * pen.lambda;
    Vector v(z.size());
    for (Eigen::Index j = 0; j < z.size(); ++j)
      v[j] = z[j] > th[j] ? z[j] - th[j] : (z[j] < -th[j] ? z[j] + th[j] : 0.0);
    return ball_project(v, R);
  };
  f.grad_d = [pen](const Vector& x) { return logl1_remainder(pen, x).grad; };
  f.hess_d = [pen](const Vector& x) -> Matrix {
    return logl1_remainder_hessian_diag(pen, x).asDiagonal();
  };
  f.value = [pen](const Vector& x) { return logl1_penalty(pen, x); };

  CompositeObjective g;
  g.prox_step = [w = data.w, q = spec.q, n](const Vector& lin, const Metric& D,
                                            const Vector& center) {
    if (!D.is_diagonal()) throw std::invalid_argument("quantile y prox needs a diagonal metric");
    const Vector& dg = D.diag();
    Vector y(center.size());
    for (Eigen::Index i = 0; i < y.size(); ++i)
      y[i] = quantile_prox_update(w[i], center[i] - lin[i] / dg[i], q, n, dg[i]);
    return y;
  };
  g.value = [w = data.w, q = spec.q, n](const Vector& y) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) s += quantile_loss(q, w[i] - y[i]);
    return s / double(n);
  };

  return AdmmProblem(std::move(A), std::move(B), Vector::Zero(n), Vector::Constant(n, spec.sigma),
                     StepSize::linearized(Vector::Constant(d, spec.sigma * gamma)), StepSize::zero(),
                     std::move(f), std::move(g));
}

Vector f_subgradient(const ProblemSpec& spec, const Vector& x) {
  return x.unaryExpr([&](double v) {
    if (v == 0.0) return 0.0;
    const double s = v > 0.0 ? 1.0 : -1.0;
    return std::isinf(spec.beta) ? spec.lambda * s
                                 : spec.lambda * spec.beta * s / (spec.beta + std::abs(v));
  });
}

Vector g_subgradient(const ProblemSpec& spec, const Dataset& data, const Vector& y) {
  Vector z(y.size());
  const double inv_n = 1.0 / double(spec.n);
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double r = data.w[i] - y[i];
    z[i] = r > 0.0 ? -spec.q * inv_n : (r < 0.0 ? (1.0 - spec.q) * inv_n : 0.0);
  }
  return z;
}

ReferencePoint reference_point(const ProblemSpec& spec, const Dataset& data) {
  ReferencePoint ref;
  ref.x = data.x_true;
  ref.y = data.Phi * data.x_true;
  const double inv_n = 1.0 / double(spec.n);
  ref.u = data.noise.unaryExpr([&](double z) {
    return inv_n * (z > 0.0 ? -spec.q : (z < 0.0 ? 1.0 - spec.q : 0.0));
  });
  ref.zeta = ref.u;
  const Vector back = -(data.Phi.transpose() * ref.u);
  ref.xi = f_subgradient(spec, ref.x);
  for (Eigen::Index j = 0; j < ref.x.size(); ++j)
    if (ref.x[j] == 0.0) ref.xi[j] = std::clamp(back[j], -spec.lambda, spec.lambda);
  return ref;
}

std::vector<SweepRun> run_sweep(const ProblemSpec& base, const Dataset& data,
                                const std::vector<double>& sigmas, long iters, int workers) {
  const double gamma = step_gamma(data.Phi);
  std::vector<SweepRun> runs(sigmas.size());
  detail::parallel_for(sigmas.size(), workers, [&](std::size_t k) {
    ProblemSpec spec = base;
    spec.sigma = sigmas[k];
    const AdmmProblem problem = make_problem(spec, data, gamma);
    RunOptions opt;
    opt.iters = iters;
    opt.objective = [&](const AdmmState& s) { return objective(spec, data, s.x); };
    opt.extra_columns = {"objective_avg"};
    opt.extras = [&](const AdmmState& s) {
      return std::vector<double>{objective(spec, data, s.x_avg())};
    };
    AdmmState init(Vector::Zero(spec.d), Vector::Zero(spec.n), Vector::Zero(spec.n));
    runs[k] = {spec.sigma, run(problem, std::move(init), opt)};
  });
  return runs;
}

std::string trace_filename(double sigma) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "quantile_sigma%g.csv", sigma);
  return buf;
}

}  // namespace lnadmm::quantile
