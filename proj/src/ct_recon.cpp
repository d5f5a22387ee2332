#include "lnadmm/ct_recon.hpp"

#include "ct_kernel.hpp"
#include "parallel.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace lnadmm::ct {

namespace {

using detail::SmallMat;
using detail::SmallVec;

Eigen::Map<const Vector> flat(const RowMatrix& m) { return {m.data(), m.size()}; }

RowMatrix unflat(const Vector& v, Eigen::Index rows, Eigen::Index cols) {
  return Eigen::Map<const RowMatrix>(v.data(), rows, cols);
}

// Newton iterations on g_{c,l}(v) + <v, lin> + (s/2)|v - center|^2.
template <typename Observer>
void newton_inplace(detail::RayKernel& k, const SmallVec& lin, const SmallVec& center, double s,
                    double scale, SmallVec& v, int iters, Observer&& observe) {
  for (int i = 0; i < iters; ++i) {
    k.eval(v.data(), scale, true, false);
    const SmallVec grad = k.grad_c + lin + s * (v - center);
    SmallMat H = k.hess_c;
    H.diagonal().array() += s;
    Eigen::LLT<SmallMat> llt(H);
    if (llt.info() != Eigen::Success) throw std::runtime_error("Newton: singular inner Hessian");
    v -= llt.solve(grad);
    if (!v.allFinite()) throw std::runtime_error("Newton: non-finite iterate");
    observe(i + 1, v);
  }
}

void check_shape(const ReconProblem& rp, const RowMatrix& m, Eigen::Index rows, const char* what) {
  if (m.rows() != rows || m.cols() != rp.n_materials())
    throw DimensionError(std::string("ct: ") + what + " has wrong shape");
}

}  // namespace

Preconditioners make_preconditioners(const SparseMatrix& P, double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma))
    throw std::invalid_argument("ct.sigma: must be finite and > 0");
  Preconditioners pre;
  pre.sigma = sigma;
  const Vector rows = P * Vector::Ones(P.cols());
  const Vector cols = P.transpose() * Vector::Ones(P.rows());
  if (rows.size() > 0 && !(rows.minCoeff() > 0.0))
    throw std::invalid_argument("make_preconditioners: a ray misses the grid");
  pre.Sigma_tilde = sigma * rows.cwiseInverse();
  pre.Q_f = cols.unaryExpr([sigma](double c) { return c > 0.0 ? sigma * c : sigma; });
  return pre;
}

ReconProblem make_recon_problem(const SpectralModel& model, const SparseMatrix& P,
                                const CountMatrix& counts, double sigma, int newton_iters) {
  if (newton_iters < 1) throw std::invalid_argument("ct.newton_iters: must be >= 1");
  if (counts.cols() != P.rows() || counts.rows() != model.n_windows())
    throw DimensionError("make_recon_problem: counts do not match rays/windows");
  if (model.ray_scale.size() != P.rows())
    throw DimensionError("make_recon_problem: ray_scale does not match P");

  ReconProblem rp;
  rp.newton_iters = newton_iters;
  std::vector<Triplet> trips;
  for (Eigen::Index l = 0; l < P.rows(); ++l) {
    double sum = 0.0;
    for (SparseMatrix::InnerIterator it(P, l); it; ++it) sum += it.value();
    if (!(sum > 0.0)) continue;
    const auto row = Eigen::Index(rp.active_rays.size());
    for (SparseMatrix::InnerIterator it(P, l); it; ++it)
      trips.emplace_back(row, it.col(), it.value());
    rp.active_rays.push_back(l);
  }
  const auto na = Eigen::Index(rp.active_rays.size());
  rp.P = make_sparse(na, P.cols(), trips);
  rp.model = model;
  rp.model.ray_scale.resize(na);
  rp.counts.resize(counts.rows(), na);
  for (Eigen::Index r = 0; r < na; ++r) {
    rp.model.ray_scale[r] = model.ray_scale[rp.active_rays[std::size_t(r)]];
    rp.counts.col(r) = counts.col(rp.active_rays[std::size_t(r)]);
  }
  rp.pre = make_preconditioners(rp.P, sigma);
  return rp;
}

RowMatrix ct_x_update(const ReconProblem& rp, const RowMatrix& x, const RowMatrix& y,
                      const RowMatrix& u) {
  check_shape(rp, x, rp.n_pixels(), "x");
  check_shape(rp, y, rp.n_rays(), "y");
  check_shape(rp, u, rp.n_rays(), "u");
  const RowMatrix r = rp.pre.Sigma_tilde.asDiagonal() * (y - rp.P * x) - u;
  RowMatrix back = rp.P.transpose() * r;
  return x + rp.pre.Q_f.cwiseInverse().asDiagonal() * back;
}

RowMatrix ct_y_update(const ReconProblem& rp, const RowMatrix& x_next, const RowMatrix& y,
                      const RowMatrix& u) {
  check_shape(rp, x_next, rp.n_pixels(), "x");
  check_shape(rp, y, rp.n_rays(), "y");
  check_shape(rp, u, rp.n_rays(), "u");
  const RowMatrix Px = rp.P * x_next;
  const Eigen::Index nm = rp.n_materials();
  RowMatrix out(y.rows(), nm);
  detail::RayKernel k(rp.model);
  for (Eigen::Index l = 0; l < rp.n_rays(); ++l) {
    const double scale = rp.model.ray_scale[l];
    k.eval(y.row(l).data(), scale, false, true);
    const SmallVec lin = k.gd_grad(rp.counts.col(l)) - u.row(l).transpose();
    const SmallVec center = Px.row(l).transpose();
    SmallVec v = y.row(l).transpose();
    newton_inplace(k, lin, center, rp.pre.Sigma_tilde[l], scale, v, rp.newton_iters,
                   [](int, const SmallVec&) {});
    out.row(l) = v.transpose();
  }
  return out;
}

RowMatrix ct_u_update(const ReconProblem& rp, const RowMatrix& x_next, const RowMatrix& y_next,
                      const RowMatrix& u) {
  check_shape(rp, x_next, rp.n_pixels(), "x");
  check_shape(rp, y_next, rp.n_rays(), "y");
  check_shape(rp, u, rp.n_rays(), "u");
  return u + rp.pre.Sigma_tilde.asDiagonal() * (rp.P * x_next - y_next);
}

double ray_objective(const SpectralModel& model, const RaySubproblem& sp, const Vector& v) {
  detail::RayKernel k(model);
  k.eval(v.data(), sp.scale, false, false);
  return k.gc + sp.lin.dot(v) + 0.5 * sp.s * (v - sp.center).squaredNorm();
}

Vector ray_gradient(const SpectralModel& model, const RaySubproblem& sp, const Vector& v) {
  detail::RayKernel k(model);
  k.eval(v.data(), sp.scale, false, false);
  return k.grad_c + sp.lin + sp.s * (v - sp.center);
}

Vector newton_solve(const SpectralModel& model, const RaySubproblem& sp, Vector start, int iters,
                    const std::function<void(int, const Vector&)>& observer) {
  const Eigen::Index nm = model.n_materials();
  if (sp.lin.size() != nm || sp.center.size() != nm || start.size() != nm)
    throw DimensionError("newton_solve: vectors must have one entry per material");
  if (!(sp.s > 0.0)) throw std::invalid_argument("newton_solve: s must be > 0");
  detail::RayKernel k(model);
  SmallVec v = start;
  if (observer) observer(0, start);
  newton_inplace(k, sp.lin, sp.center, sp.s, sp.scale, v, iters, [&](int i, const SmallVec& w) {
    if (observer) observer(i, Vector(w));
  });
  return v;
}

std::optional<double> alpha_ratio(const Vector& y, const Vector& y_star, const Vector& grad_t,
                                  const Vector& grad_star, const Vector& residual,
                                  const Vector& weights, double tol) {
  if (y.size() != y_star.size() || grad_t.size() != y.size() || grad_star.size() != y.size())
    throw DimensionError("alpha_ratio: length mismatch");
  if (residual.size() != weights.size()) throw DimensionError("alpha_ratio: weight mismatch");
  const Vector dy = y - y_star;
  const double denom = dy.squaredNorm();
  if (!(denom > tol)) return std::nullopt;
  const double num =
      dy.dot(grad_t - grad_star) + 0.5 * residual.dot(weights.cwiseProduct(residual));
  const double a = num / denom;
  if (!std::isfinite(a)) return std::nullopt;
  return a;
}

std::optional<double> alpha_t_diagnostic(const ReconProblem& rp, const RowMatrix& x,
                                         const RowMatrix& y, const RowMatrix& y_star,
                                         const RowMatrix& grad_star) {
  check_shape(rp, y_star, rp.n_rays(), "y_star");
  check_shape(rp, grad_star, rp.n_rays(), "grad_star");
  const RowMatrix grad_t = loss_gradient(rp.model, y, rp.counts);
  const RowMatrix resid = rp.P * x - y;
  RowMatrix w(resid.rows(), resid.cols());
  w.colwise() = rp.pre.Sigma_tilde;
  const double tol = 1e-12 * double(rp.n_rays()) * double(rp.n_materials());
  return alpha_ratio(flat(y), flat(y_star), flat(grad_t), flat(grad_star), flat(resid), flat(w),
                     tol);
}

double fosp_ratio(const SpectralModel& model, const RowMatrix& y_star, const CountMatrix& counts) {
  const double at_star = loss_gradient(model, y_star, counts).norm();
  const double at_zero =
      loss_gradient(model, RowMatrix::Zero(y_star.rows(), y_star.cols()), counts).norm();
  if (!(at_zero > 0.0)) throw std::domain_error("fosp_ratio: gradient at zero vanishes");
  return at_star / at_zero;
}

AdmmProblem make_admm_problem(const ReconProblem& rp) {
  const Eigen::Index nm = rp.n_materials(), nl = rp.n_rays();
  SparseMatrix A = kron_identity(rp.P, nm);
  SparseMatrix B(nl * nm, nl * nm);
  B.setIdentity();
  B *= -1.0;
  const Vector sigma = rp.pre.Sigma_tilde.replicate(1, nm).transpose().reshaped();
  const Vector qf = rp.pre.Q_f.replicate(1, nm).transpose().reshaped();

  CompositeObjective g;
  g.grad_d = [&rp, nl, nm](const Vector& y) -> Vector {
    return flat(loss_gradient_d(rp.model, unflat(y, nl, nm), rp.counts));
  };
  g.value = [&rp, nl, nm](const Vector& y) {
    return loss(rp.model, unflat(y, nl, nm), rp.counts);
  };
  g.prox_step = [&rp, nl, nm](const Vector& lin, const Metric& D, const Vector& center) {
    if (!D.is_diagonal()) throw std::invalid_argument("CT prox needs a diagonal metric");
    detail::RayKernel k(rp.model);
    Vector out(center.size());
    for (Eigen::Index l = 0; l < nl; ++l) {
      const SmallVec c = center.segment(l * nm, nm);
      SmallVec v = c;
      newton_inplace(k, lin.segment(l * nm, nm), c, D.diag()[l * nm], rp.model.ray_scale[l], v,
                     rp.newton_iters, [](int, const SmallVec&) {});
      out.segment(l * nm, nm) = v;
    }
    return out;
  };

  return AdmmProblem(std::move(A), std::move(B), Vector::Zero(nl * nm), sigma,
                     StepSize::linearized(qf), StepSize::zero(), zero_objective(), std::move(g));
}

CtState ct_step(const ReconProblem& rp, const CtState& s) {
  CtState next;
  next.t = s.t + 1;
  try {
    next.x = ct_x_update(rp, s.x, s.y, s.u);
    next.y = ct_y_update(rp, next.x, s.y, s.u);
    next.u = ct_u_update(rp, next.x, next.y, s.u);
  } catch (const DimensionError&) {
    throw;
  } catch (const std::exception& e) {
    throw NumericalError(next.t, e.what());
  }
  if (!next.x.allFinite() || !next.y.allFinite() || !next.u.allFinite())
    throw NumericalError(next.t, "non-finite iterate");
  next.sum_x = s.sum_x;
  next.sum_x.add(flat(next.x));
  return next;
}

double shifted_loss(const ReconProblem& rp, const RowMatrix& x) {
  return loss(rp.model, rp.P * x, rp.counts) - saturated_loss(rp.counts);
}

CtRunResult run_ct_recon(const ReconProblem& rp, const CtRunOptions& opt) {
  if (opt.iters < 1) throw std::invalid_argument("ct.iters: must be >= 1");
  const Eigen::Index nm = rp.n_materials(), nk = rp.n_pixels(), nl = rp.n_rays();
  const bool with_alpha = opt.y_star.size() > 0;
  RowMatrix grad_star;
  if (with_alpha) grad_star = loss_gradient(rp.model, opt.y_star, rp.counts);

  CtRunResult out;
  out.trace = Trace({"objective_avg"});
  out.state.x = RowMatrix::Zero(nk, nm);
  out.state.y = RowMatrix::Zero(nl, nm);
  out.state.u = RowMatrix::Zero(nl, nm);
  out.state.sum_x = KahanSum(nk * nm);
  const double saturated = saturated_loss(rp.counts);
  const auto start = std::chrono::steady_clock::now();

  for (long k = 0; k < opt.iters; ++k) {
    CtState next = ct_step(rp, out.state);
    if (opt.observer) opt.observer(out.state, next);
    out.state = std::move(next);
    const CtState& s = out.state;
    const RowMatrix x_avg = unflat(s.sum_x.sum() / double(s.t), nk, nm);

    TraceRecord rec;
    rec.t = s.t;
    rec.objective = loss(rp.model, rp.P * s.x, rp.counts) - saturated;
    rec.primal_residual = (rp.P * s.x - s.y).norm();
    if (with_alpha) rec.alpha = alpha_t_diagnostic(rp, s.x, s.y, opt.y_star, grad_star);
    rec.extras = {loss(rp.model, rp.P * x_avg, rp.counts) - saturated};
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!std::isfinite(*rec.objective) || !std::isfinite(rec.extras[0]))
      throw NumericalError(s.t, "non-finite loss");
    out.trace.push(std::move(rec));
  }
  out.x_avg = unflat(out.state.sum_x.sum() / double(out.state.t), nk, nm);
  return out;
}

CtExperimentResult run_ct_experiment(const CtExperimentConfig& cfg) {
  cfg.geometry.validate();
  if (cfg.sigmas.empty()) throw std::invalid_argument("ct.sigma_list: must not be empty");
  CtExperimentResult res;
  res.P = build_projector(cfg.geometry);
  res.model = build_spectral_model(cfg.spectral, cfg.geometry.n_rays());
  if (cfg.phantom_file.empty()) {
    if (res.model.n_materials() != 3)
      throw std::invalid_argument("ct.materials: the builtin phantom needs exactly 3 materials");
    res.phantom = builtin_phantom(cfg.geometry);
  } else {
    std::ifstream f(cfg.phantom_file);
    if (!f) throw std::runtime_error("cannot open " + cfg.phantom_file);
    res.phantom = read_phantom(f, cfg.geometry, res.model.n_materials());
  }
  res.counts = forward_counts(res.model, res.P, res.phantom, cfg.seed);

  std::vector<ReconProblem> problems;
  for (double sigma : cfg.sigmas)
    problems.push_back(make_recon_problem(res.model, res.P, res.counts, sigma, cfg.newton_iters));
  const RowMatrix y_star = problems.front().P * res.phantom;
  res.fosp_ratio = fosp_ratio(problems.front().model, y_star, problems.front().counts);

  res.runs.resize(cfg.sigmas.size());
  lnadmm::detail::parallel_for(cfg.sigmas.size(), cfg.workers, [&](std::size_t k) {
    CtRunOptions opt;
    opt.iters = cfg.iters;
    if (cfg.alpha) opt.y_star = y_star;
    res.runs[k] = {cfg.sigmas[k], run_ct_recon(problems[k], opt)};
  });
  return res;
}

std::string ct_trace_filename(double sigma) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "ct_sigma%g.csv", sigma);
  return buf;
}

}  // namespace lnadmm::ct
