#include "lnadmm/admm.hpp"

#include "lnadmm/prox.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace lnadmm {

// ---------------------------------------------------------------------------
// Metric / StepSize

const Vector& Metric::diag() const {
  if (!is_diagonal()) throw std::logic_error("Metric::diag on a dense metric");
  return std::get<Vector>(rep_);
}

Matrix Metric::to_dense() const {
  if (is_diagonal()) return std::get<Vector>(rep_).asDiagonal();
  return std::get<Matrix>(rep_);
}

Vector Metric::apply(const Vector& v) const {
  if (is_diagonal()) return std::get<Vector>(rep_).cwiseProduct(v);
  return std::get<Matrix>(rep_) * v;
}

Vector Metric::solve(const Vector& rhs) const {
  if (is_diagonal()) return rhs.cwiseQuotient(std::get<Vector>(rep_));
  return std::get<Matrix>(rep_).ldlt().solve(rhs);
}

Eigen::Index Metric::size() const {
  return is_diagonal() ? std::get<Vector>(rep_).size() : std::get<Matrix>(rep_).rows();
}

namespace {

SparseMatrix penalty_gram(const SparseMatrix& M, const Vector& sigma) {
  SparseMatrix SM = sigma.asDiagonal() * M;
  return SparseMatrix(M.transpose() * SM);
}

bool is_diagonal_pattern(const SparseMatrix& G) {
  for (Eigen::Index r = 0; r < G.outerSize(); ++r)
    for (SparseMatrix::InnerIterator it(G, r); it; ++it)
      if (it.row() != it.col() && it.value() != 0.0) return false;
  return true;
}

double pd_tolerance(const Matrix& m) {
  return 1e-12 * std::max(1.0, m.cwiseAbs().maxCoeff());
}

Metric block_metric(const SparseMatrix& M, const Vector& sigma, const StepSize& H,
                    const char* block) {
  const Eigen::Index n = M.cols();
  const std::string name(block);
  switch (H.kind()) {
    case StepSize::Kind::Diagonal:
    case StepSize::Kind::Linearized:
      if (H.diag().size() != n)
        throw DimensionError("H_" + name + " diagonal has length " +
                             std::to_string(H.diag().size()) + ", expected " + std::to_string(n));
      break;
    case StepSize::Kind::Dense:
      if (H.matrix().rows() != n || H.matrix().cols() != n)
        throw DimensionError("H_" + name + " has wrong shape");
      break;
    case StepSize::Kind::Zero:
      break;
  }

  if (H.kind() == StepSize::Kind::Linearized) {
    if (!(H.diag().array() > 0.0).all())
      throw std::invalid_argument("H_" + name + " + M^T Sigma M must be positive definite");
    return Metric::diagonal(H.diag());
  }

  const SparseMatrix G = penalty_gram(M, sigma);
  if (H.kind() != StepSize::Kind::Dense && is_diagonal_pattern(G)) {
    Vector d = G.diagonal();
    if (H.kind() == StepSize::Kind::Diagonal) d += H.diag();
    if (!(d.array() > 0.0).all())
      throw std::invalid_argument("H_" + name + " + M^T Sigma M must be positive definite");
    return Metric::diagonal(std::move(d));
  }
  Matrix D = Matrix(G) + H.to_dense(M, sigma);
  D = 0.5 * (D + D.transpose()).eval();
  if (!(min_eigenvalue(D) > pd_tolerance(D)))
    throw std::invalid_argument("H_" + name + " + M^T Sigma M must be positive definite");
  return Metric::dense(std::move(D));
}

}  // namespace

Matrix StepSize::to_dense(const SparseMatrix& M, const Vector& sigma) const {
  const Eigen::Index n = M.cols();
  switch (kind_) {
    case Kind::Zero:
      return Matrix::Zero(n, n);
    case Kind::Diagonal:
      return diag_.asDiagonal();
    case Kind::Dense:
      return dense_;
    case Kind::Linearized: {
      Matrix H = -Matrix(penalty_gram(M, sigma));
      H.diagonal() += diag_;
      return H;
    }
  }
  return {};
}

// ---------------------------------------------------------------------------
// Objectives

Vector quadratic_prox(const Vector& lin, const Metric& D, const Vector& center) {
  return center - D.solve(lin);
}

CompositeObjective zero_objective() {
  CompositeObjective h;
  h.prox_step = quadratic_prox;
  h.value = [](const Vector&) { return 0.0; };
  return h;
}

CompositeObjective l1_objective(double lambda) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("l1_objective: lambda must be >= 0");
  CompositeObjective h;
  h.prox_step = [lambda](const Vector& lin, const Metric& D, const Vector& center) {
    if (!D.is_diagonal()) throw std::invalid_argument("l1 prox needs a diagonal metric");
    const Vector& d = D.diag();
    const Vector z = center - lin.cwiseQuotient(d);
    Vector out(z.size());
    for (Eigen::Index j = 0; j < z.size(); ++j) {
      const double th = lambda / d[j];
      out[j] = z[j] > th ? z[j] - th : (z[j] < -th ? z[j] + th : 0.0);
    }
    return out;
  };
  h.value = [lambda](const Vector& v) { return lambda * v.lpNorm<1>(); };
  return h;
}

CompositeObjective squared_distance_objective(Vector w) {
  CompositeObjective h;
  h.prox_step = [w](const Vector& lin, const Metric& D, const Vector& center) -> Vector {
    const Vector rhs = w - lin + D.apply(center);
    if (D.is_diagonal()) return rhs.cwiseQuotient((D.diag().array() + 1.0).matrix());
    Matrix M = D.to_dense();
    M.diagonal().array() += 1.0;
    return M.ldlt().solve(rhs);
  };
  h.value = [w](const Vector& v) { return 0.5 * (v - w).squaredNorm(); };
  return h;
}

// ---------------------------------------------------------------------------
// Problem

AdmmProblem::AdmmProblem(SparseMatrix A, SparseMatrix B, Vector c, Vector sigma, StepSize H_f,
                         StepSize H_g, CompositeObjective f, CompositeObjective g)
    : A_(std::move(A)),
      B_(std::move(B)),
      c_(std::move(c)),
      sigma_(std::move(sigma)),
      H_f_(std::move(H_f)),
      H_g_(std::move(H_g)),
      f_(std::move(f)),
      g_(std::move(g)),
      D_f_(Metric::diagonal({})),
      D_g_(Metric::diagonal({})) {
  const Eigen::Index k = A_.rows();
  if (B_.rows() != k) throw DimensionError("A and B must have the same number of rows");
  if (c_.size() != k) throw DimensionError("c must have length rows(A)");
  if (sigma_.size() != k) throw DimensionError("Sigma must have length rows(A)");
  if (!(sigma_.array() > 0.0).all() || !sigma_.allFinite())
    throw std::invalid_argument("Sigma entries must be finite and > 0");
  if (!f_.prox_step || !g_.prox_step) throw std::invalid_argument("objectives need a prox_step");
  D_f_ = block_metric(A_, sigma_, H_f_, "f");
  D_g_ = block_metric(B_, sigma_, H_g_, "g");
}

Vector AdmmProblem::residual(const Vector& x, const Vector& y) const {
  return A_ * x + B_ * y - c_;
}

// ---------------------------------------------------------------------------
// State

void KahanSum::add(const Vector& v) {
  if (sum_.size() != v.size()) throw DimensionError("KahanSum: length mismatch");
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double y = v[i] - comp_[i];
    const double t = sum_[i] + y;
    comp_[i] = (t - sum_[i]) - y;
    sum_[i] = t;
  }
}

AdmmState::AdmmState(Vector x0, Vector y0, Vector u0)
    : t(0),
      x(std::move(x0)),
      y(std::move(y0)),
      u(std::move(u0)),
      sum_x(x.size()),
      sum_y(y.size()) {}

Vector AdmmState::x_avg() const { return t == 0 ? x : Vector(sum_x.sum() / double(t)); }
Vector AdmmState::y_avg() const { return t == 0 ? y : Vector(sum_y.sum() / double(t)); }

// ---------------------------------------------------------------------------
// Trace

namespace {

void put_number(std::ostream& os, double v) {
  if (std::isfinite(v)) os << v;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::optional<double> parse_cell(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return std::stod(s);
}

}  // namespace

void Trace::write_csv(std::ostream& os, bool zero_time) const {
  os << "iter,objective,primal_residual,alpha_t,seconds";
  for (const auto& c : extra_columns_) os << ',' << c;
  os << '\n';
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& r : records_) {
    os << r.t << ',';
    if (r.objective) put_number(os, *r.objective);
    os << ',';
    put_number(os, r.primal_residual);
    os << ',';
    if (r.alpha) put_number(os, *r.alpha);
    os << ',';
    put_number(os, zero_time ? 0.0 : r.seconds);
    for (double e : r.extras) {
      os << ',';
      put_number(os, e);
    }
    os << '\n';
  }
}

Trace Trace::read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("trace: empty input");
  const auto header = split_csv(line);
  static const std::vector<std::string> fixed{"iter", "objective", "primal_residual", "alpha_t",
                                              "seconds"};
  if (header.size() < fixed.size() || !std::equal(fixed.begin(), fixed.end(), header.begin()))
    throw std::runtime_error("trace: unexpected header \"" + line + "\"");
  Trace trace(std::vector<std::string>(header.begin() + 5, header.end()));
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size())
      throw std::runtime_error("trace: row has " + std::to_string(cells.size()) + " cells");
    TraceRecord r;
    r.t = std::stol(cells[0]);
    r.objective = parse_cell(cells[1]);
    r.primal_residual = parse_cell(cells[2]).value_or(0.0);
    r.alpha = parse_cell(cells[3]);
    r.seconds = parse_cell(cells[4]).value_or(0.0);
    for (std::size_t i = 5; i < cells.size(); ++i)
      r.extras.push_back(parse_cell(cells[i]).value_or(std::numeric_limits<double>::quiet_NaN()));
    trace.push(std::move(r));
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Iteration

AdmmState admm_step(const AdmmProblem& p, const AdmmState& s) {
  const long it = s.t + 1;
  const Vector& sig = p.sigma();
  AdmmState next = s;
  next.t = it;

  try {
    // x-block
    Vector lin = p.A().transpose() * (s.u + sig.cwiseProduct(p.residual(s.x, s.y)));
    if (p.f().grad_d) lin += p.f().grad_d(s.x);
    next.x = p.f().prox_step(lin, p.D_f(), s.x);
    if (next.x.size() != p.dim_x()) throw DimensionError("x prox returned wrong length");
    if (!next.x.allFinite()) throw NumericalError(it, "non-finite x iterate");

    // y-block
    lin = p.B().transpose() * (s.u + sig.cwiseProduct(p.residual(next.x, s.y)));
    if (p.g().grad_d) lin += p.g().grad_d(s.y);
    next.y = p.g().prox_step(lin, p.D_g(), s.y);
    if (next.y.size() != p.dim_y()) throw DimensionError("y prox returned wrong length");
    if (!next.y.allFinite()) throw NumericalError(it, "non-finite y iterate");
  } catch (const NumericalError&) {
    throw;
  } catch (const DimensionError&) {
    throw;
  } catch (const std::exception& e) {
    throw NumericalError(it, e.what());
  }

  next.u = s.u + sig.cwiseProduct(p.residual(next.x, next.y));
  next.sum_x.add(next.x);
  next.sum_y.add(next.y);
  return next;
}

RunResult run(const AdmmProblem& p, AdmmState init, const RunOptions& opt) {
  if (opt.iters < 1) throw std::invalid_argument("run: iters must be >= 1");
  if (init.x.size() != p.dim_x() || init.y.size() != p.dim_y() || init.u.size() != p.dim_u())
    throw DimensionError("run: initial point has wrong dimensions");
  if (init.sum_x.sum().size() != init.x.size()) init.sum_x = KahanSum(init.x.size());
  if (init.sum_y.sum().size() != init.y.size()) init.sum_y = KahanSum(init.y.size());

  RunResult out{std::move(init), {}, {}, Trace(opt.extra_columns)};
  const auto start = std::chrono::steady_clock::now();
  const bool default_objective = !opt.objective && p.f().value && p.g().value;

  for (long k = 0; k < opt.iters; ++k) {
    AdmmState next = admm_step(p, out.state);
    if (opt.observer) opt.observer(out.state, next);
    out.state = std::move(next);
    const AdmmState& s = out.state;

    TraceRecord rec;
    rec.t = s.t;
    if (opt.objective)
      rec.objective = opt.objective(s);
    else if (default_objective)
      rec.objective = p.f().value(s.x) + p.g().value(s.y);
    rec.primal_residual = p.residual(s.x, s.y).norm();
    if (opt.alpha) rec.alpha = opt.alpha(s);
    if (opt.extras) rec.extras = opt.extras(s);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const double resid = rec.primal_residual;
    out.trace.push(std::move(rec));

    if (opt.primal_tol && resid < *opt.primal_tol) break;
  }
  out.x_avg = out.state.x_avg();
  out.y_avg = out.state.y_avg();
  return out;
}

// ---------------------------------------------------------------------------
// Validation

bool StepSizeReport::ok() const {
  return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
}

std::string StepSizeReport::failures() const {
  std::string out;
  for (const auto& c : checks) {
    if (c.passed) continue;
    if (!out.empty()) out += "; ";
    out += c.condition;
  }
  return out;
}

namespace {

void validate_block(StepSizeReport& report, const char* block, const SparseMatrix& M,
                    const Vector& sigma, const StepSize& H, const CompositeObjective& h,
                    const std::vector<Vector>& probes, double tol) {
  const std::string name(block);
  const Matrix Hd = H.to_dense(M, sigma);
  const double scale = std::max(1.0, Hd.size() ? Hd.cwiseAbs().maxCoeff() : 0.0);

  double ev = min_eigenvalue(Hd);
  report.checks.push_back({"H_" + name + " PSD", ev >= -tol * scale, ev});

  Matrix D = Hd + Matrix(penalty_gram(M, sigma));
  ev = min_eigenvalue(0.5 * (D + D.transpose()));
  report.checks.push_back({"H_" + name + " + M^T Sigma M positive definite", ev > pd_tolerance(D), ev});

  if (!h.hess_d) return;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    const Matrix diff = Hd - h.hess_d(probes[i]);
    ev = min_eigenvalue(0.5 * (diff + diff.transpose()));
    report.checks.push_back({"H_" + name + " - hess " + name + "_d PSD at probe " +
                                 std::to_string(i),
                             ev >= -tol * scale, ev});
  }
}

}  // namespace

StepSizeReport validate_stepsizes(const AdmmProblem& p, const std::vector<Vector>& probes_x,
                                  const std::vector<Vector>& probes_y, double tol) {
  StepSizeReport report;
  validate_block(report, "f", p.A(), p.sigma(), p.H_f(), p.f(), probes_x, tol);
  validate_block(report, "g", p.B(), p.sigma(), p.H_g(), p.g(), probes_y, tol);
  return report;
}

}  // namespace lnadmm
