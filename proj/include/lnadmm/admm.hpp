// Linearized two-block ADMM.
//
// Solves  min f(x) + g(y)  s.t.  Ax + By = c  with f = f_c + f_d, g = g_c + g_d,
// f_c/g_c convex (handled through a prox callback) and f_d/g_d differentiable
// (linearized at the previous iterate). One cycle is
//
//   x+ = argmin f_c(x) + <x, grad f_d(x) + A^T u> + 1/2|Ax + By - c|^2_S + 1/2|x - x_t|^2_Hf
//   y+ = argmin g_c(y) + <y, grad g_d(y) + B^T u> + 1/2|Ax+ + By - c|^2_S + 1/2|y - y_t|^2_Hg
//   u+ = u + S (Ax+ + By+ - c)
//
// Each block subproblem is reduced to the canonical form
//   argmin_v  h_c(v) + <v, lin> + 1/2 |v - center|^2_D,   D = H + M^T S M,
// which is what CompositeObjective::prox_step receives.
#ifndef LNADMM_ADMM_HPP
#define LNADMM_ADMM_HPP

#include "lnadmm/numerics.hpp"

#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace lnadmm {

/// Raised when an iteration cannot be completed (inner solve failure or
/// non-finite iterate). Carries the 1-based index of the failing iteration.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(long iteration, const std::string& what)
      : std::runtime_error("iteration " + std::to_string(iteration) + ": " + what),
        iteration_(iteration) {}
  long iteration() const { return iteration_; }

 private:
  long iteration_;
};

/// Symmetric positive (semi)definite quadratic form, diagonal or dense.
class Metric {
 public:
  static Metric diagonal(Vector d) { return Metric(std::move(d)); }
  static Metric dense(Matrix m) { return Metric(std::move(m)); }

  bool is_diagonal() const { return std::holds_alternative<Vector>(rep_); }
  const Vector& diag() const;
  Matrix to_dense() const;
  Vector apply(const Vector& v) const;
  /// Solves D v = rhs.
  Vector solve(const Vector& rhs) const;
  Eigen::Index size() const;

 private:
  explicit Metric(Vector d) : rep_(std::move(d)) {}
  explicit Metric(Matrix m) : rep_(std::move(m)) {}
  std::variant<Vector, Matrix> rep_;
};

/// Step-size matrix H for one block.
///
/// `linearized(d)` stands for H = diag(d) - M^T S M, the choice that turns the
/// block subproblem metric into the diagonal diag(d) without materializing
/// M^T S M. Both worked examples in this library use it.
class StepSize {
 public:
  enum class Kind { Zero, Diagonal, Dense, Linearized };

  static StepSize zero() { return StepSize(Kind::Zero, {}, {}); }
  static StepSize diagonal(Vector d) { return StepSize(Kind::Diagonal, std::move(d), {}); }
  static StepSize dense(Matrix m) { return StepSize(Kind::Dense, {}, std::move(m)); }
  static StepSize linearized(Vector d) { return StepSize(Kind::Linearized, std::move(d), {}); }

  Kind kind() const { return kind_; }
  const Vector& diag() const { return diag_; }
  const Matrix& matrix() const { return dense_; }

  /// Explicit dense H given the block's constraint matrix and the penalty.
  Matrix to_dense(const SparseMatrix& M, const Vector& sigma) const;

 private:
  StepSize(Kind k, Vector d, Matrix m) : kind_(k), diag_(std::move(d)), dense_(std::move(m)) {}
  Kind kind_;
  Vector diag_;
  Matrix dense_;
};

/// argmin_v h_c(v) + <v, lin> + 1/2 |v - center|^2_D
using ProxStep = std::function<Vector(const Vector& lin, const Metric& D, const Vector& center)>;

/// One block objective h = h_c + h_d.
struct CompositeObjective {
  ProxStep prox_step;
  /// Gradient of h_d; empty means h_d == 0.
  std::function<Vector(const Vector&)> grad_d;
  /// Analytic Hessian of h_d, used only for step-size validation.
  std::function<Matrix(const Vector&)> hess_d;
  /// Total value h(v), used for the default trace objective.
  std::function<double(const Vector&)> value;
};

/// h == 0. The prox is the unconstrained quadratic minimizer.
CompositeObjective zero_objective();
/// h(v) = lambda * |v|_1. Requires a diagonal metric.
CompositeObjective l1_objective(double lambda);
/// h(v) = 1/2 |v - w|^2 (smooth, handled exactly in the prox).
CompositeObjective squared_distance_objective(Vector w);

/// center - D^{-1} lin
Vector quadratic_prox(const Vector& lin, const Metric& D, const Vector& center);

class AdmmProblem {
 public:
  /// `sigma` is the diagonal of the penalty matrix and must be positive.
  /// Throws std::invalid_argument on inconsistent dimensions or when a block
  /// metric H + M^T S M is not positive definite.
  AdmmProblem(SparseMatrix A, SparseMatrix B, Vector c, Vector sigma, StepSize H_f, StepSize H_g,
              CompositeObjective f, CompositeObjective g);

  const SparseMatrix& A() const { return A_; }
  const SparseMatrix& B() const { return B_; }
  const Vector& c() const { return c_; }
  const Vector& sigma() const { return sigma_; }
  const StepSize& H_f() const { return H_f_; }
  const StepSize& H_g() const { return H_g_; }
  const CompositeObjective& f() const { return f_; }
  const CompositeObjective& g() const { return g_; }
  const Metric& D_f() const { return D_f_; }
  const Metric& D_g() const { return D_g_; }

  Eigen::Index dim_x() const { return A_.cols(); }
  Eigen::Index dim_y() const { return B_.cols(); }
  Eigen::Index dim_u() const { return A_.rows(); }

  /// A x + B y - c
  Vector residual(const Vector& x, const Vector& y) const;

 private:
  SparseMatrix A_, B_;
  Vector c_, sigma_;
  StepSize H_f_, H_g_;
  CompositeObjective f_, g_;
  Metric D_f_, D_g_;
};

/// Compensated (Kahan) running sum of vectors.
class KahanSum {
 public:
  explicit KahanSum(Eigen::Index n = 0) : sum_(Vector::Zero(n)), comp_(Vector::Zero(n)) {}
  void add(const Vector& v);
  const Vector& sum() const { return sum_; }

 private:
  Vector sum_, comp_;
};

struct AdmmState {
  long t = 0;
  Vector x, y, u;
  KahanSum sum_x, sum_y;

  AdmmState() = default;
  AdmmState(Vector x0, Vector y0, Vector u0);
  /// Running averages (1/t) sum_{s=1..t} x_s; x_0 when t == 0.
  Vector x_avg() const;
  Vector y_avg() const;
};

struct TraceRecord {
  long t = 0;
  std::optional<double> objective;
  double primal_residual = 0.0;
  std::optional<double> alpha;
  double seconds = 0.0;
  std::vector<double> extras;
};

/// Per-iteration log. CSV header "iter,objective,primal_residual,alpha_t,seconds"
/// followed by any extra columns; missing optional values are empty cells.
class Trace {
 public:
  Trace() = default;
  explicit Trace(std::vector<std::string> extra_columns) : extra_columns_(std::move(extra_columns)) {}

  void push(TraceRecord r) { records_.push_back(std::move(r)); }
  const std::vector<TraceRecord>& records() const { return records_; }
  const std::vector<std::string>& extra_columns() const { return extra_columns_; }
  std::size_t size() const { return records_.size(); }
  const TraceRecord& operator[](std::size_t i) const { return records_[i]; }

  /// With `zero_time` the seconds column is written as 0 so that repeated
  /// runs produce byte-identical files.
  void write_csv(std::ostream& os, bool zero_time = false) const;
  static Trace read_csv(std::istream& is);

 private:
  std::vector<std::string> extra_columns_;
  std::vector<TraceRecord> records_;
};

/// Executes exactly one x/y/u cycle.
AdmmState admm_step(const AdmmProblem& problem, const AdmmState& state);

struct RunOptions {
  long iters = 1;
  /// Secondary stop: halt once |Ax + By - c|_2 falls below this.
  std::optional<double> primal_tol;
  /// Trace objective; defaults to f.value(x) + g.value(y) when both are set.
  std::function<double(const AdmmState&)> objective;
  std::function<std::optional<double>(const AdmmState&)> alpha;
  std::vector<std::string> extra_columns;
  std::function<std::vector<double>(const AdmmState&)> extras;
  /// Called after every step with the previous and the new state.
  std::function<void(const AdmmState&, const AdmmState&)> observer;
};

struct RunResult {
  AdmmState state;
  Vector x_avg, y_avg;
  Trace trace;
};

RunResult run(const AdmmProblem& problem, AdmmState init, const RunOptions& options);

struct StepSizeCheck {
  std::string condition;
  bool passed = false;
  double min_eigenvalue = 0.0;
};

struct StepSizeReport {
  std::vector<StepSizeCheck> checks;
  bool ok() const;
  /// Failed condition names joined by "; ".
  std::string failures() const;
};

/// Checks H PSD, H + M^T S M positive definite, and H - hess h_d(v) PSD at
/// each probe point for both blocks (the last only where hess_d is set).
StepSizeReport validate_stepsizes(const AdmmProblem& problem, const std::vector<Vector>& probes_x,
                                  const std::vector<Vector>& probes_y, double tol = 1e-8);

}  // namespace lnadmm

#endif  // LNADMM_ADMM_HPP
