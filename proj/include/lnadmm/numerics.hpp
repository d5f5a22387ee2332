// Linear-algebra substrate shared by every solver in the library.
//
// Dense vectors and matrices are plain Eigen types. Sparse operators are
// row-major Eigen sparse matrices so that products parallelize by rows.
#ifndef LNADMM_NUMERICS_HPP
#define LNADMM_NUMERICS_HPP

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cmath>
#include <iosfwd>
#include <random>
#include <span>
#include <stdexcept>
#include <string>

namespace lnadmm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Triplet = Eigen::Triplet<double>;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Builds a sparse matrix from (row, col, value) triples. Rejects duplicate
/// coordinates, out-of-range indices and non-finite values.
SparseMatrix make_sparse(Eigen::Index rows, Eigen::Index cols,
                         std::span<const Triplet> entries);

/// y = M v
Vector spmv(const SparseMatrix& M, const Vector& v);
/// y = M^T v
Vector spmv_transpose(const SparseMatrix& M, const Vector& v);

/// Kronecker product M (x) I_n, used to lift pixel/ray operators to
/// vectorized multi-channel images (channel index fastest).
SparseMatrix kron_identity(const SparseMatrix& M, Eigen::Index n);

/// Largest singular value by power iteration on M^T M.
///
/// Starts from the normalized all-ones vector and stops when successive
/// Rayleigh quotients agree to `rel_tol` (relative) or after `max_iter`
/// iterations. If the all-ones start lies in the null space of M a fixed-seed
/// Gaussian start is used instead, so the result is always reproducible.
/// Works with dense and sparse Eigen matrices alike.
template <typename MatrixType>
double spectral_norm(const MatrixType& M, double rel_tol = 1e-10, int max_iter = 10000) {
  if (!(rel_tol > 0.0)) throw std::invalid_argument("spectral_norm: rel_tol must be positive");
  const Eigen::Index n = M.cols();
  if (n == 0 || M.rows() == 0) return 0.0;

  Vector v = Vector::Ones(n).normalized();
  Vector Mv = M * v;
  if (Mv.squaredNorm() == 0.0) {
    std::mt19937_64 gen(0x5eedULL);
    std::normal_distribution<double> normal;
    for (Eigen::Index j = 0; j < n; ++j) v[j] = normal(gen);
    v.normalize();
    Mv = M * v;
    if (Mv.squaredNorm() == 0.0) return 0.0;
  }

  double rayleigh = Mv.squaredNorm();
  for (int it = 0; it < max_iter; ++it) {
    Vector w = M.transpose() * Mv;
    const double wn = w.norm();
    if (wn == 0.0) break;
    v = w / wn;
    Mv = M * v;
    const double next = Mv.squaredNorm();
    const bool done = std::abs(next - rayleigh) < rel_tol * next;
    rayleigh = next;
    if (done) break;
  }
  return std::sqrt(rayleigh);
}

/// Smallest eigenvalue of a symmetric matrix.
double min_eigenvalue(const Matrix& M);

/// True iff the smallest eigenvalue of the symmetric matrix M is >= -tol.
/// Throws if M is not square or is asymmetric beyond tol (scaled by the
/// largest entry magnitude when that exceeds one).
bool check_psd(const Matrix& M, double tol);

/// Text form: header "rows cols nnz", then one "row col value" line per
/// nonzero in row-major order. Values are written with round-trip precision.
void write_sparse(std::ostream& os, const SparseMatrix& M);
SparseMatrix read_sparse(std::istream& is);

void write_vector(std::ostream& os, const Vector& v);
Vector read_vector(std::istream& is);

}  // namespace lnadmm

#endif  // LNADMM_NUMERICS_HPP
