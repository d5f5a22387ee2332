#include "lnadmm/numerics.hpp"

#include <algorithm>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <set>
#include <utility>
#include <vector>

namespace lnadmm {

SparseMatrix make_sparse(Eigen::Index rows, Eigen::Index cols, std::span<const Triplet> entries) {
  if (rows < 0 || cols < 0) throw DimensionError("make_sparse: negative dimension");
  std::set<std::pair<Eigen::Index, Eigen::Index>> seen;
  for (const auto& t : entries) {
    if (t.row() < 0 || t.row() >= rows || t.col() < 0 || t.col() >= cols)
      throw DimensionError("make_sparse: index (" + std::to_string(t.row()) + ", " +
                           std::to_string(t.col()) + ") out of range");
    if (!std::isfinite(t.value())) throw std::invalid_argument("make_sparse: non-finite value");
    if (!seen.emplace(t.row(), t.col()).second)
      throw std::invalid_argument("make_sparse: duplicate entry (" + std::to_string(t.row()) +
                                  ", " + std::to_string(t.col()) + ")");
  }
  SparseMatrix M(rows, cols);
  M.setFromTriplets(entries.begin(), entries.end());
  M.makeCompressed();
  return M;
}

Vector spmv(const SparseMatrix& M, const Vector& v) {
  if (v.size() != M.cols())
    throw DimensionError("spmv: vector length " + std::to_string(v.size()) + " != cols " +
                         std::to_string(M.cols()));
  return M * v;
}

Vector spmv_transpose(const SparseMatrix& M, const Vector& v) {
  if (v.size() != M.rows())
    throw DimensionError("spmv_transpose: vector length " + std::to_string(v.size()) +
                         " != rows " + std::to_string(M.rows()));
  return M.transpose() * v;
}

SparseMatrix kron_identity(const SparseMatrix& M, Eigen::Index n) {
  std::vector<Triplet> trips;
  trips.reserve(static_cast<std::size_t>(M.nonZeros() * n));
  for (Eigen::Index r = 0; r < M.outerSize(); ++r)
    for (SparseMatrix::InnerIterator it(M, r); it; ++it)
      for (Eigen::Index c = 0; c < n; ++c)
        trips.emplace_back(it.row() * n + c, it.col() * n + c, it.value());
  SparseMatrix K(M.rows() * n, M.cols() * n);
  K.setFromTriplets(trips.begin(), trips.end());
  K.makeCompressed();
  return K;
}

double min_eigenvalue(const Matrix& M) {
  if (M.rows() != M.cols()) throw DimensionError("min_eigenvalue: matrix not square");
  if (M.rows() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(M, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

bool check_psd(const Matrix& M, double tol) {
  if (M.rows() != M.cols()) throw DimensionError("check_psd: matrix not square");
  if (M.rows() == 0) return true;
  const double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
  const double asym = (M - M.transpose()).cwiseAbs().maxCoeff();
  if (asym > tol * scale)
    throw std::invalid_argument("check_psd: matrix asymmetric (max |M - M^T| = " +
                                std::to_string(asym) + ")");
  return min_eigenvalue(0.5 * (M + M.transpose())) >= -tol;
}

void write_sparse(std::ostream& os, const SparseMatrix& M) {
  os << M.rows() << ' ' << M.cols() << ' ' << M.nonZeros() << '\n';
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (Eigen::Index r = 0; r < M.outerSize(); ++r)
    for (SparseMatrix::InnerIterator it(M, r); it; ++it)
      os << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
}

SparseMatrix read_sparse(std::istream& is) {
  Eigen::Index rows = 0, cols = 0, nnz = 0;
  if (!(is >> rows >> cols >> nnz) || rows < 0 || cols < 0 || nnz < 0)
    throw std::runtime_error("read_sparse: bad header, expected \"rows cols nnz\"");
  std::vector<Triplet> trips;
  trips.reserve(static_cast<std::size_t>(nnz));
  for (Eigen::Index k = 0; k < nnz; ++k) {
    Eigen::Index r = 0, c = 0;
    double v = 0.0;
    if (!(is >> r >> c >> v))
      throw std::runtime_error("read_sparse: truncated after " + std::to_string(k) + " entries");
    trips.emplace_back(r, c, v);
  }
  return make_sparse(rows, cols, trips);
}

void write_vector(std::ostream& os, const Vector& v) {
  os << v.size() << '\n' << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (Eigen::Index i = 0; i < v.size(); ++i) os << v[i] << '\n';
}

Vector read_vector(std::istream& is) {
  Eigen::Index n = 0;
  if (!(is >> n) || n < 0) throw std::runtime_error("read_vector: bad length header");
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i)
    if (!(is >> v[i])) throw std::runtime_error("read_vector: truncated");
  return v;
}

}  // namespace lnadmm
