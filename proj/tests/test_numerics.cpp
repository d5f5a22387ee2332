#include "lnadmm/numerics.hpp"

#include <doctest.h>

#include <random>
#include <sstream>
#include <vector>

using namespace lnadmm;

namespace {

SparseMatrix random_sparse(Eigen::Index rows, Eigen::Index cols, double density,
                           std::mt19937_64& gen) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> normal;
  std::vector<Triplet> t;
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j)
      if (u(gen) < density) t.emplace_back(i, j, normal(gen));
  return make_sparse(rows, cols, t);
}

Vector random_vector(Eigen::Index n, std::mt19937_64& gen) {
  std::normal_distribution<double> normal;
  Vector v(n);
  for (auto& x : v) x = normal(gen);
  return v;
}

}  // namespace

TEST_SUITE("numerics") {

TEST_CASE("spmv on small hand-checked matrices") {
  std::vector<Triplet> id{{0, 0, 1.0}, {1, 1, 1.0}};
  const SparseMatrix I = make_sparse(2, 2, id);
  CHECK(spmv(I, Vector{{3.0, -1.0}}) == Vector{{3.0, -1.0}});

  std::vector<Triplet> t{{0, 0, 1.0}, {0, 1, 2.0}, {1, 1, 3.0}};
  const SparseMatrix M = make_sparse(2, 2, t);
  CHECK(spmv(M, Vector{{1.0, 1.0}}) == Vector{{3.0, 3.0}});
  CHECK(spmv_transpose(M, Vector{{1.0, 1.0}}) == Vector{{1.0, 5.0}});
}

TEST_CASE("spmv matches the dense product") {
  std::mt19937_64 gen(11);
  const SparseMatrix M = random_sparse(50, 30, 0.2, gen);
  const Matrix D = Matrix(M);
  const Vector v = random_vector(30, gen), w = random_vector(50, gen);
  CHECK((spmv(M, v) - D * v).lpNorm<Eigen::Infinity>() <= 1e-12);
  CHECK((spmv_transpose(M, w) - D.transpose() * w).lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("adjoint identity holds for random operators") {
  std::mt19937_64 gen(12);
  for (int rep = 0; rep < 20; ++rep) {
    const SparseMatrix M = random_sparse(37, 23, 0.3, gen);
    const Vector v = random_vector(23, gen), w = random_vector(37, gen);
    const double lhs = spmv(M, v).dot(w), rhs = v.dot(spmv_transpose(M, w));
    CHECK(std::abs(lhs - rhs) <= 1e-12 * std::max(1.0, std::abs(lhs)));
  }
}

TEST_CASE("spmv rejects mismatched dimensions") {
  std::vector<Triplet> t{{0, 0, 1.0}};
  const SparseMatrix M = make_sparse(2, 3, t);
  CHECK_THROWS_AS(spmv(M, Vector::Zero(2)), DimensionError);
  CHECK_THROWS_AS(spmv_transpose(M, Vector::Zero(3)), DimensionError);
}

TEST_CASE("make_sparse validates its triples") {
  std::vector<Triplet> dup{{0, 0, 1.0}, {0, 0, 2.0}};
  CHECK_THROWS(make_sparse(2, 2, dup));
  std::vector<Triplet> range{{2, 0, 1.0}};
  CHECK_THROWS(make_sparse(2, 2, range));
  std::vector<Triplet> nan{{0, 0, std::nan("")}};
  CHECK_THROWS(make_sparse(2, 2, nan));
  std::vector<Triplet> none;
  const SparseMatrix Z = make_sparse(0, 3, none);
  CHECK(spmv(Z, Vector::Ones(3)).size() == 0);
  CHECK(spmv_transpose(Z, Vector::Zero(0)) == Vector::Zero(3));
}

TEST_CASE("spectral norm of simple matrices") {
  const Matrix I = Matrix::Identity(5, 5);
  CHECK(spectral_norm(I) == doctest::Approx(1.0).epsilon(1e-12));
  Matrix D = Matrix::Zero(2, 2);
  D(0, 0) = 3.0;
  D(1, 1) = 1.0;
  CHECK(spectral_norm(D) == doctest::Approx(3.0).epsilon(1e-9));
  CHECK(spectral_norm(Matrix::Zero(3, 4)) == 0.0);
}

TEST_CASE("spectral norm falls back when the all-ones start is annihilated") {
  Matrix M(2, 2);
  M << 1.0, -1.0, 2.0, -2.0;
  const double ref = Eigen::JacobiSVD<Matrix>(M).singularValues()(0);
  CHECK(spectral_norm(M) == doctest::Approx(ref).epsilon(1e-9));
}

TEST_CASE("spectral norm matches a dense SVD and bounds probe ratios") {
  std::mt19937_64 gen(13);
  for (int rep = 0; rep < 5; ++rep) {
    const SparseMatrix M = random_sparse(40, 20, 0.3, gen);
    const double ref = Eigen::JacobiSVD<Matrix>(Matrix(M)).singularValues()(0);
    const double est = spectral_norm(M, 1e-12);
    CHECK(std::abs(est - ref) <= 1e-6 * ref);
    for (int k = 0; k < 20; ++k) {
      const Vector v = random_vector(20, gen);
      CHECK((M * v).norm() / v.norm() <= est * (1.0 + 1e-10));
    }
  }
}

TEST_CASE("check_psd") {
  CHECK(check_psd(Matrix::Identity(3, 3), 1e-8));
  Matrix D = Matrix::Zero(2, 2);
  D(0, 0) = 1.0;
  D(1, 1) = -0.5;
  CHECK_FALSE(check_psd(D, 1e-8));
  Matrix asym = Matrix::Identity(2, 2);
  asym(0, 1) = 0.1;
  CHECK_THROWS(check_psd(asym, 1e-8));
  CHECK_THROWS(check_psd(Matrix::Zero(2, 3), 1e-8));
}

TEST_CASE("linearized step matrix from the estimated norm is PSD") {
  std::mt19937_64 gen(14);
  std::normal_distribution<double> normal;
  Matrix Phi(20, 10);
  for (auto& x : Phi.reshaped()) x = normal(gen);
  const double sigma = 0.7;
  const double gamma = std::pow(spectral_norm(Phi), 2) * (1.0 + 1e-6);
  const Matrix H = sigma * (gamma * Matrix::Identity(10, 10) - Phi.transpose() * Phi);
  CHECK(check_psd(H, 1e-8));
  const double ref_min = Eigen::SelfAdjointEigenSolver<Matrix>(H).eigenvalues().minCoeff();
  CHECK(min_eigenvalue(H) == doctest::Approx(ref_min).epsilon(1e-10));
  CHECK(ref_min >= -1e-8);
}

TEST_CASE("kron_identity lifts operators channel-fastest") {
  std::vector<Triplet> t{{0, 0, 2.0}, {0, 1, 3.0}, {1, 1, -1.0}};
  const SparseMatrix M = make_sparse(2, 2, t);
  const SparseMatrix K = kron_identity(M, 3);
  Matrix ref = Matrix::Zero(6, 6);
  const Matrix Md = Matrix(M);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) ref.block(3 * i, 3 * j, 3, 3) = Md(i, j) * Matrix::Identity(3, 3);
  CHECK((Matrix(K) - ref).norm() == 0.0);
}

TEST_CASE("sparse and vector text round trip") {
  std::mt19937_64 gen(15);
  const SparseMatrix M = random_sparse(7, 5, 0.4, gen);
  std::stringstream ss;
  write_sparse(ss, M);
  std::string header;
  std::getline(ss, header);
  CHECK(header == std::to_string(M.rows()) + " 5 " + std::to_string(M.nonZeros()));
  ss.seekg(0);
  const SparseMatrix R = read_sparse(ss);
  CHECK((Matrix(R) - Matrix(M)).norm() == 0.0);

  const Vector v = random_vector(9, gen);
  std::stringstream vs;
  write_vector(vs, v);
  CHECK(read_vector(vs) == v);

  std::stringstream bad("2 2 1\n5 0 1.0\n");
  CHECK_THROWS(read_sparse(bad));
}

}  // TEST_SUITE
