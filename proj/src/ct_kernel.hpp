#ifndef LNADMM_SRC_CT_KERNEL_HPP
#define LNADMM_SRC_CT_KERNEL_HPP

#include "lnadmm/ct_forward.hpp"
#include "lnadmm/prox.hpp"

namespace lnadmm::ct::detail {

inline constexpr Eigen::Index kMaxMaterials = 8;
using SmallVec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxMaterials, 1>;
using SmallMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxMaterials, kMaxMaterials>;

// Per-ray evaluation of the qexp spectral model. Scratch storage is owned by
// the kernel, so one instance per thread.
class RayKernel {
 public:
  explicit RayKernel(const SpectralModel& model)
      : S_(model.S),
        beam_(model.beam),
        muT_(model.mu.transpose()),
        z_(model.n_energies()),
        q0_(model.n_energies()),
        q1_(model.n_energies()),
        q2_(model.n_energies()),
        means(model.n_windows()),
        dmeans(model.n_windows(), model.n_materials()),
        grad_c(model.n_materials()),
        hess_c(model.n_materials(), model.n_materials()) {}

  Eigen::Index n_materials() const { return muT_.cols(); }

  // Sets gc, grad_c and, on request, hess_c and the window means with their
  // Jacobian. `y` points at the ray's n_m projection values.
  void eval(const double* y, double scale, bool hessian, bool windows) {
    z_.noalias() = -(muT_ * Eigen::Map<const Vector>(y, muT_.cols()));
    for (Eigen::Index i = 0; i < z_.size(); ++i) {
      const auto qv = qexp(z_[i]);
      q0_[i] = qv.value;
      q1_[i] = qv.d1;
      q2_[i] = qv.d2;
    }
    gc = scale * beam_.dot(q0_);
    grad_c.noalias() = -scale * (muT_.transpose() * beam_.cwiseProduct(q1_));
    if (hessian)
      hess_c.noalias() = scale * (muT_.transpose() * (beam_.cwiseProduct(q2_)).asDiagonal() * muT_);
    if (windows) {
      means.noalias() = scale * (S_ * q0_);
      dmeans.noalias() = -scale * (S_ * q1_.asDiagonal() * muT_);
    }
  }

  // g_d value and gradient for this ray; requires eval(..., windows = true).
  template <typename CountCol>
  double gd_value(const CountCol& counts) const {
    double v = 0.0;
    for (Eigen::Index w = 0; w < means.size(); ++w)
      if (counts[w] != 0) v -= double(counts[w]) * std::log(means[w]);
    return v;
  }
  template <typename CountCol>
  SmallVec gd_grad(const CountCol& counts) const {
    SmallVec g = SmallVec::Zero(n_materials());
    for (Eigen::Index w = 0; w < means.size(); ++w)
      if (counts[w] != 0) g -= (double(counts[w]) / means[w]) * dmeans.row(w).transpose();
    return g;
  }

 private:
  const Matrix& S_;
  const Vector& beam_;
  Matrix muT_;
  Vector z_, q0_, q1_, q2_;

 public:
  double gc = 0.0;
  Vector means;
  Matrix dmeans;
  SmallVec grad_c;
  SmallMat hess_c;
};

}  // namespace lnadmm::ct::detail

#endif  // LNADMM_SRC_CT_KERNEL_HPP
