// Closed-form proximal maps, penalty gradients and the qexp family.
#ifndef LNADMM_PROX_HPP
#define LNADMM_PROX_HPP

#include "lnadmm/numerics.hpp"

#include <cmath>
#include <concepts>
#include <limits>

namespace lnadmm {

/// Pinball loss q*max(t,0) + (1-q)*max(-t,0).
template <std::floating_point Scalar>
Scalar quantile_loss(Scalar q, Scalar t) {
  return t >= Scalar(0) ? q * t : (q - Scalar(1)) * t;
}

struct QuantileLossSpec {
  double q = 0.5;
  explicit QuantileLossSpec(double q_);
  double operator()(double t) const { return quantile_loss(q, t); }
};

/// Log-L1 penalty lambda * sum_j beta*log(1 + |x_j|/beta). beta = +inf is the
/// plain L1 norm.
struct LogL1PenaltySpec {
  double lambda = 0.0;
  double beta = std::numeric_limits<double>::infinity();
  LogL1PenaltySpec(double lambda_, double beta_);
  bool is_l1() const { return std::isinf(beta); }
};

/// Elementwise shrinkage toward zero; exact zeros inside [-thresh, thresh].
template <typename Derived>
typename Derived::PlainObject soft_threshold(const Eigen::MatrixBase<Derived>& v,
                                             typename Derived::Scalar thresh) {
  using Scalar = typename Derived::Scalar;
  return v.unaryExpr([thresh](Scalar a) {
    if (a > thresh) return a - thresh;
    if (a < -thresh) return a + thresh;
    return Scalar(0);
  });
}

/// Euclidean projection onto the ball of radius R (R = +inf is the identity).
template <typename Derived>
typename Derived::PlainObject ball_project(const Eigen::MatrixBase<Derived>& v,
                                           typename Derived::Scalar radius) {
  const auto norm = v.norm();
  if (!(norm > radius)) return v;
  return v * (radius / norm);
}

/// Full penalty value lambda * sum_j beta*log(1 + |x_j|/beta).
double logl1_penalty(const LogL1PenaltySpec& spec, const Vector& x);

struct ValueGrad {
  double value = 0.0;
  Vector grad;
};

/// The differentiable, concave remainder after splitting off lambda*||x||_1:
///   f_d(x) = lambda * sum_j (beta*log(1+|x_j|/beta) - |x_j|),
///   grad_j = -lambda * x_j / (beta + |x_j|).
/// Identically zero for beta = +inf.
ValueGrad logl1_remainder(const LogL1PenaltySpec& spec, const Vector& x);

/// Diagonal of the Hessian of the remainder: -lambda*beta/(beta+|x_j|)^2,
/// which is bounded below by -lambda/beta.
Vector logl1_remainder_hessian_diag(const LogL1PenaltySpec& spec, const Vector& x);

template <std::floating_point Scalar>
struct QexpValue {
  Scalar value;
  Scalar d1;
  Scalar d2;
};

/// exp(t) for t <= 0, its second-order Taylor polynomial 1 + t + t^2/2 for
/// t >= 0. Twice continuously differentiable with second derivative <= 1.
template <std::floating_point Scalar>
QexpValue<Scalar> qexp(Scalar t) {
  if (t <= Scalar(0)) {
    const Scalar e = std::exp(t);
    return {e, e, e};
  }
  return {Scalar(1) + t + Scalar(0.5) * t * t, Scalar(1) + t, Scalar(1)};
}

/// Minimizer over y of (1/n)*l_q(w - y) + (sigma/2)*y^2 - sigma*anchor*y.
double quantile_prox_update(double w, double anchor, double q, Eigen::Index n, double sigma);

}  // namespace lnadmm

#endif  // LNADMM_PROX_HPP
