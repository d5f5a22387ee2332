#include "lnadmm/prox.hpp"

#include <stdexcept>

namespace lnadmm {

QuantileLossSpec::QuantileLossSpec(double q_) : q(q_) {
  if (!(q > 0.0 && q < 1.0)) throw std::invalid_argument("quantile q must lie in (0, 1)");
}

LogL1PenaltySpec::LogL1PenaltySpec(double lambda_, double beta_) : lambda(lambda_), beta(beta_) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw std::invalid_argument("penalty lambda must be finite and >= 0");
  if (!(beta > 0.0)) throw std::invalid_argument("penalty beta must be > 0 (or +inf)");
}

double logl1_penalty(const LogL1PenaltySpec& spec, const Vector& x) {
  if (spec.is_l1()) return spec.lambda * x.lpNorm<1>();
  double sum = 0.0;
  for (Eigen::Index j = 0; j < x.size(); ++j) sum += spec.beta * std::log1p(std::abs(x[j]) / spec.beta);
  return spec.lambda * sum;
}

ValueGrad logl1_remainder(const LogL1PenaltySpec& spec, const Vector& x) {
  ValueGrad out{0.0, Vector::Zero(x.size())};
  if (spec.is_l1() || spec.lambda == 0.0) return out;
  double sum = 0.0;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double a = std::abs(x[j]);
    sum += spec.beta * std::log1p(a / spec.beta) - a;
    out.grad[j] = -spec.lambda * x[j] / (spec.beta + a);
  }
  out.value = spec.lambda * sum;
  return out;
}

Vector logl1_remainder_hessian_diag(const LogL1PenaltySpec& spec, const Vector& x) {
  if (spec.is_l1()) return Vector::Zero(x.size());
  return x.unaryExpr([&spec](double xj) {
    const double denom = spec.beta + std::abs(xj);
    return -spec.lambda * spec.beta / (denom * denom);
  });
}

double quantile_prox_update(double w, double anchor, double q, Eigen::Index n, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("quantile_prox_update: sigma must be > 0");
  if (n < 1) throw std::invalid_argument("quantile_prox_update: n must be >= 1");
  const double ns = static_cast<double>(n) * sigma;
  const double up = anchor + q / ns;
  if (up < w) return up;
  const double down = anchor - (1.0 - q) / ns;
  if (down > w) return down;
  return w;
}

}  // namespace lnadmm
