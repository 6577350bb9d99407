#include "trice/optim.hpp"

#include <cmath>
#include <numbers>

#include "trice/errors.hpp"

namespace trice {

Optimizer::Optimizer(OptimizerConfig config, std::size_t dim)
    : cfg_(config) {
  if (!(cfg_.lr > 0.0)) throw DomainError("learning rate must be positive");
  if (cfg_.schedule == ScheduleKind::cosine) {
    if (!(cfg_.schedule_decay >= 1.0))
      throw DomainError("schedule decay must be at least 1");
    if (cfg_.schedule_horizon == 0)
      throw DomainError("schedule horizon must be positive");
  }
  if (cfg_.kind == OptimizerKind::adam) {
    m_.assign(dim, 0.0);
    v_.assign(dim, 0.0);
  }
}

double Optimizer::learning_rate(std::size_t t) const {
  if (cfg_.schedule == ScheduleKind::constant) return cfg_.lr;
  const double floor = cfg_.lr / cfg_.schedule_decay;
  const double frac =
      static_cast<double>(std::min(t, cfg_.schedule_horizon)) /
      static_cast<double>(cfg_.schedule_horizon);
  return floor +
         (cfg_.lr - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

void Optimizer::ascend(Vec& params, const Vec& grad) {
  if (grad.size() != params.size())
    throw DomainError("gradient and parameter shapes differ");
  const double lr = learning_rate(t_);
  ++t_;
  if (cfg_.kind == OptimizerKind::sgd) {
    axpy(lr, grad, params);
    return;
  }
  if (m_.size() != params.size())
    throw DomainError("optimizer state shape does not match parameters");
  const double b1 = cfg_.adam_beta1, b2 = cfg_.adam_beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = b1 * m_[i] + (1.0 - b1) * grad[i];
    v_[i] = b2 * v_[i] + (1.0 - b2) * grad[i] * grad[i];
    const double mhat = m_[i] / bc1;
    const double vhat = v_[i] / bc2;
    params[i] += lr * mhat / (std::sqrt(vhat) + cfg_.adam_eps);
  }
}

}  // namespace trice
