#ifndef TRICE_OPTIM_HPP
#define TRICE_OPTIM_HPP

#include <cstddef>

#include "trice/vecmath.hpp"

namespace trice {

enum class OptimizerKind { sgd, adam };
enum class ScheduleKind { constant, cosine };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double lr = 0.05;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  ScheduleKind schedule = ScheduleKind::constant;
  double schedule_decay = 10.0;      // cosine: lr decays lr -> lr/decay ...
  std::size_t schedule_horizon = 450;  // ... over this many steps, then holds
};

/// Gradient-ascent optimizer (all objectives here are maximized).
class Optimizer {
 public:
  Optimizer(OptimizerConfig config, std::size_t dim);

  /// Learning rate used by the (t+1)-th update; learning_rate(0) == lr.
  double learning_rate(std::size_t t) const;
  void ascend(Vec& params, const Vec& grad);
  std::size_t steps_taken() const { return t_; }

 private:
  OptimizerConfig cfg_;
  std::size_t t_ = 0;
  Vec m_, v_;
};

}  // namespace trice

#endif  // TRICE_OPTIM_HPP
