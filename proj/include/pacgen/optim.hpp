#pragma once

#include <Eigen/Core>

#include <cmath>

#include "pacgen/error.hpp"

namespace pacgen::optim {

/// RMSProp, no momentum:
///
///   v <- decay * v + (1 - decay) * g^2
///   x <- x - lr * g / (sqrt(v) + eps)
///
/// `ascend` flips the sign of the step.
struct RMSProp {
  double decay = 0.9;
  double eps = 1e-10;
  Eigen::VectorXd second_moment;
  long steps = 0;

  void step(Eigen::VectorXd& x, const Eigen::VectorXd& g, double lr) {
    if (!g.allFinite()) throw DivergenceError("non-finite gradient in optimizer step");
    if (second_moment.size() != x.size()) second_moment = Eigen::VectorXd::Zero(x.size());
    second_moment = decay * second_moment + (1.0 - decay) * g.cwiseAbs2();
    x.array() -= lr * g.array() / (second_moment.array().sqrt() + eps);
    ++steps;
  }

  void ascend(Eigen::VectorXd& x, const Eigen::VectorXd& g, double lr) { step(x, -g, lr); }
};

}  // namespace pacgen::optim
