#pragma once

#include "plotforge/tensor.hpp"

namespace plotforge::aux {

struct LossBreakdown {
  double lm = 0;
  double dis = 0;
  double coref = 0;
  double lambda1 = 0;
  double lambda2 = 0;
  // lm + lambda1 * dis + lambda2 * coref, evaluated in double from the parts.
  double total = 0;
};

template <class Real>
struct JointLoss {
  ad::Tensor<Real> total;  // differentiable
  LossBreakdown parts;
};

// A term whose weight is 0, or which is undefined, stays off the graph so the
// total (and its gradient) is exactly that of the remaining terms. Throws
// ContractError for a negative weight.
template <class Real>
JointLoss<Real> joint_loss(const ad::Tensor<Real>& lm, const ad::Tensor<Real>& dis, const ad::Tensor<Real>& coref,
                           double lambda1, double lambda2);

// Scalar form used in logs and tests.
LossBreakdown combine(double lm, double dis, double coref, double lambda1, double lambda2);

}  // namespace plotforge::aux
