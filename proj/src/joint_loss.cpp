#include "plotforge/joint_loss.hpp"

#include "plotforge/errors.hpp"
#include "plotforge/ops.hpp"

namespace plotforge::aux {

LossBreakdown combine(double lm, double dis, double coref, double lambda1, double lambda2) {
  if (lambda1 < 0 || lambda2 < 0) throw ContractError("joint loss weights must be >= 0");
  return LossBreakdown{lm, dis, coref, lambda1, lambda2, lm + lambda1 * dis + lambda2 * coref};
}

template <class Real>
JointLoss<Real> joint_loss(const ad::Tensor<Real>& lm, const ad::Tensor<Real>& dis, const ad::Tensor<Real>& coref,
                           double lambda1, double lambda2) {
  const bool use_dis = lambda1 > 0 && dis.defined();
  const bool use_coref = lambda2 > 0 && coref.defined();
  JointLoss<Real> out;
  out.parts = combine(static_cast<double>(lm.item()), use_dis ? static_cast<double>(dis.item()) : 0.0,
                      use_coref ? static_cast<double>(coref.item()) : 0.0, lambda1, lambda2);
  out.total = lm;
  if (use_dis) out.total = ad::add(out.total, ad::scale(dis, static_cast<Real>(lambda1)));
  if (use_coref) out.total = ad::add(out.total, ad::scale(coref, static_cast<Real>(lambda2)));
  return out;
}

template JointLoss<float> joint_loss(const ad::Tensor<float>&, const ad::Tensor<float>&, const ad::Tensor<float>&,
                                     double, double);
template JointLoss<double> joint_loss(const ad::Tensor<double>&, const ad::Tensor<double>&,
                                      const ad::Tensor<double>&, double, double);

}  // namespace plotforge::aux
