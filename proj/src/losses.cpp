#include "posefuse/losses.hpp"

#include <cmath>

#include "posefuse/errors.hpp"

namespace posefuse::loss {

namespace {
constexpr double kSinClamp = 1e-3;
constexpr double kTinyAngle = 1e-8;
}  // namespace

std::array<Eigen::Matrix3d, 3> exp_map_partials(const Eigen::Vector3d& y) {
  const Eigen::Matrix3d r = so3::exp_map(y);
  std::array<Eigen::Matrix3d, 3> partials;
  const double n2 = y.squaredNorm();
  if (n2 < kTinyAngle * kTinyAngle) {
    for (int i = 0; i < 3; ++i) {
      partials[static_cast<std::size_t>(i)] =
          so3::skew(Eigen::Vector3d::Unit(i)) * r;
    }
    return partials;
  }
  const Eigen::Matrix3d y_cross = so3::skew(y);
  const Eigen::Matrix3d i_minus_r = Eigen::Matrix3d::Identity() - r;
  for (int i = 0; i < 3; ++i) {
    const Eigen::Vector3d e = Eigen::Vector3d::Unit(i);
    partials[static_cast<std::size_t>(i)] =
        ((y[i] * y_cross + so3::skew(y.cross(i_minus_r * e))) / n2) * r;
  }
  return partials;
}

PoseLossResult pose_loss(const Eigen::Vector3d& y_pred, const so3::Rotation& r_star) {
  PoseLossResult out;
  const Eigen::Matrix3d r = so3::exp_map(y_pred);
  const Eigen::Matrix3d r_star_t = r_star.transpose();
  const double t = (r * r_star_t).trace();
  const double u = std::max(-1.0, std::min(1.0, 0.5 * (t - 1.0)));
  const double theta_rel = std::acos(u);
  out.value = theta_rel;
  out.grad.setZero();
  if (theta_rel == 0.0) return out;
  const double s = std::max(std::sin(theta_rel), kSinClamp);
  const auto partials = exp_map_partials(y_pred);
  for (int i = 0; i < 3; ++i) {
    out.grad[i] = -(partials[static_cast<std::size_t>(i)] * r_star_t).trace() / (2.0 * s);
  }
  return out;
}

CrossEntropyResult cross_entropy(const Eigen::VectorXd& p, int c_star) {
  if (c_star < 0 || c_star >= p.size()) {
    throw IndexOutOfRange("cross_entropy: category index " + std::to_string(c_star) +
                          " out of range for k=" + std::to_string(p.size()));
  }
  CrossEntropyResult out;
  out.value = -std::log(std::max(p[c_star], 1e-300));
  out.grad_logits = p;
  out.grad_logits[c_star] -= 1.0;
  return out;
}

double joint_loss(const JointLossConfig& cfg, double pose_term, double category_term) {
  return pose_term + cfg.lambda * category_term;
}

}  // namespace posefuse::loss
