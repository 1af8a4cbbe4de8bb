#ifndef POSEFUSE_LOSSES_HPP
#define POSEFUSE_LOSSES_HPP

#include <Eigen/Dense>

#include "posefuse/so3.hpp"

namespace posefuse::loss {

struct JointLossConfig {
  double lambda = 0.1;  // category-loss weight; >= 0
};

struct PoseLossResult {
  double value = 0.0;       // geodesic_distance(exp_map(y_pred), r_star), in [0, pi]
  Eigen::Vector3d grad;     // d value / d y_pred
};

// The 1/sin(theta_rel) factor of the acos derivative is clamped at 1e-3 so
// gradients stay bounded near theta_rel in {0, pi}.
PoseLossResult pose_loss(const Eigen::Vector3d& y_pred, const so3::Rotation& r_star);

struct CrossEntropyResult {
  double value = 0.0;            // -log p[c_star]
  Eigen::VectorXd grad_logits;   // p - onehot(c_star), valid for p = softmax(logits)
};

CrossEntropyResult cross_entropy(const Eigen::VectorXd& p, int c_star);

double joint_loss(const JointLossConfig& cfg, double pose_term, double category_term);

// Partial derivatives of exp_map w.r.t. the axis-angle components.
std::array<Eigen::Matrix3d, 3> exp_map_partials(const Eigen::Vector3d& y);

}  // namespace posefuse::loss

#endif
