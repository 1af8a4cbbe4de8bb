// Test-only quaternion reference for the rotation algebra. Kept independent
// of the exp/log implementation under test.
#ifndef POSEFUSE_TESTS_QUATERNION_ORACLE_HPP
#define POSEFUSE_TESTS_QUATERNION_ORACLE_HPP

#include <Eigen/Dense>
#include <cmath>

namespace oracle {

struct Quat {
  double w = 1.0, x = 0.0, y = 0.0, z = 0.0;
};

inline Quat quat_from_axis_angle(const Eigen::Vector3d& v) {
  const double theta = v.norm();
  if (theta < 1e-300) return {1.0, 0.0, 0.0, 0.0};
  const Eigen::Vector3d axis = v / theta;
  const double s = std::sin(0.5 * theta);
  return {std::cos(0.5 * theta), s * axis.x(), s * axis.y(), s * axis.z()};
}

inline Eigen::Matrix3d rotation_from_quat(const Quat& q) {
  Eigen::Matrix3d r;
  const double ww = q.w * q.w, xx = q.x * q.x, yy = q.y * q.y, zz = q.z * q.z;
  r(0, 0) = ww + xx - yy - zz;
  r(0, 1) = 2.0 * (q.x * q.y - q.w * q.z);
  r(0, 2) = 2.0 * (q.x * q.z + q.w * q.y);
  r(1, 0) = 2.0 * (q.x * q.y + q.w * q.z);
  r(1, 1) = ww - xx + yy - zz;
  r(1, 2) = 2.0 * (q.y * q.z - q.w * q.x);
  r(2, 0) = 2.0 * (q.x * q.z - q.w * q.y);
  r(2, 1) = 2.0 * (q.y * q.z + q.w * q.x);
  r(2, 2) = ww - xx - yy + zz;
  return r;
}

inline Quat quat_from_rotation(const Eigen::Matrix3d& r) {
  // Shepperd's method: pick the largest diagonal combination for stability
  Quat q;
  const double tr = r.trace();
  if (tr > 0.0) {
    double s = std::sqrt(tr + 1.0) * 2.0;
    q.w = 0.25 * s;
    q.x = (r(2, 1) - r(1, 2)) / s;
    q.y = (r(0, 2) - r(2, 0)) / s;
    q.z = (r(1, 0) - r(0, 1)) / s;
  } else if (r(0, 0) > r(1, 1) && r(0, 0) > r(2, 2)) {
    double s = std::sqrt(1.0 + r(0, 0) - r(1, 1) - r(2, 2)) * 2.0;
    q.w = (r(2, 1) - r(1, 2)) / s;
    q.x = 0.25 * s;
    q.y = (r(0, 1) + r(1, 0)) / s;
    q.z = (r(0, 2) + r(2, 0)) / s;
  } else if (r(1, 1) > r(2, 2)) {
    double s = std::sqrt(1.0 + r(1, 1) - r(0, 0) - r(2, 2)) * 2.0;
    q.w = (r(0, 2) - r(2, 0)) / s;
    q.x = (r(0, 1) + r(1, 0)) / s;
    q.y = 0.25 * s;
    q.z = (r(1, 2) + r(2, 1)) / s;
  } else {
    double s = std::sqrt(1.0 + r(2, 2) - r(0, 0) - r(1, 1)) * 2.0;
    q.w = (r(1, 0) - r(0, 1)) / s;
    q.x = (r(0, 2) + r(2, 0)) / s;
    q.y = (r(1, 2) + r(2, 1)) / s;
    q.z = 0.25 * s;
  }
  return q;
}

inline Quat conjugate(const Quat& q) { return {q.w, -q.x, -q.y, -q.z}; }

inline Quat multiply(const Quat& a, const Quat& b) {
  return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
          a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
          a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
          a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}

// angle of the relative rotation between two quaternions, in [0, pi]
inline double relative_angle(const Quat& a, const Quat& b) {
  const Quat rel = multiply(a, conjugate(b));
  const double vec = std::sqrt(rel.x * rel.x + rel.y * rel.y + rel.z * rel.z);
  return 2.0 * std::atan2(vec, std::abs(rel.w));
}

inline double relative_angle(const Eigen::Matrix3d& r1, const Eigen::Matrix3d& r2) {
  return relative_angle(quat_from_rotation(r1), quat_from_rotation(r2));
}

}  // namespace oracle

#endif
