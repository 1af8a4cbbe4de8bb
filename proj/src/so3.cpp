#include "posefuse/so3.hpp"

#include <cmath>

#include "posefuse/errors.hpp"

namespace posefuse::so3 {

namespace {

constexpr double kTaylorAngle = 1e-8;   // small-angle branch for exp/log
constexpr double kNearPiMargin = 1e-6;  // log_map rejection band around pi

double clamp_unit(double x) { return std::max(-1.0, std::min(1.0, x)); }

}  // namespace

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
      -v.y(), v.x(), 0.0;
  return m;
}

Rotation exp_map(const AxisAngle& y) {
  const double theta2 = y.squaredNorm();
  const double theta = std::sqrt(theta2);
  const Eigen::Matrix3d w = skew(y);
  if (theta < kTaylorAngle) {
    return Eigen::Matrix3d::Identity() + w + 0.5 * w * w;
  }
  return Eigen::Matrix3d::Identity() + (std::sin(theta) / theta) * w +
         ((1.0 - std::cos(theta)) / theta2) * w * w;
}

AxisAngle log_map(const Rotation& r) {
  const double theta = std::acos(clamp_unit(0.5 * (r.trace() - 1.0)));
  if (theta > M_PI - kNearPiMargin) {
    throw NearPiRotation("log_map: rotation angle within 1e-6 of pi, axis ill-defined");
  }
  const Eigen::Vector3d w(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  if (theta < kTaylorAngle) {
    return 0.5 * w;
  }
  return (0.5 * theta / std::sin(theta)) * w;
}

double geodesic_distance(const Rotation& r1, const Rotation& r2) {
  const Eigen::Matrix3d m = r1 * r2.transpose();
  const double theta = std::acos(clamp_unit(0.5 * (m.trace() - 1.0)));
  if (theta < 1e-3) {
    // acos loses half the significant digits near 1; the antisymmetric part
    // is linear in theta and keeps tiny distances accurate
    const Eigen::Vector3d w(m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1));
    return std::asin(clamp_unit(0.5 * w.norm()));
  }
  return theta;
}

double viewpoint_error_deg(const Rotation& r, const Rotation& r_star) {
  // |acos[(trace(R^T R*) - 1)/2]|; trace(R^T R*) = trace(R R*^T), so this is
  // the geodesic distance expressed in degrees
  return rad_to_deg(geodesic_distance(r, r_star));
}

Rotation rot_x(double a) {
  Eigen::Matrix3d m;
  m << 1, 0, 0,
       0, std::cos(a), -std::sin(a),
       0, std::sin(a), std::cos(a);
  return m;
}

Rotation rot_y(double a) {
  Eigen::Matrix3d m;
  m << std::cos(a), 0, std::sin(a),
       0, 1, 0,
      -std::sin(a), 0, std::cos(a);
  return m;
}

Rotation rot_z(double a) {
  Eigen::Matrix3d m;
  m << std::cos(a), -std::sin(a), 0,
       std::sin(a), std::cos(a), 0,
       0, 0, 1;
  return m;
}

Rotation euler_to_rotation(const EulerPose& e) {
  return rot_y(e.tilt) * rot_x(e.elevation) * rot_z(e.azimuth);
}

double rotation_to_azimuth(const Rotation& r) {
  // row 1 of Ry(t)*Rx(e)*Rz(a) is (cos e sin a, cos e cos a, -sin e)
  const double sin_elev = -r(1, 2);
  if (std::abs(sin_elev) > std::cos(kNearPiMargin)) {
    throw GimbalLock("rotation_to_azimuth: |elevation| within 1e-6 of pi/2");
  }
  double az = std::atan2(r(1, 0), r(1, 1));
  if (az < 0.0) az += 2.0 * M_PI;
  if (az >= 2.0 * M_PI) az = 0.0;
  return az;
}

AxisAngle random_axis_angle(Rng& rng, double max_angle) {
  if (!(max_angle > 0.0) || max_angle > M_PI) {
    throw InvalidRange("random_axis_angle: max_angle must be in (0, pi]");
  }
  const double z = rng.uniform(-1.0, 1.0);
  const double phi = rng.uniform(0.0, 2.0 * M_PI);
  const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
  const Eigen::Vector3d axis(s * std::cos(phi), s * std::sin(phi), z);
  return rng.uniform(0.0, max_angle) * axis;
}

Rotation random_rotation(Rng& rng, double max_angle) {
  return exp_map(random_axis_angle(rng, max_angle));
}

bool is_rotation(const Rotation& r, double tol) {
  const double ortho = (r.transpose() * r - Eigen::Matrix3d::Identity()).norm();
  return ortho <= tol && std::abs(r.determinant() - 1.0) <= tol;
}

}  // namespace posefuse::so3
