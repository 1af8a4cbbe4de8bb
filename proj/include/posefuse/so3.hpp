#ifndef POSEFUSE_SO3_HPP
#define POSEFUSE_SO3_HPP

#include <Eigen/Dense>

#include "posefuse/random.hpp"

namespace posefuse::so3 {

// y = theta * v with theta = |y|, v = y/|y|; canonical range theta in [0, pi)
using AxisAngle = Eigen::Vector3d;
using Rotation = Eigen::Matrix3d;

struct EulerPose {
  double azimuth = 0.0;    // [0, 2*pi)
  double elevation = 0.0;  // (-pi/2, pi/2)
  double tilt = 0.0;       // [-pi, pi)
};

Eigen::Matrix3d skew(const Eigen::Vector3d& v);

// Rodrigues formula; second-order Taylor branch below theta = 1e-8
Rotation exp_map(const AxisAngle& y);

// Inverse of exp_map on the canonical range. Throws NearPiRotation once the
// geodesic angle exceeds pi - 1e-6, where the axis is numerically ill-defined.
AxisAngle log_map(const Rotation& r);

// |log(R1 * R2^T)|_F / sqrt(2), evaluated through the acos-trace form; [0, pi]
double geodesic_distance(const Rotation& r1, const Rotation& r2);

// |acos[(trace(R^T R*) - 1) / 2]| in degrees
double viewpoint_error_deg(const Rotation& r, const Rotation& r_star);

// Fixed convention: R = Ry(tilt) * Rx(elevation) * Rz(azimuth), i.e. extrinsic
// z-axis azimuth first, then elevation about x, then tilt about the viewing
// (y) axis. rotation_to_azimuth inverts the azimuth component of the same
// convention and the synthetic data generator shares it.
Rotation euler_to_rotation(const EulerPose& e);

// Throws GimbalLock when |elevation| > pi/2 - 1e-6.
double rotation_to_azimuth(const Rotation& r);

Rotation rot_x(double angle);
Rotation rot_y(double angle);
Rotation rot_z(double angle);

// Axis uniform on the sphere, angle uniform in [0, max_angle).
// Throws InvalidRange unless 0 < max_angle <= pi.
AxisAngle random_axis_angle(Rng& rng, double max_angle);
Rotation random_rotation(Rng& rng, double max_angle);

bool is_rotation(const Rotation& r, double tol = 1e-9);

inline double deg_to_rad(double d) { return d * M_PI / 180.0; }
inline double rad_to_deg(double r) { return r * 180.0 / M_PI; }

}  // namespace posefuse::so3

#endif
