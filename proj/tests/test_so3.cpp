#include "posefuse/so3.hpp"

#include <cmath>

#include "doctest.h"
#include "posefuse/errors.hpp"
#include "quaternion_oracle.hpp"

using namespace posefuse;
using so3::AxisAngle;
using so3::Rotation;

namespace {

AxisAngle sample_axis_angle(Rng& rng, double max_norm) {
  return so3::random_axis_angle(rng, max_norm);
}

}  // namespace

TEST_CASE("skew matches the fixed layout and the cross product") {
  CHECK(so3::skew(Eigen::Vector3d::Zero()).isZero(0.0));

  Eigen::Matrix3d expected;
  expected << 0, -1, 0, 1, 0, 0, 0, 0, 0;
  CHECK((so3::skew(Eigen::Vector3d(0, 0, 1)) - expected).norm() == 0.0);

  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const Eigen::Vector3d v(rng.normal(), rng.normal(), rng.normal());
    const Eigen::Vector3d w(rng.normal(), rng.normal(), rng.normal());
    // brute-force cross product, component by component
    const Eigen::Vector3d cross(v.y() * w.z() - v.z() * w.y(), v.z() * w.x() - v.x() * w.z(),
                                v.x() * w.y() - v.y() * w.x());
    CHECK((so3::skew(v) * w - cross).norm() < 1e-14);
    const Eigen::Matrix3d s = so3::skew(v);
    CHECK((s + s.transpose()).norm() == 0.0);
  }
}

TEST_CASE("exp_map canonical values") {
  CHECK((so3::exp_map(AxisAngle::Zero()) - Rotation::Identity()).norm() == 0.0);

  Rotation expected;
  expected << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  CHECK((so3::exp_map(AxisAngle(0, 0, M_PI / 2)) - expected).norm() < 1e-15);
}

TEST_CASE("exp_map matches the quaternion oracle on 1e4 random vectors") {
  Rng rng(42);
  for (int i = 0; i < 10000; ++i) {
    const AxisAngle y = sample_axis_angle(rng, M_PI - 1e-3);
    const Rotation r = so3::exp_map(y);
    const Rotation r_oracle = oracle::rotation_from_quat(oracle::quat_from_axis_angle(y));
    CHECK((r - r_oracle).norm() < 1e-12);
    CHECK(so3::is_rotation(r));
  }
}

TEST_CASE("log_map canonical values and near-pi rejection") {
  CHECK(so3::log_map(Rotation::Identity()).norm() == 0.0);

  Rotation r;
  r << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  CHECK((so3::log_map(r) - AxisAngle(0, 0, M_PI / 2)).norm() < 1e-15);

  CHECK_THROWS_AS(so3::log_map(so3::exp_map(AxisAngle(M_PI - 1e-9, 0, 0))), NearPiRotation);
  // just inside the band still works
  CHECK_NOTHROW(so3::log_map(so3::exp_map(AxisAngle(M_PI - 1e-4, 0, 0))));
}

TEST_CASE("exp/log round-trip within 1e-9 over 1e4 samples") {
  Rng rng(7);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const AxisAngle y = sample_axis_angle(rng, M_PI - 1e-3);
    const AxisAngle back = so3::log_map(so3::exp_map(y));
    worst = std::max(worst, (back - y).norm());
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("geodesic_distance values and quaternion agreement") {
  const Rotation id = Rotation::Identity();
  CHECK(so3::geodesic_distance(id, id) == 0.0);
  CHECK(so3::geodesic_distance(so3::rot_z(M_PI / 2), id) == doctest::Approx(M_PI / 2).epsilon(1e-12));

  Rng rng(3);
  for (int i = 0; i < 2000; ++i) {
    const Rotation r1 = so3::random_rotation(rng, M_PI);
    const Rotation r2 = so3::random_rotation(rng, M_PI);
    const double d = so3::geodesic_distance(r1, r2);
    CHECK(d == doctest::Approx(oracle::relative_angle(r1, r2)).epsilon(1e-10));
    CHECK(std::abs(d - so3::geodesic_distance(r2, r1)) <= 1e-9);
    CHECK(d >= 0.0);
    CHECK(d <= M_PI);
  }
}

TEST_CASE("geodesic_distance is a metric on random triples") {
  Rng rng(11);
  for (int i = 0; i < 500; ++i) {
    const Rotation a = so3::random_rotation(rng, M_PI);
    const Rotation b = so3::random_rotation(rng, M_PI);
    const Rotation c = so3::random_rotation(rng, M_PI);
    const double ab = so3::geodesic_distance(a, b);
    const double bc = so3::geodesic_distance(b, c);
    const double ac = so3::geodesic_distance(a, c);
    CHECK(ac <= ab + bc + 1e-9);
    CHECK(so3::geodesic_distance(a, a) <= 1e-9);
  }
}

TEST_CASE("geodesic distance from identity recovers the angle") {
  Rng rng(13);
  for (int i = 0; i < 2000; ++i) {
    const AxisAngle y = sample_axis_angle(rng, M_PI - 1e-3);
    const double d = so3::geodesic_distance(so3::exp_map(y), Rotation::Identity());
    CHECK(std::abs(d - y.norm()) <= 1e-9);
  }
}

TEST_CASE("viewpoint_error_deg agrees with geodesic_distance") {
  const Rotation id = Rotation::Identity();
  CHECK(so3::viewpoint_error_deg(id, id) == 0.0);
  CHECK(so3::viewpoint_error_deg(so3::rot_z(M_PI), id) == doctest::Approx(180.0).epsilon(1e-12));

  Rng rng(17);
  for (int i = 0; i < 10000; ++i) {
    const Rotation r1 = so3::random_rotation(rng, M_PI);
    const Rotation r2 = so3::random_rotation(rng, M_PI);
    const double deg = so3::viewpoint_error_deg(r1, r2);
    const double rad = so3::geodesic_distance(r1, r2);
    CHECK(std::abs(deg - rad * 180.0 / M_PI) < 1e-10);
  }
}

TEST_CASE("euler conventions") {
  CHECK((so3::euler_to_rotation({0, 0, 0}) - Rotation::Identity()).norm() == 0.0);
  CHECK((so3::euler_to_rotation({M_PI / 2, 0, 0}) - so3::rot_z(M_PI / 2)).norm() < 1e-15);

  CHECK(so3::rotation_to_azimuth(Rotation::Identity()) == 0.0);
  CHECK(so3::rotation_to_azimuth(so3::rot_z(3 * M_PI / 2)) ==
        doctest::Approx(3 * M_PI / 2).epsilon(1e-12));
  CHECK(so3::rotation_to_azimuth(so3::euler_to_rotation({2.0, 0.3, -0.4})) ==
        doctest::Approx(2.0).epsilon(1e-9));

  Rng rng(23);
  for (int i = 0; i < 2000; ++i) {
    so3::EulerPose e;
    e.azimuth = rng.uniform(0.0, 2.0 * M_PI);
    e.elevation = rng.uniform(-M_PI / 2 + 1e-3, M_PI / 2 - 1e-3);
    e.tilt = rng.uniform(-M_PI, M_PI);
    const double az = so3::rotation_to_azimuth(so3::euler_to_rotation(e));
    const double diff = std::abs(az - e.azimuth);
    CHECK(std::min(diff, 2.0 * M_PI - diff) < 1e-9);
  }

  CHECK_THROWS_AS(so3::rotation_to_azimuth(so3::euler_to_rotation({1.0, M_PI / 2, 0.0})),
                  GimbalLock);
}

TEST_CASE("random_rotation determinism and range handling") {
  Rng a(99), b(99);
  const Rotation ra = so3::random_rotation(a, M_PI);
  const Rotation rb = so3::random_rotation(b, M_PI);
  CHECK((ra - rb).norm() == 0.0);

  Rng rng(5);
  const Rotation tiny = so3::random_rotation(rng, 1e-12);
  CHECK((tiny - Rotation::Identity()).norm() < 1e-9);

  CHECK_THROWS_AS(so3::random_rotation(rng, 0.0), InvalidRange);
  CHECK_THROWS_AS(so3::random_rotation(rng, M_PI + 0.1), InvalidRange);
  CHECK_THROWS_AS(so3::random_rotation(rng, -1.0), InvalidRange);
}

TEST_CASE("random_rotation axis symmetry over 1e4 draws") {
  Rng rng(31);
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (int i = 0; i < 10000; ++i) {
    const AxisAngle y = so3::random_axis_angle(rng, M_PI);
    mean += y.normalized();
  }
  mean /= 10000.0;
  CHECK(mean.cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("every constructor output satisfies the rotation invariants") {
  Rng rng(37);
  for (int i = 0; i < 1000; ++i) {
    CHECK(so3::is_rotation(so3::random_rotation(rng, M_PI)));
    so3::EulerPose e{rng.uniform(0, 2 * M_PI), rng.uniform(-1.4, 1.4), rng.uniform(-3.0, 3.0)};
    CHECK(so3::is_rotation(so3::euler_to_rotation(e)));
  }
}
