#pragma once

#include <cmath>
#include <numbers>

#include <Eigen/Geometry>

#include "coopsense/geometry.hpp"
#include "coopsense/rng.hpp"

namespace testsupport {

using coopsense::geometry::Pose;

// Body-to-world rotation built from axis-angle factors, independent of the
// library's matrix code.
inline Eigen::Matrix3d world_rotation(const Pose& p) {
  return (Eigen::AngleAxisd(p.yaw, Eigen::Vector3d::UnitZ()) *
          Eigen::AngleAxisd(p.pitch, Eigen::Vector3d::UnitY()) *
          Eigen::AngleAxisd(p.roll, Eigen::Vector3d::UnitX()))
      .toRotationMatrix();
}

inline Eigen::Vector3d origin(const Pose& p, double mount_height) {
  return {p.x, p.y, p.z + mount_height};
}

// What a sensor at (p, h) sees of a global point.
inline Eigen::Vector3d observe(const Pose& p, double h, const Eigen::Vector3d& global) {
  return world_rotation(p).transpose() * (global - origin(p, h));
}

inline Eigen::Vector3d to_world(const Pose& p, double h, const Eigen::Vector3d& local) {
  return world_rotation(p) * local + origin(p, h);
}

inline Pose random_pose(coopsense::Rng& rng, bool level) {
  Pose p;
  p.x = rng.uniform(-200, 200);
  p.y = rng.uniform(-200, 200);
  p.z = rng.uniform(-2, 2);
  p.yaw = rng.uniform(-std::numbers::pi, std::numbers::pi);
  if (!level) {
    p.pitch = rng.uniform(-0.3, 0.3);
    p.roll = rng.uniform(-0.3, 0.3);
  }
  return p;
}

}  // namespace testsupport
