#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace coopsense {

/// Box with length along its heading, width across it, and yaw about +z.
/// Static roadside objects (vegetation, walls, buildings) carry negative
/// ids and is_vehicle = false.
struct OrientedBox {
  double cx = 0.0;
  double cy = 0.0;
  double cz = 0.0;
  double length = 1.0;
  double width = 1.0;
  double height = 1.0;
  double yaw = 0.0;
  std::int64_t id = 0;
  bool is_vehicle = true;
};

struct SceneSnapshot {
  std::vector<OrientedBox> boxes;
  double ground_z = 0.0;
};

/// Throws std::invalid_argument on non-positive dimensions or non-finite
/// values.
void validate(const SceneSnapshot& scene);

std::array<Eigen::Vector3d, 8> corners(const OrientedBox& box);

}  // namespace coopsense
