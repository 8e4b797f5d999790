#include "coopsense/scene.hpp"

#include <cmath>
#include <stdexcept>

namespace coopsense {

void validate(const SceneSnapshot& scene) {
  if (!std::isfinite(scene.ground_z))
    throw std::invalid_argument("scene ground_z is not finite");
  for (const auto& b : scene.boxes) {
    if (!(b.length > 0.0 && b.width > 0.0 && b.height > 0.0))
      throw std::invalid_argument("box dimensions must be positive");
    if (!std::isfinite(b.cx) || !std::isfinite(b.cy) || !std::isfinite(b.cz) ||
        !std::isfinite(b.yaw) || !std::isfinite(b.length) ||
        !std::isfinite(b.width) || !std::isfinite(b.height))
      throw std::invalid_argument("box has a non-finite field");
  }
}

std::array<Eigen::Vector3d, 8> corners(const OrientedBox& box) {
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  std::array<Eigen::Vector3d, 8> out;
  int k = 0;
  for (int ix = -1; ix <= 1; ix += 2)
    for (int iy = -1; iy <= 1; iy += 2)
      for (int iz = -1; iz <= 1; iz += 2) {
        const double lx = 0.5 * ix * box.length;
        const double ly = 0.5 * iy * box.width;
        out[k++] = Eigen::Vector3d(box.cx + c * lx - s * ly,
                                   box.cy + s * lx + c * ly,
                                   box.cz + 0.5 * iz * box.height);
      }
  return out;
}

}  // namespace coopsense
