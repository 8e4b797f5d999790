#include "coopsense/geometry.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace coopsense::geometry {

double wrap_angle(double radians) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  double wrapped = std::remainder(radians, kTwoPi);
  if (wrapped <= -std::numbers::pi) wrapped += kTwoPi;
  return wrapped;
}

bool is_finite(const Pose& p) {
  return std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.z) &&
         std::isfinite(p.yaw) && std::isfinite(p.pitch) &&
         std::isfinite(p.roll);
}

Pose make_pose(double x, double y, double z, double yaw, double pitch,
               double roll) {
  Pose p{x, y, z, yaw, pitch, roll};
  if (!is_finite(p)) throw std::invalid_argument("pose has non-finite field");
  p.yaw = wrap_angle(yaw);
  p.pitch = wrap_angle(pitch);
  p.roll = wrap_angle(roll);
  return p;
}

void validate(const PointCloud& cloud) {
  if (cloud.frame_id.empty())
    throw std::invalid_argument("point cloud frame id is empty");
  for (const auto& p : cloud.points) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z) ||
        !std::isfinite(p.intensity))
      throw std::invalid_argument("point cloud '" + cloud.frame_id +
                                  "' has a non-finite point");
  }
}

Eigen::Vector4d Transform4::apply(const Eigen::Vector4d& homogeneous) const {
  return rotation * homogeneous + translation;
}

Eigen::Vector3d Transform4::apply(const Eigen::Vector3d& p) const {
  const Eigen::Vector4d out = apply(Eigen::Vector4d(p.x(), p.y(), p.z(), 1.0));
  return out.head<3>();
}

Point Transform4::apply(const Point& p) const {
  const Eigen::Vector4d out = apply(Eigen::Vector4d(p.x, p.y, p.z, 1.0));
  return Point{out.x(), out.y(), out.z(), p.intensity};
}

Eigen::Matrix4d rotation_matrix(double d_yaw, double d_pitch, double d_roll) {
  if (!std::isfinite(d_yaw) || !std::isfinite(d_pitch) ||
      !std::isfinite(d_roll))
    throw std::invalid_argument("rotation angles must be finite");

  const double cy = std::cos(d_yaw), sy = std::sin(d_yaw);
  const double cp = std::cos(d_pitch), sp = std::sin(d_pitch);
  const double cr = std::cos(d_roll), sr = std::sin(d_roll);

  Eigen::Matrix4d rz;
  rz << cy, -sy, 0, 0,
        sy,  cy, 0, 0,
         0,   0, 1, 0,
         0,   0, 0, 1;
  Eigen::Matrix4d ry;
  ry <<  cp, 0, sp, 0,
          0, 1,  0, 0,
        -sp, 0, cp, 0,
          0, 0,  0, 1;
  Eigen::Matrix4d rx;
  rx << 1,  0,   0, 0,
        0, cr, -sr, 0,
        0, sr,  cr, 0,
        0,  0,   0, 1;
  return rz * ry * rx;
}

Eigen::Vector4d translation_vector(const Pose& ego, const Pose& other,
                                   double height_diff,
                                   TranslationConvention convention) {
  if (!is_finite(ego) || !is_finite(other) || !std::isfinite(height_diff))
    throw std::invalid_argument("translation inputs must be finite");

  const double delta_x = other.x - ego.x;
  const double delta_y = other.y - ego.y;
  const double delta_z = other.z - ego.z;
  const double c = std::cos(-ego.yaw);
  const double s = std::sin(-ego.yaw);

  double dx = 0.0;
  double dy = 0.0;
  switch (convention) {
    case TranslationConvention::kRightHanded:
      dx = delta_x * c - delta_y * s;
      dy = delta_x * s + delta_y * c;
      break;
    case TranslationConvention::kYRight:
      dx = delta_x * c + delta_y * s;
      dy = -(delta_x * -s + delta_y * c);
      break;
  }
  return {dx, dy, delta_z + height_diff, 0.0};
}

Transform4 relative_transform(const Pose& ego, double ego_mount_height,
                              const Pose& other, double other_mount_height,
                              TranslationConvention convention) {
  Transform4 t;
  t.rotation = rotation_matrix(wrap_angle(other.yaw - ego.yaw),
                               wrap_angle(other.pitch - ego.pitch),
                               wrap_angle(other.roll - ego.roll));
  t.translation = translation_vector(
      ego, other, other_mount_height - ego_mount_height, convention);
  return t;
}

Transform4 sensor_to_global(const Pose& pose, double mount_height) {
  // The global frame is a level "sensor" at the origin with zero height.
  return relative_transform(Pose{}, 0.0, pose, mount_height);
}

Transform4 global_to_sensor(const Pose& pose, double mount_height) {
  const Transform4 forward = sensor_to_global(pose, mount_height);
  Transform4 inverse;
  inverse.rotation = forward.rotation.transpose();
  const Eigen::Vector3d origin = forward.translation.head<3>();
  const Eigen::Vector3d back =
      -(forward.rotation.topLeftCorner<3, 3>().transpose() * origin);
  inverse.translation = Eigen::Vector4d(back.x(), back.y(), back.z(), 0.0);
  return inverse;
}

PointCloud merge_clouds(const SensorFrame& ego,
                        std::span<const SensorFrame> others,
                        TranslationConvention convention) {
  PointCloud merged = ego.cloud;
  std::size_t total = ego.cloud.size();
  for (const auto& f : others) total += f.cloud.size();
  merged.points.reserve(total);

  for (const auto& other : others) {
    const Transform4 t = relative_transform(ego.pose, ego.mount_height,
                                            other.pose, other.mount_height,
                                            convention);
    for (const auto& p : other.cloud.points) merged.points.push_back(t.apply(p));
  }
  return merged;
}

}  // namespace coopsense::geometry
