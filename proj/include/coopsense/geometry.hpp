#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace coopsense::geometry {

/// Wraps an angle into (-pi, pi].
double wrap_angle(double radians);

/// Sensor or vehicle pose in the global frame. Angles are radians.
struct Pose {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double yaw = 0.0;
  double pitch = 0.0;
  double roll = 0.0;
};

/// Builds a pose with wrapped angles. Throws std::invalid_argument on
/// non-finite input.
Pose make_pose(double x, double y, double z, double yaw, double pitch = 0.0,
               double roll = 0.0);

bool is_finite(const Pose& pose);

struct Point {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double intensity = 0.0;

  bool operator==(const Point&) const = default;
};

struct PointCloud {
  std::string frame_id;
  std::vector<Point> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

/// Throws std::invalid_argument when a coordinate is non-finite or the
/// frame id is empty.
void validate(const PointCloud& cloud);

/// A sensor's pose, its mounting height above the carrier's reference
/// point, and the cloud it captured in its own local frame.
///
/// The sensor origin in the global frame is (x, y, z + mount_height), and
/// a local point p maps to the global frame as Rz(yaw) Ry(pitch) Rx(roll) p
/// plus that origin.
struct SensorFrame {
  std::string sensor_id;
  Pose pose;
  double mount_height = 1.0;
  PointCloud cloud;
};

/// Homogeneous rotation plus a translation applied after it: p' = R p + T.
struct Transform4 {
  Eigen::Matrix4d rotation = Eigen::Matrix4d::Identity();
  Eigen::Vector4d translation = Eigen::Vector4d::Zero();

  Eigen::Vector4d apply(const Eigen::Vector4d& homogeneous) const;
  Eigen::Vector3d apply(const Eigen::Vector3d& p) const;
  Point apply(const Point& p) const;
};

/// R = Rz(d_yaw) * Ry(d_pitch) * Rx(d_roll) in homogeneous 4x4 form.
Eigen::Matrix4d rotation_matrix(double d_yaw, double d_pitch, double d_roll);

/// Sign convention for the planar part of the translation vector.
///
/// kRightHanded rotates the position difference by -yaw_ego in a
/// right-handed x-forward/y-left frame; this is the convention every other
/// module uses. kYRight is the same formula written for a y-right
/// (left-handed) frame; in this frame it only holds for yaw 0 or pi.
enum class TranslationConvention { kRightHanded, kYRight };

/// (dx, dy, dz, 0) with the position difference taken as other - ego and
/// dz = delta_z + height_diff. Only the ego yaw enters the planar terms.
Eigen::Vector4d translation_vector(
    const Pose& ego, const Pose& other, double height_diff,
    TranslationConvention convention = TranslationConvention::kRightHanded);

/// Transform mapping points in `other`'s local frame into `ego`'s local
/// frame. Exact when the ego sensor is level (zero pitch and roll).
Transform4 relative_transform(
    const Pose& ego, double ego_mount_height, const Pose& other,
    double other_mount_height,
    TranslationConvention convention = TranslationConvention::kRightHanded);

/// Local sensor frame -> global frame.
Transform4 sensor_to_global(const Pose& pose, double mount_height);

/// Inverse of sensor_to_global (full 3D, not restricted to level poses).
Transform4 global_to_sensor(const Pose& pose, double mount_height);

/// Appends every other sensor's cloud, transformed into the ego frame, to a
/// copy of the ego cloud. Ego points are copied bit-for-bit.
PointCloud merge_clouds(
    const SensorFrame& ego, std::span<const SensorFrame> others,
    TranslationConvention convention = TranslationConvention::kRightHanded);

}  // namespace coopsense::geometry
