#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "coopsense/geometry.hpp"
#include "coopsense/scene.hpp"

namespace coopsense::lidar {

/// Spinning multi-beam LiDAR. Channels are spaced uniformly in elevation
/// from fov_min_deg to fov_max_deg; azimuth columns start at 0 and step by
/// azimuth_step_deg around the full circle.
struct LidarSpec {
  std::string sensor_id = "lidar";
  int channels = 64;
  double fov_min_deg = -25.0;
  double fov_max_deg = 5.0;
  double azimuth_step_deg = 0.4;
  double max_range = 100.0;
  geometry::Pose pose;
  double mount_height = 2.4;
  double range_noise_sigma = 0.0;
  std::uint64_t noise_seed = 0;
  /// Box id excluded from ray casting (the carrier's own body).
  std::optional<std::int64_t> self_id;
};

void validate(const LidarSpec& spec);

double channel_elevation_deg(const LidarSpec& spec, int channel);
int azimuth_columns(const LidarSpec& spec);

inline constexpr double kBoxIntensity = 1.0;
inline constexpr double kGroundIntensity = 0.3;
inline constexpr int kGroundHit = -1;

struct LabeledFrame {
  geometry::SensorFrame frame;
  /// Per point: index into scene.boxes, or kGroundHit.
  std::vector<int> hit_box;
};

/// Nearest-hit ray cast of every (azimuth, channel) ray. Points are emitted
/// azimuth-major in the sensor's local frame.
LabeledFrame cast_frame_labeled(const LidarSpec& spec,
                                const SceneSnapshot& scene);

geometry::SensorFrame cast_frame(const LidarSpec& spec,
                                 const SceneSnapshot& scene);

/// Entry distance of a ray into a box, if the ray hits it from outside.
/// `direction` must be unit length.
std::optional<double> ray_box_entry(const Eigen::Vector3d& origin,
                                    const Eigen::Vector3d& direction,
                                    const OrientedBox& box);

}  // namespace coopsense::lidar
