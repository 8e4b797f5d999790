#include "coopsense/lidar_sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "coopsense/rng.hpp"

namespace coopsense::lidar {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

struct PreparedBox {
  int index;
  double cos_yaw;
  double sin_yaw;
  Eigen::Vector3d origin_in_box;  // sensor origin in the box frame
  Eigen::Vector3d half;
};

std::optional<double> slab_entry(const Eigen::Vector3d& q,
                                 const Eigen::Vector3d& e,
                                 const Eigen::Vector3d& half) {
  double t_enter = -std::numeric_limits<double>::infinity();
  double t_exit = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 3; ++i) {
    if (std::abs(e[i]) < 1e-15) {
      if (std::abs(q[i]) > half[i]) return std::nullopt;
      continue;
    }
    double t1 = (-half[i] - q[i]) / e[i];
    double t2 = (half[i] - q[i]) / e[i];
    if (t1 > t2) std::swap(t1, t2);
    t_enter = std::max(t_enter, t1);
    t_exit = std::min(t_exit, t2);
    if (t_enter > t_exit) return std::nullopt;
  }
  if (t_enter <= 0.0) return std::nullopt;  // origin inside or box behind
  return t_enter;
}

}  // namespace

void validate(const LidarSpec& spec) {
  if (spec.channels < 1) throw std::invalid_argument("lidar needs >= 1 channel");
  if (!(spec.max_range > 0.0))
    throw std::invalid_argument("lidar max_range must be positive");
  if (!(spec.fov_min_deg < spec.fov_max_deg))
    throw std::invalid_argument("lidar vertical fov min must be below max");
  if (!(spec.azimuth_step_deg > 0.0) || spec.azimuth_step_deg > 360.0)
    throw std::invalid_argument("lidar azimuth step must be in (0, 360]");
  if (!(spec.mount_height > 0.0))
    throw std::invalid_argument("lidar mount height must be positive");
  if (spec.range_noise_sigma < 0.0)
    throw std::invalid_argument("lidar range noise must be >= 0");
  if (!geometry::is_finite(spec.pose))
    throw std::invalid_argument("lidar pose is not finite");
}

double channel_elevation_deg(const LidarSpec& spec, int channel) {
  if (spec.channels == 1) return spec.fov_min_deg;
  return spec.fov_min_deg + (spec.fov_max_deg - spec.fov_min_deg) * channel /
                                (spec.channels - 1);
}

int azimuth_columns(const LidarSpec& spec) {
  return std::max(1, static_cast<int>(std::lround(360.0 / spec.azimuth_step_deg)));
}

std::optional<double> ray_box_entry(const Eigen::Vector3d& origin,
                                    const Eigen::Vector3d& direction,
                                    const OrientedBox& box) {
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  const Eigen::Vector3d rel(origin.x() - box.cx, origin.y() - box.cy,
                            origin.z() - box.cz);
  const Eigen::Vector3d q(c * rel.x() + s * rel.y(), -s * rel.x() + c * rel.y(),
                          rel.z());
  const Eigen::Vector3d e(c * direction.x() + s * direction.y(),
                          -s * direction.x() + c * direction.y(), direction.z());
  return slab_entry(q, e,
                    Eigen::Vector3d(0.5 * box.length, 0.5 * box.width,
                                    0.5 * box.height));
}

LabeledFrame cast_frame_labeled(const LidarSpec& spec,
                                const SceneSnapshot& scene) {
  validate(spec);
  validate(scene);

  const geometry::Transform4 to_global =
      geometry::sensor_to_global(spec.pose, spec.mount_height);
  const geometry::Transform4 to_local =
      geometry::global_to_sensor(spec.pose, spec.mount_height);
  const Eigen::Matrix3d rot = to_global.rotation.topLeftCorner<3, 3>();
  const Eigen::Vector3d origin = to_global.translation.head<3>();

  const int columns = azimuth_columns(spec);
  const double step = spec.azimuth_step_deg * kDegToRad;

  // Broad phase: bucket each box into the azimuth columns its silhouette
  // can cover, measured in the sensor's local frame.
  std::vector<PreparedBox> prepared;
  std::vector<std::vector<int>> column_boxes(columns);
  std::vector<int> everywhere;
  for (int bi = 0; bi < static_cast<int>(scene.boxes.size()); ++bi) {
    const auto& box = scene.boxes[bi];
    if (spec.self_id && *spec.self_id == box.id) continue;
    PreparedBox pb;
    pb.index = bi;
    pb.cos_yaw = std::cos(box.yaw);
    pb.sin_yaw = std::sin(box.yaw);
    const Eigen::Vector3d rel = origin - Eigen::Vector3d(box.cx, box.cy, box.cz);
    pb.origin_in_box = Eigen::Vector3d(pb.cos_yaw * rel.x() + pb.sin_yaw * rel.y(),
                                       -pb.sin_yaw * rel.x() + pb.cos_yaw * rel.y(),
                                       rel.z());
    pb.half = Eigen::Vector3d(0.5 * box.length, 0.5 * box.width, 0.5 * box.height);
    const int slot = static_cast<int>(prepared.size());
    prepared.push_back(pb);

    const Eigen::Vector3d center_local =
        to_local.apply(Eigen::Vector3d(box.cx, box.cy, box.cz));
    const double radius = pb.half.norm();
    const double horizontal = std::hypot(center_local.x(), center_local.y());
    if (horizontal - radius > spec.max_range) continue;  // out of reach
    if (horizontal <= radius + 1e-9) {
      everywhere.push_back(slot);
      continue;
    }
    const auto box_corners = corners(box);
    const double ref = std::atan2(center_local.y(), center_local.x());
    double lo = 0.0, hi = 0.0;
    for (const auto& corner : box_corners) {
      const Eigen::Vector3d cl = to_local.apply(corner);
      const double rel_angle =
          geometry::wrap_angle(std::atan2(cl.y(), cl.x()) - ref);
      lo = std::min(lo, rel_angle);
      hi = std::max(hi, rel_angle);
    }
    const int first = static_cast<int>(std::floor((ref + lo) / step)) - 1;
    const int last = static_cast<int>(std::ceil((ref + hi) / step)) + 1;
    for (int k = first; k <= last; ++k)
      column_boxes[((k % columns) + columns) % columns].push_back(slot);
  }
  for (auto& col : column_boxes) {
    std::sort(col.begin(), col.end());
    col.erase(std::unique(col.begin(), col.end()), col.end());
  }

  std::vector<double> cos_el(spec.channels), sin_el(spec.channels);
  for (int ch = 0; ch < spec.channels; ++ch) {
    const double el = channel_elevation_deg(spec, ch) * kDegToRad;
    cos_el[ch] = std::cos(el);
    sin_el[ch] = std::sin(el);
  }

  Rng noise(spec.noise_seed, 0x11da4);
  LabeledFrame out;
  out.frame.sensor_id = spec.sensor_id;
  out.frame.pose = spec.pose;
  out.frame.mount_height = spec.mount_height;
  out.frame.cloud.frame_id = spec.sensor_id;

  for (int k = 0; k < columns; ++k) {
    const double az = k * step;
    const double ca = std::cos(az), sa = std::sin(az);
    const auto& candidates = column_boxes[k];
    for (int ch = 0; ch < spec.channels; ++ch) {
      const Eigen::Vector3d d_local(cos_el[ch] * ca, cos_el[ch] * sa, sin_el[ch]);
      const Eigen::Vector3d d = rot * d_local;

      double best = std::numeric_limits<double>::infinity();
      int best_box = kGroundHit;
      bool hit = false;
      if (d.z() < 0.0) {
        const double t = (scene.ground_z - origin.z()) / d.z();
        if (t > 0.0) {
          best = t;
          hit = true;
        }
      }
      auto test_box = [&](int slot) {
        const auto& pb = prepared[slot];
        const Eigen::Vector3d e(pb.cos_yaw * d.x() + pb.sin_yaw * d.y(),
                                -pb.sin_yaw * d.x() + pb.cos_yaw * d.y(), d.z());
        const auto t = slab_entry(pb.origin_in_box, e, pb.half);
        if (t && *t < best) {
          best = *t;
          best_box = pb.index;
          hit = true;
        }
      };
      for (int slot : candidates) test_box(slot);
      for (int slot : everywhere) test_box(slot);

      if (!hit || best > spec.max_range) continue;
      double range = best;
      if (spec.range_noise_sigma > 0.0)
        range = std::clamp(range + noise.normal(0.0, spec.range_noise_sigma),
                           0.0, spec.max_range);
      const Eigen::Vector3d p = range * d_local;
      out.frame.cloud.points.push_back(
          {p.x(), p.y(), p.z(),
           best_box == kGroundHit ? kGroundIntensity : kBoxIntensity});
      out.hit_box.push_back(best_box);
    }
  }
  return out;
}

geometry::SensorFrame cast_frame(const LidarSpec& spec,
                                 const SceneSnapshot& scene) {
  return cast_frame_labeled(spec, scene).frame;
}

}  // namespace coopsense::lidar
