#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "coopsense/geometry.hpp"

namespace coopsense::detection {

struct SizeBounds {
  double min_length = 0.5;
  double max_length = 6.0;
  double min_width = 0.5;
  double max_width = 3.0;
  double min_height = 0.1;
  double max_height = 2.0;
};

struct DetectorConfig {
  double ransac_distance = 0.2;
  int ransac_sample = 3;
  int ransac_iters = 3000;
  int ransac_passes = 2;
  /// Adaptive stopping: a pass ends once this probability of having drawn
  /// an all-inlier sample is reached (never beyond ransac_iters).
  double ransac_confidence = 0.999;
  /// Passes after the first only accept planes that look like more ground:
  /// tilted at most this much from the first plane...
  double ground_max_tilt_deg = 10.0;
  /// ...offset at most this much from it (measured at the first plane's
  /// inlier centroid)...
  double ground_max_offset = 1.0;
  /// ...and supported by at least this fraction of the first pass's inliers.
  double ground_min_support = 0.05;

  double dbscan_eps = 1.25;
  int dbscan_min_pts = 3;
  SizeBounds bounds;
};

/// Throws std::invalid_argument when a parameter is non-positive or a bound
/// is inverted.
void validate(const DetectorConfig& cfg);

/// Box given by its center and full extents along the frame axes, plus the
/// yaw of those axes relative to the frame the box is expressed in (zero
/// for fresh detections, the sensor yaw after moving to the global frame).
struct Box3 {
  double cx = 0.0;
  double cy = 0.0;
  double cz = 0.0;
  double ex = 0.0;
  double ey = 0.0;
  double ez = 0.0;
  double yaw = 0.0;

  /// Smallest box with yaw 0 that contains this one.
  Box3 axis_aligned_envelope() const;
};

struct Detection {
  Box3 box;
  /// Number of points in the supporting cluster.
  int score = 0;
  std::vector<std::string> sources;
  std::string frame_id;
};

struct Plane {
  // Unit normal with nz >= 0: nx*x + ny*y + nz*z + d = 0.
  double nx = 0.0;
  double ny = 0.0;
  double nz = 1.0;
  double d = 0.0;

  double distance(const geometry::Point& p) const {
    return nx * p.x + ny * p.y + nz * p.z + d;
  }
};

struct GroundRemovalResult {
  geometry::PointCloud remaining;
  std::vector<Plane> planes;
  /// Indices (into the input cloud) of the surviving points.
  std::vector<std::size_t> kept;
};

/// Repeated RANSAC plane fits; each accepted plane's inliers are removed
/// and the next pass runs on the survivors.
GroundRemovalResult ransac_ground_removal_detailed(
    const geometry::PointCloud& cloud, const DetectorConfig& cfg,
    std::uint64_t seed);

geometry::PointCloud ransac_ground_removal(const geometry::PointCloud& cloud,
                                          const DetectorConfig& cfg,
                                          std::uint64_t seed);

using Cluster = std::vector<std::size_t>;

/// Grid-accelerated DBSCAN. A point is core when at least min_pts points
/// (itself included) lie within eps. Clusters come out in the order of
/// their lowest core index; a border point joins the first cluster that
/// reaches it. Indices inside a cluster are ascending.
std::vector<Cluster> dbscan(const geometry::PointCloud& cloud, double eps,
                            int min_pts);

/// Keeps clusters whose axis-aligned extents fit the bounds. Length is the
/// larger horizontal extent and width the smaller.
std::vector<Detection> size_filter(const std::vector<Cluster>& clusters,
                                   const geometry::PointCloud& cloud,
                                   const SizeBounds& bounds);

bool within_bounds(const Box3& box, const SizeBounds& bounds);

/// Ground removal, clustering and size filtering. Boxes are in the cloud's
/// frame and sources hold the cloud's frame id.
std::vector<Detection> detect(const geometry::PointCloud& cloud,
                              const DetectorConfig& cfg, std::uint64_t seed);

}  // namespace coopsense::detection
