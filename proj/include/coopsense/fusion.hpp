#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "coopsense/detection.hpp"
#include "coopsense/geometry.hpp"
#include "coopsense/network.hpp"

namespace coopsense::fusion {

using detection::Detection;
using traffic::Vec2;

/// Vehicle position after decision-level merging, mapped to a lane.
struct FusedVehicleObservation {
  double x = 0.0;
  double y = 0.0;
  int lane = 0;
  /// Arclength to the lane's stop bar. Negative past the bar on incoming
  /// lanes; on outgoing lanes, minus the distance travelled from the box.
  double dist_to_bar = 0.0;
  std::vector<std::string> sources;
  std::optional<std::int64_t> gt_id;
};

/// Moves detections from a sensor's local frame to the global frame.
/// Centers go through the sensor transform, extents are kept and the box
/// yaw picks up the sensor yaw.
std::vector<Detection> to_global(std::span<const Detection> detections,
                                 const geometry::Pose& sensor_pose,
                                 double mount_height);

/// Greedy duplicate removal: detections are visited nearest-to-center
/// first and one is kept unless a kept detection lies closer than
/// `threshold` (planar distance). Sources of dropped duplicates are added
/// to the detection that absorbed them.
std::vector<Detection> dedupe(std::span<const Detection> detections, double threshold,
                              Vec2 intersection_center);

/// Point-in-polygon with points on the boundary counted as inside.
bool inside_polygon(Vec2 p, std::span<const Vec2> polygon);

std::vector<Detection> geofence(std::span<const Detection> detections,
                                std::span<const Vec2> polygon);

struct LaneMatch {
  int lane = -1;
  double offset = 0.0;  // distance from the lane centerline
  double dist_to_bar = 0.0;
};

/// Nearest lane centerline to p. Incoming lanes are treated as continuing
/// through the intersection box. Returns lane -1 when every centerline is
/// farther than one lane width.
LaneMatch match_lane(Vec2 p, const traffic::RoadNetwork& network);

std::vector<FusedVehicleObservation> lane_map(std::span<const Detection> detections,
                                              const traffic::RoadNetwork& network);

struct FusionConfig {
  double dedupe_threshold = 5.0;
};

/// Counts after each stage, for diagnostics and pre/post evaluation.
struct FusionResult {
  std::vector<Detection> global;
  std::vector<Detection> fenced;
  std::vector<Detection> deduped;
  std::vector<FusedVehicleObservation> observations;
};

/// geofence -> dedupe -> lane_map on detections already in the global frame.
FusionResult fuse(std::span<const Detection> global_detections,
                  const traffic::RoadNetwork& network, const FusionConfig& cfg = {});

/// `frame lane dist_to_bar x y` records, one per line.
void write_observations(std::ostream& out, std::int64_t frame,
                        std::span<const FusedVehicleObservation> observations);
/// Parses records written by write_observations, grouped by frame in input
/// order. Throws std::runtime_error on malformed lines.
std::vector<std::pair<std::int64_t, std::vector<FusedVehicleObservation>>>
read_observations(std::istream& in);

}  // namespace coopsense::fusion
