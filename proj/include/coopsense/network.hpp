#pragma once

#include <string>
#include <vector>

namespace coopsense::traffic {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

enum class LaneRole { kIncoming, kOutgoing };

/// Straight lane centerline. Incoming lanes end at their stop bar;
/// outgoing lanes start where vehicles leave the intersection box.
struct Lane {
  int index = 0;
  std::string id;
  LaneRole role = LaneRole::kIncoming;
  int approach = 0;
  Vec2 start;
  Vec2 end;

  double length() const;
  Vec2 direction() const;
};

/// One road arm of the intersection. Incoming lanes drive toward the
/// intersection along `heading`; outgoing lanes on the same arm drive away.
struct Approach {
  std::string id;
  double heading = 0.0;
  int lanes = 1;
  Vec2 stop_bar;
  double upstream_length = 0.0;
  double downstream_length = 0.0;
  bool side_street = false;
  std::vector<int> incoming_lanes;
  std::vector<int> outgoing_lanes;
};

/// Full route of one movement: incoming lane, turn connector through the
/// box, outgoing lane. Arclength s runs from the upstream end; the stop bar
/// is at bar_s and the outgoing lane begins at exit_s.
struct Path {
  int index = 0;
  std::string id;
  int incoming_lane = 0;
  int outgoing_lane = 0;
  int phase = 0;
  std::vector<Vec2> polyline;
  std::vector<double> cumulative;
  double bar_s = 0.0;
  double exit_s = 0.0;
  double length = 0.0;
};

struct PathPoint {
  Vec2 position;
  double heading = 0.0;
};

/// Path choice for vehicles entering on one incoming lane.
struct LaneRouting {
  int lane = 0;
  std::vector<int> paths;
  std::vector<double> probabilities;
};

struct NetworkParams {
  double lane_width = 3.5;
  int main_lanes = 2;  // per direction
  double upstream_length = 300.0;
  double downstream_length = 150.0;
  double shoulder = 1.0;
  /// Fraction of vehicles turning off the main street (curb lane right turn
  /// eastbound, inner lane left turn westbound).
  double main_turn_ratio = 0.1;
  /// Side-street split: fraction turning left.
  double side_left_ratio = 0.5;
};

/// Throws std::invalid_argument for lengths that cannot hold the 200 m
/// upstream / 100 m downstream control region, or invalid ratios.
void validate(const NetworkParams& params);

class RoadNetwork {
 public:
  std::vector<Approach> approaches;
  std::vector<Lane> lanes;
  std::vector<Path> paths;
  std::vector<LaneRouting> routing;
  Vec2 intersection_center;
  std::vector<Vec2> geofence_polygon;
  double lane_width = 3.5;
  double box_half_width = 0.0;  // along the main street

  PathPoint locate(int path, double s) const;
  const Lane& lane(int index) const { return lanes.at(index); }
  int phase_count() const;
};

/// Two-phase T-intersection centered at the origin. The main street runs
/// east-west with `main_lanes` lanes per direction; the side street joins
/// from the south with one lane each way. Phase 0 serves the main street,
/// phase 1 the side street. Right-hand traffic.
RoadNetwork make_t_intersection(const NetworkParams& params);

/// True when the polygon has no two non-adjacent edges that intersect.
bool is_simple_polygon(const std::vector<Vec2>& polygon);

}  // namespace coopsense::traffic
