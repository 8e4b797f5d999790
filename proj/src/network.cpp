#include "coopsense/network.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace coopsense::traffic {

double Lane::length() const { return std::hypot(end.x - start.x, end.y - start.y); }

Vec2 Lane::direction() const {
  const double len = length();
  return {(end.x - start.x) / len, (end.y - start.y) / len};
}

void validate(const NetworkParams& p) {
  if (!(p.lane_width > 0.0)) throw std::invalid_argument("lane width must be positive");
  if (p.main_lanes < 1) throw std::invalid_argument("main street needs >= 1 lane");
  if (p.upstream_length < 200.0)
    throw std::invalid_argument("upstream length must be >= 200 m");
  if (p.downstream_length < 100.0)
    throw std::invalid_argument("downstream length must be >= 100 m");
  if (p.shoulder < 0.0) throw std::invalid_argument("shoulder must be >= 0");
  if (p.main_turn_ratio < 0.0 || p.main_turn_ratio > 1.0 ||
      p.side_left_ratio < 0.0 || p.side_left_ratio > 1.0)
    throw std::invalid_argument("turn ratios must be in [0, 1]");
}

PathPoint RoadNetwork::locate(int path_index, double s) const {
  const Path& path = paths.at(path_index);
  const auto& cum = path.cumulative;
  // Segment i spans [cum[i], cum[i+1]]; positions outside the path are
  // extrapolated along the first or last segment.
  std::size_t seg = 0;
  if (s >= cum.back()) {
    seg = cum.size() - 2;
  } else if (s > 0.0) {
    seg = static_cast<std::size_t>(
        std::upper_bound(cum.begin(), cum.end(), s) - cum.begin() - 1);
    seg = std::min(seg, cum.size() - 2);
  }
  const Vec2& a = path.polyline[seg];
  const Vec2& b = path.polyline[seg + 1];
  const double seg_len = cum[seg + 1] - cum[seg];
  const double ux = (b.x - a.x) / seg_len, uy = (b.y - a.y) / seg_len;
  const double along = s - cum[seg];
  return {{a.x + ux * along, a.y + uy * along}, std::atan2(uy, ux)};
}

int RoadNetwork::phase_count() const {
  int n = 0;
  for (const auto& p : paths) n = std::max(n, p.phase + 1);
  return n;
}

namespace {

Vec2 add(Vec2 a, Vec2 b, double k = 1.0) { return {a.x + k * b.x, a.y + k * b.y}; }

Vec2 bezier(Vec2 p0, Vec2 p1, Vec2 p2, Vec2 p3, double t) {
  const double u = 1.0 - t;
  const double b0 = u * u * u, b1 = 3 * u * u * t, b2 = 3 * u * t * t,
               b3 = t * t * t;
  return {b0 * p0.x + b1 * p1.x + b2 * p2.x + b3 * p3.x,
          b0 * p0.y + b1 * p1.y + b2 * p2.y + b3 * p3.y};
}

Path build_path(const RoadNetwork& net, int index, std::string id, int in_lane,
                int out_lane, int phase) {
  const Lane& in = net.lanes[in_lane];
  const Lane& out = net.lanes[out_lane];
  Path path;
  path.index = index;
  path.id = std::move(id);
  path.incoming_lane = in_lane;
  path.outgoing_lane = out_lane;
  path.phase = phase;

  path.polyline.push_back(in.start);
  path.polyline.push_back(in.end);
  const Vec2 h0 = in.direction();
  const Vec2 h3 = out.direction();
  const double chord = std::hypot(out.start.x - in.end.x, out.start.y - in.end.y);
  const Vec2 c1 = add(in.end, h0, 0.4 * chord);
  const Vec2 c2 = add(out.start, h3, -0.4 * chord);
  constexpr int kSamples = 24;
  const bool straight = std::abs(h0.x * h3.y - h0.y * h3.x) < 1e-12 &&
                        h0.x * h3.x + h0.y * h3.y > 0.0;
  if (!straight)
    for (int i = 1; i < kSamples; ++i)
      path.polyline.push_back(bezier(in.end, c1, c2, out.start,
                                     static_cast<double>(i) / kSamples));
  path.polyline.push_back(out.start);
  path.polyline.push_back(out.end);

  path.cumulative.assign(1, 0.0);
  for (std::size_t i = 1; i < path.polyline.size(); ++i) {
    const auto& a = path.polyline[i - 1];
    const auto& b = path.polyline[i];
    path.cumulative.push_back(path.cumulative.back() + std::hypot(b.x - a.x, b.y - a.y));
  }
  path.bar_s = path.cumulative[1];
  path.exit_s = path.cumulative[path.cumulative.size() - 2];
  path.length = path.cumulative.back();
  return path;
}

bool segments_touch(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
  auto cross = [](Vec2 o, Vec2 p, Vec2 q) {
    return (p.x - o.x) * (q.y - o.y) - (p.y - o.y) * (q.x - o.x);
  };
  auto on_segment = [](Vec2 p, Vec2 q, Vec2 r) {
    return std::min(p.x, q.x) <= r.x && r.x <= std::max(p.x, q.x) &&
           std::min(p.y, q.y) <= r.y && r.y <= std::max(p.y, q.y);
  };
  const double d1 = cross(c, d, a), d2 = cross(c, d, b);
  const double d3 = cross(a, b, c), d4 = cross(a, b, d);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) &&
      ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0)))
    return true;
  if (d1 == 0 && on_segment(c, d, a)) return true;
  if (d2 == 0 && on_segment(c, d, b)) return true;
  if (d3 == 0 && on_segment(a, b, c)) return true;
  if (d4 == 0 && on_segment(a, b, d)) return true;
  return false;
}

}  // namespace

bool is_simple_polygon(const std::vector<Vec2>& poly) {
  const std::size_t n = poly.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      if (j == i + 1 || (i == 0 && j == n - 1)) continue;  // adjacent
      if (segments_touch(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n]))
        return false;
    }
  return true;
}

RoadNetwork make_t_intersection(const NetworkParams& params) {
  validate(params);
  RoadNetwork net;
  const double w = params.lane_width;
  const int n_main = params.main_lanes;
  const double main_half = n_main * w;
  const double side_half = w;
  const double main_bar = side_half + 1.0;
  const double side_bar = main_half + 1.0;
  net.lane_width = w;
  net.box_half_width = main_bar;
  net.intersection_center = {0.0, 0.0};

  struct Arm {
    const char* id;
    Vec2 outward;
    int lanes;
    double half;
    double bar;
  };
  const Arm arms[] = {{"west", {-1.0, 0.0}, n_main, main_half, main_bar},
                      {"east", {1.0, 0.0}, n_main, main_half, main_bar},
                      {"south", {0.0, -1.0}, 1, side_half, side_bar}};
  const double up = params.upstream_length;
  const double down = params.downstream_length;

  auto right_of = [](Vec2 heading) { return Vec2{heading.y, -heading.x}; };
  auto make_lane = [&](int arm_idx, const Arm& arm, LaneRole role, int k) {
    Lane lane;
    lane.index = static_cast<int>(net.lanes.size());
    lane.role = role;
    lane.approach = arm_idx;
    lane.id = std::string(arm.id) + (role == LaneRole::kIncoming ? "_in_" : "_out_") +
              std::to_string(k);
    const double offset = arm.half - 0.5 * w - k * w;
    if (role == LaneRole::kIncoming) {
      const Vec2 heading{-arm.outward.x, -arm.outward.y};
      const Vec2 r = right_of(heading);
      lane.start = add(add(net.intersection_center, arm.outward, arm.bar + up), r, offset);
      lane.end = add(add(net.intersection_center, arm.outward, arm.bar), r, offset);
    } else {
      const Vec2 r = right_of(arm.outward);
      lane.start = add(add(net.intersection_center, arm.outward, arm.bar), r, offset);
      lane.end = add(add(net.intersection_center, arm.outward, arm.bar + down), r, offset);
    }
    net.lanes.push_back(lane);
    return lane.index;
  };

  for (int a = 0; a < 3; ++a) {
    Approach ap;
    ap.id = arms[a].id;
    ap.heading = std::atan2(-arms[a].outward.y, -arms[a].outward.x);
    ap.lanes = arms[a].lanes;
    ap.stop_bar = add(net.intersection_center, arms[a].outward, arms[a].bar);
    ap.upstream_length = up;
    ap.downstream_length = down;
    ap.side_street = a == 2;
    net.approaches.push_back(ap);
  }
  for (int a = 0; a < 3; ++a)
    for (int k = 0; k < arms[a].lanes; ++k)
      net.approaches[a].incoming_lanes.push_back(
          make_lane(a, arms[a], LaneRole::kIncoming, k));
  for (int a = 0; a < 3; ++a)
    for (int k = 0; k < arms[a].lanes; ++k)
      net.approaches[a].outgoing_lanes.push_back(
          make_lane(a, arms[a], LaneRole::kOutgoing, k));

  const auto& west = net.approaches[0];
  const auto& east = net.approaches[1];
  const auto& south = net.approaches[2];
  auto add_path = [&](const std::string& id, int in_lane, int out_lane, int phase) {
    const int index = static_cast<int>(net.paths.size());
    net.paths.push_back(build_path(net, index, id, in_lane, out_lane, phase));
    return index;
  };

  const int inner = n_main - 1;
  for (int k = 0; k < n_main; ++k) {
    LaneRouting eb{west.incoming_lanes[k], {}, {}};
    eb.paths.push_back(add_path("eb_through_" + std::to_string(k),
                                west.incoming_lanes[k], east.outgoing_lanes[k], 0));
    if (k == 0) {
      eb.paths.push_back(add_path("eb_right", west.incoming_lanes[k],
                                  south.outgoing_lanes[0], 0));
      eb.probabilities = {1.0 - params.main_turn_ratio, params.main_turn_ratio};
    } else {
      eb.probabilities = {1.0};
    }
    net.routing.push_back(eb);
  }
  for (int k = 0; k < n_main; ++k) {
    LaneRouting wb{east.incoming_lanes[k], {}, {}};
    wb.paths.push_back(add_path("wb_through_" + std::to_string(k),
                                east.incoming_lanes[k], west.outgoing_lanes[k], 0));
    if (k == inner) {
      wb.paths.push_back(add_path("wb_left", east.incoming_lanes[k],
                                  south.outgoing_lanes[0], 0));
      wb.probabilities = {1.0 - params.main_turn_ratio, params.main_turn_ratio};
    } else {
      wb.probabilities = {1.0};
    }
    net.routing.push_back(wb);
  }
  {
    LaneRouting nb{south.incoming_lanes[0], {}, {}};
    nb.paths.push_back(add_path("nb_left", south.incoming_lanes[0],
                                west.outgoing_lanes[inner], 1));
    nb.paths.push_back(add_path("nb_right", south.incoming_lanes[0],
                                east.outgoing_lanes[0], 1));
    nb.probabilities = {params.side_left_ratio, 1.0 - params.side_left_ratio};
    net.routing.push_back(nb);
  }
  // Sort routing by lane index so callers can index it predictably.
  std::sort(net.routing.begin(), net.routing.end(),
            [](const LaneRouting& a, const LaneRouting& b) { return a.lane < b.lane; });

  const double reach = std::max(up, down);
  const double edge_main = main_half + params.shoulder;
  const double edge_side = side_half + params.shoulder;
  const double x_end = main_bar + reach;
  const double y_end = side_bar + reach;
  net.geofence_polygon = {{-x_end, -edge_main}, {-edge_side, -edge_main},
                          {-edge_side, -y_end}, {edge_side, -y_end},
                          {edge_side, -edge_main}, {x_end, -edge_main},
                          {x_end, edge_main},   {-x_end, edge_main}};
  return net;
}

}  // namespace coopsense::traffic
