#include "coopsense/fusion.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>
#include <fmt/ostream.h>

namespace coopsense::fusion {

std::vector<Detection> to_global(std::span<const Detection> detections,
                                 const geometry::Pose& sensor_pose,
                                 double mount_height) {
  const geometry::Transform4 tf = geometry::sensor_to_global(sensor_pose, mount_height);
  std::vector<Detection> out;
  out.reserve(detections.size());
  for (const auto& d : detections) {
    Detection g = d;
    const Eigen::Vector3d c = tf.apply(Eigen::Vector3d(d.box.cx, d.box.cy, d.box.cz));
    g.box.cx = c.x();
    g.box.cy = c.y();
    g.box.cz = c.z();
    g.box.yaw = geometry::wrap_angle(d.box.yaw + sensor_pose.yaw);
    g.frame_id = "global";
    out.push_back(std::move(g));
  }
  return out;
}

std::vector<Detection> dedupe(std::span<const Detection> detections, double threshold,
                              Vec2 center) {
  std::vector<std::size_t> order(detections.size());
  std::iota(order.begin(), order.end(), 0);
  auto dist_to_center = [&](std::size_t i) {
    return std::hypot(detections[i].box.cx - center.x, detections[i].box.cy - center.y);
  };
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dist_to_center(a) < dist_to_center(b);
  });

  std::vector<Detection> kept;
  for (std::size_t i : order) {
    const Detection& d = detections[i];
    Detection* absorbed_by = nullptr;
    for (auto& k : kept)
      if (std::hypot(k.box.cx - d.box.cx, k.box.cy - d.box.cy) < threshold) {
        absorbed_by = &k;
        break;
      }
    if (!absorbed_by) {
      kept.push_back(d);
      continue;
    }
    for (const auto& s : d.sources)
      if (std::find(absorbed_by->sources.begin(), absorbed_by->sources.end(), s) ==
          absorbed_by->sources.end())
        absorbed_by->sources.push_back(s);
  }
  return kept;
}

bool inside_polygon(Vec2 p, std::span<const Vec2> poly) {
  const std::size_t n = poly.size();
  if (n < 3) return false;
  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2 a = poly[j], b = poly[i];
    // On-edge check first so the boundary counts as inside.
    const double cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
    const double scale = std::max({std::abs(b.x - a.x), std::abs(b.y - a.y), 1.0});
    if (std::abs(cross) <= 1e-9 * scale && p.x >= std::min(a.x, b.x) - 1e-12 &&
        p.x <= std::max(a.x, b.x) + 1e-12 && p.y >= std::min(a.y, b.y) - 1e-12 &&
        p.y <= std::max(a.y, b.y) + 1e-12)
      return true;
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < x_cross) inside = !inside;
    }
  }
  return inside;
}

std::vector<Detection> geofence(std::span<const Detection> detections,
                                std::span<const Vec2> polygon) {
  std::vector<Detection> out;
  for (const auto& d : detections)
    if (inside_polygon({d.box.cx, d.box.cy}, polygon)) out.push_back(d);
  return out;
}

LaneMatch match_lane(Vec2 p, const traffic::RoadNetwork& network) {
  LaneMatch best;
  double best_offset = std::numeric_limits<double>::infinity();
  for (const auto& lane : network.lanes) {
    const Vec2 u = lane.direction();
    const double len = lane.length();
    double lo = 0.0, hi = len;
    if (lane.role == traffic::LaneRole::kIncoming) {
      const auto& bar = network.approaches[lane.approach].stop_bar;
      hi += 2.0 * std::hypot(bar.x - network.intersection_center.x,
                             bar.y - network.intersection_center.y);
    }
    const double t = (p.x - lane.start.x) * u.x + (p.y - lane.start.y) * u.y;
    const double tc = std::clamp(t, lo, hi);
    const double offset =
        std::hypot(p.x - (lane.start.x + u.x * tc), p.y - (lane.start.y + u.y * tc));
    if (offset < best_offset) {
      best_offset = offset;
      best.lane = lane.index;
      best.offset = offset;
      best.dist_to_bar = lane.role == traffic::LaneRole::kIncoming ? len - t : -t;
    }
  }
  if (!(best_offset <= network.lane_width)) return {};
  return best;
}

std::vector<FusedVehicleObservation> lane_map(std::span<const Detection> detections,
                                              const traffic::RoadNetwork& network) {
  std::vector<FusedVehicleObservation> out;
  for (const auto& d : detections) {
    const LaneMatch m = match_lane({d.box.cx, d.box.cy}, network);
    if (m.lane < 0) continue;
    FusedVehicleObservation o;
    o.x = d.box.cx;
    o.y = d.box.cy;
    o.lane = m.lane;
    o.dist_to_bar = m.dist_to_bar;
    o.sources = d.sources;
    out.push_back(std::move(o));
  }
  return out;
}

FusionResult fuse(std::span<const Detection> global_detections,
                  const traffic::RoadNetwork& network, const FusionConfig& cfg) {
  FusionResult r;
  r.global.assign(global_detections.begin(), global_detections.end());
  // Fence first so an off-road object can never absorb a vehicle on the road.
  r.fenced = geofence(r.global, network.geofence_polygon);
  r.deduped = dedupe(r.fenced, cfg.dedupe_threshold, network.intersection_center);
  r.observations = lane_map(r.deduped, network);
  return r;
}

void write_observations(std::ostream& out, std::int64_t frame,
                        std::span<const FusedVehicleObservation> observations) {
  for (const auto& o : observations)
    fmt::print(out, "{} {} {:.6f} {:.6f} {:.6f}\n", frame, o.lane, o.dist_to_bar, o.x, o.y);
}

std::vector<std::pair<std::int64_t, std::vector<FusedVehicleObservation>>>
read_observations(std::istream& in) {
  std::vector<std::pair<std::int64_t, std::vector<FusedVehicleObservation>>> frames;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::int64_t frame;
    FusedVehicleObservation o;
    if (!(ls >> frame >> o.lane >> o.dist_to_bar >> o.x >> o.y))
      throw std::runtime_error(fmt::format("observation line {}: malformed", line_no));
    if (frames.empty() || frames.back().first != frame) frames.push_back({frame, {}});
    frames.back().second.push_back(std::move(o));
  }
  return frames;
}

}  // namespace coopsense::fusion
