#include "coopsense/traffic_sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace coopsense::traffic {

std::string_view to_string(VehicleKind kind) {
  switch (kind) {
    case VehicleKind::kHV: return "HV";
    case VehicleKind::kCV: return "CV";
    case VehicleKind::kCAV: return "CAV";
  }
  return "HV";
}

VehicleKind parse_vehicle_kind(std::string_view text) {
  if (text == "HV") return VehicleKind::kHV;
  if (text == "CV") return VehicleKind::kCV;
  if (text == "CAV") return VehicleKind::kCAV;
  throw std::invalid_argument("unknown vehicle kind '" + std::string(text) + "'");
}

void validate(const DriverParams& p) {
  if (!(p.a_max > 0.0 && p.b_max > 0.0 && p.min_gap >= 0.0 && p.headway > 0.0 &&
        p.v_free > 0.0))
    throw std::invalid_argument("driver parameters must be positive");
}

void validate(const DemandConfig& d) {
  if (!(d.main_volume >= 0.0) || !(d.side_volume >= 0.0))
    throw std::invalid_argument("volumes must be >= 0");
  if (!(d.cav_rate >= 0.0 && d.cav_rate <= 1.0) ||
      !(d.cv_rate >= 0.0 && d.cv_rate <= 1.0) || d.cav_rate + d.cv_rate > 1.0 + 1e-12)
    throw std::invalid_argument(
        "penetration rates must lie in [0, 1] with cav_rate + cv_rate <= 1");
}

namespace {

struct BodyType {
  double length, width, height, weight;
};
constexpr BodyType kBodies[] = {
    {4.5, 1.8, 1.5, 0.5}, {3.9, 1.7, 1.5, 0.25}, {4.8, 1.9, 1.75, 0.25}};

int pick(const std::vector<double>& probabilities, double u) {
  double acc = 0.0;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    acc += probabilities[i];
    if (u < acc) return static_cast<int>(i);
  }
  // Rounding can leave u just above the final sum; take the last choice
  // that has any weight.
  for (std::size_t i = probabilities.size(); i-- > 0;)
    if (probabilities[i] > 0.0) return static_cast<int>(i);
  return 0;
}

}  // namespace

Spawner::Spawner(const RoadNetwork& network, const DemandConfig& demand,
                 const DriverParams& driver, std::uint64_t seed)
    : network_(network), demand_(demand), driver_(driver) {
  validate(demand);
  validate(driver);
  for (const auto& routing : network.routing) {
    const Lane& lane = network.lane(routing.lane);
    const bool side = network.approaches[lane.approach].side_street;
    const double volume = side ? demand.side_volume : demand.main_volume;
    LaneState state{&routing,
                    volume / 3600.0,
                    std::numeric_limits<double>::infinity(),
                    Rng(seed, 100 + static_cast<std::uint64_t>(routing.lane)),
                    Rng(seed, 200 + static_cast<std::uint64_t>(routing.lane)),
                    {}};
    if (state.rate > 0.0) state.next_arrival = state.arrivals.exponential(state.rate);
    lanes_.push_back(std::move(state));
  }
}

std::size_t Spawner::waiting() const {
  std::size_t n = 0;
  for (const auto& l : lanes_) n += l.queue.size();
  return n;
}

std::vector<Vehicle> Spawner::spawn(World& world) {
  const double now = world.time();
  const double horizon = now + world.dt;
  std::vector<Vehicle> inserted;
  for (auto& lane : lanes_) {
    while (lane.next_arrival <= horizon) {
      // Fixed draw order keeps every attribute stream aligned across
      // equipment rates.
      const double u_path = lane.attributes.uniform();
      const double u_body = lane.attributes.uniform();
      const double u_kind = lane.attributes.uniform();
      const int route = pick(lane.routing->probabilities, u_path);
      std::vector<double> body_weights;
      for (const auto& b : kBodies) body_weights.push_back(b.weight);
      const BodyType& body = kBodies[pick(body_weights, u_body)];
      VehicleKind kind = VehicleKind::kHV;
      if (u_kind < demand_.cav_rate)
        kind = VehicleKind::kCAV;
      else if (u_kind < demand_.cav_rate + demand_.cv_rate)
        kind = VehicleKind::kCV;
      lane.queue.push_back({lane.routing->paths[route], kind, body.length,
                            body.width, body.height});
      lane.next_arrival += lane.arrivals.exponential(lane.rate);
    }
    if (lane.queue.empty()) continue;

    // The entry is blocked while the rearmost vehicle on this lane is too
    // close to the upstream end.
    const Vehicle* last = nullptr;
    for (const auto& v : world.vehicles)
      if (network_.paths[v.path].incoming_lane == lane.routing->lane &&
          (!last || v.s < last->s))
        last = &v;
    double speed = driver_.v_free;
    if (last) {
      const double gap = last->s - last->length - driver_.min_gap;
      if (gap <= 0.0) continue;
      speed = std::min(speed, safe_speed(gap, last->v, driver_.v_free, driver_));
      if (speed <= 0.0) continue;
    }
    const Arrival a = lane.queue.front();
    lane.queue.pop_front();
    Vehicle v;
    v.id = next_id_++;
    v.kind = a.kind;
    v.path = a.path;
    v.s = 0.0;
    v.v = speed;
    v.length = a.length;
    v.width = a.width;
    v.height = a.height;
    v.spawn_time = now;
    world.vehicles.push_back(v);
    inserted.push_back(v);
  }
  return inserted;
}

double safe_speed(double gap, double leader_speed, double speed,
                  const DriverParams& p) {
  return leader_speed + (gap - leader_speed * p.headway) /
                            ((speed + leader_speed) / (2.0 * p.b_max) + p.headway);
}

namespace {

// Position on `from`'s path expressed on `to`'s path, when the piece of
// road it lies on (incoming lane, connector, outgoing lane) is shared.
std::optional<double> map_position(const Path& from, double pos, const Path& to) {
  if (pos <= from.bar_s) {
    if (from.incoming_lane == to.incoming_lane) return pos;
    return std::nullopt;
  }
  if (pos < from.exit_s) {
    if (from.index == to.index) return pos;
    return std::nullopt;
  }
  if (from.outgoing_lane == to.outgoing_lane) return to.exit_s + (pos - from.exit_s);
  return std::nullopt;
}

}  // namespace

LeaderInfo find_leader(const std::vector<Vehicle>& vehicles, std::size_t follower,
                       const RoadNetwork& network) {
  const Vehicle& a = vehicles[follower];
  const Path& pa = network.paths[a.path];
  LeaderInfo best;
  double best_gap = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < vehicles.size(); ++j) {
    if (j == follower) continue;
    const Vehicle& b = vehicles[j];
    const Path& pb = network.paths[b.path];
    auto front = map_position(pb, b.s, pa);
    auto rear = map_position(pb, b.s - b.length, pa);
    bool merging = false;
    if (!front && b.s > pb.bar_s && pb.index != pa.index &&
        pb.outgoing_lane == pa.outgoing_lane) {
      // Zipper order at the merge: whoever is closer to it goes first.
      front = pa.exit_s + (b.s - pb.exit_s);
      merging = true;
    }
    if (!front && !rear) continue;
    // Only one end on a shared piece: place the other a body length away.
    if (!front || !rear) merging = true;
    if (front && (!rear || merging)) rear = *front - b.length;
    const double front_pos = front ? *front : *rear + b.length;
    const bool ahead = front_pos > a.s || (front_pos == a.s && b.id < a.id);
    if (!ahead) continue;
    const double gap = *rear - a.s;
    if (gap < best_gap) {
      best_gap = gap;
      best = {static_cast<int>(j), gap, b.v, merging};
    }
  }
  return best;
}

void step(World& world, const RoadNetwork& network, const SignalState& signal,
          const DriverParams& params) {
  const double dt = world.dt;
  const double now = world.time();
  auto& vehicles = world.vehicles;
  std::vector<double> next_speed(vehicles.size());

  for (std::size_t i = 0; i < vehicles.size(); ++i) {
    Vehicle& veh = vehicles[i];
    const Path& path = network.paths[veh.path];
    double v = std::min(params.v_free, veh.v + params.a_max * dt);

    const LeaderInfo leader = find_leader(vehicles, i, network);
    if (leader.index >= 0)
      v = std::min(v, safe_speed(leader.gap - params.min_gap, leader.speed, veh.v, params));

    if (signal.is_green(path.phase)) {
      veh.bar_decision = BarDecision::kNone;
    } else if (veh.s <= path.bar_s) {
      const double to_bar = path.bar_s - veh.s;
      const double v_bar = safe_speed(to_bar, 0.0, veh.v, params);
      if (veh.bar_decision == BarDecision::kNone)
        veh.bar_decision = v_bar >= veh.v - params.b_max * dt - 1e-9
                               ? BarDecision::kStop
                               : BarDecision::kGo;
      if (veh.bar_decision == BarDecision::kStop) v = std::min(v, v_bar);
    }
    next_speed[i] = std::max(0.0, v);
  }

  std::vector<Vehicle> still_active;
  still_active.reserve(vehicles.size());
  for (std::size_t i = 0; i < vehicles.size(); ++i) {
    Vehicle veh = vehicles[i];
    const Path& path = network.paths[veh.path];
    const double s_prev = veh.s;
    veh.v = next_speed[i];
    veh.s = s_prev + veh.v * dt;
    if (veh.s >= path.length) {
      veh.exit_time = veh.v > 0.0 ? now + (path.length - s_prev) / veh.v : now + dt;
      world.exited.push_back(veh);
    } else {
      still_active.push_back(veh);
    }
  }
  vehicles = std::move(still_active);
  ++world.tick;
}

OrientedBox vehicle_box(const Vehicle& vehicle, const RoadNetwork& network,
                        double ground_z) {
  const PathPoint at = network.locate(vehicle.path, vehicle.s - 0.5 * vehicle.length);
  OrientedBox box;
  box.cx = at.position.x;
  box.cy = at.position.y;
  box.cz = ground_z + 0.5 * vehicle.height;
  box.length = vehicle.length;
  box.width = vehicle.width;
  box.height = vehicle.height;
  box.yaw = at.heading;
  box.id = vehicle.id;
  box.is_vehicle = true;
  return box;
}

SceneSnapshot ground_truth_boxes(const World& world, const RoadNetwork& network,
                                 double ground_z) {
  SceneSnapshot scene;
  scene.ground_z = ground_z;
  scene.boxes.reserve(world.vehicles.size());
  for (const auto& v : world.vehicles) scene.boxes.push_back(vehicle_box(v, network, ground_z));
  return scene;
}

double free_flow_time(const RoadNetwork& network, int path, const DriverParams& params) {
  return network.paths.at(path).length / params.v_free;
}

}  // namespace coopsense::traffic
