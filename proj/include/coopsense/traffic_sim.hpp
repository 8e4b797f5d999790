#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <string_view>
#include <vector>

#include "coopsense/network.hpp"
#include "coopsense/rng.hpp"
#include "coopsense/scene.hpp"
#include "coopsense/signal.hpp"

namespace coopsense::traffic {

enum class VehicleKind { kHV, kCV, kCAV };

std::string_view to_string(VehicleKind kind);
VehicleKind parse_vehicle_kind(std::string_view text);

/// How a vehicle has resolved a non-green signal ahead of it. Cleared when
/// its phase turns green again.
enum class BarDecision { kNone, kStop, kGo };

struct Vehicle {
  std::int64_t id = 0;
  VehicleKind kind = VehicleKind::kHV;
  int path = 0;
  /// Front-bumper arclength along the path.
  double s = 0.0;
  double v = 0.0;
  double length = 4.5;
  double width = 1.8;
  double height = 1.5;
  double spawn_time = 0.0;
  std::optional<double> exit_time;
  BarDecision bar_decision = BarDecision::kNone;
};

struct DriverParams {
  double a_max = 2.0;
  double b_max = 4.5;
  double min_gap = 2.0;
  double headway = 1.0;
  double v_free = 13.9;
};

void validate(const DriverParams& params);

/// Per-incoming-lane arrival rates and equipment shares.
struct DemandConfig {
  double main_volume = 500.0;  // veh/hr/lane
  double side_volume = 360.0;  // veh/hr/lane
  double cav_rate = 0.0;
  double cv_rate = 0.0;
};

/// Throws std::invalid_argument on negative volumes or rates outside
/// [0, 1] / summing past 1.
void validate(const DemandConfig& demand);

struct World {
  std::int64_t tick = 0;
  double dt = 0.1;
  std::vector<Vehicle> vehicles;
  std::vector<Vehicle> exited;

  double time() const { return static_cast<double>(tick) * dt; }
};

/// Poisson arrivals on every incoming lane. Each arrival's path, body size
/// and kind are drawn when it arrives from per-lane streams, so the same
/// seed gives the same arrival sequence for any equipment rate. Arrivals
/// wait in a per-lane queue while the lane entry is blocked.
class Spawner {
 public:
  Spawner(const RoadNetwork& network, const DemandConfig& demand,
          const DriverParams& driver, std::uint64_t seed);

  /// Queues the arrivals falling in (t, t + dt] and inserts at most one
  /// waiting vehicle per lane. Returns the vehicles inserted this call,
  /// which are also appended to world.vehicles.
  std::vector<Vehicle> spawn(World& world);

  std::size_t waiting() const;

 private:
  struct Arrival {
    int path;
    VehicleKind kind;
    double length, width, height;
  };
  struct LaneState {
    const LaneRouting* routing;
    double rate;  // veh/s
    double next_arrival;
    Rng arrivals;
    Rng attributes;
    std::deque<Arrival> queue;
  };

  const RoadNetwork& network_;
  DemandConfig demand_;
  DriverParams driver_;
  std::int64_t next_id_ = 1;
  std::vector<LaneState> lanes_;
};

/// Largest speed for the next step that lets the follower keep a safe
/// distance to an obstacle `gap` ahead moving at `leader_speed`.
double safe_speed(double gap, double leader_speed, double speed,
                  const DriverParams& params);

/// Advances every vehicle by one step of the bounded-acceleration
/// following rule. Vehicles facing a non-green signal stop at the bar
/// unless they could not do so braking at b_max; vehicles that reach the
/// end of their path move to world.exited with an interpolated exit time.
void step(World& world, const RoadNetwork& network, const SignalState& signal,
          const DriverParams& params);

/// Bumper-to-bumper distance from `follower` to the nearest vehicle ahead
/// on its route, with that vehicle's index, if any. A vehicle inside the box
/// on another movement that feeds the same outgoing lane counts as a leader
/// at its remaining distance to the merge point. `merging` is set whenever
/// part of the leader is off the follower's route, so the gap is measured
/// along the merge rather than bumper to bumper.
struct LeaderInfo {
  int index = -1;
  double gap = 0.0;
  double speed = 0.0;
  bool merging = false;
};
LeaderInfo find_leader(const std::vector<Vehicle>& vehicles, std::size_t follower,
                       const RoadNetwork& network);

/// Oriented boxes for every active vehicle, centered half a body length
/// behind the front bumper and resting on the ground.
SceneSnapshot ground_truth_boxes(const World& world, const RoadNetwork& network,
                                 double ground_z = 0.0);

OrientedBox vehicle_box(const Vehicle& vehicle, const RoadNetwork& network,
                        double ground_z = 0.0);

/// Free-flow travel time over a path.
double free_flow_time(const RoadNetwork& network, int path,
                      const DriverParams& params);

}  // namespace coopsense::traffic
