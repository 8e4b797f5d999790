#pragma once

#include <optional>
#include <span>
#include <vector>

#include "coopsense/fusion.hpp"
#include "coopsense/network.hpp"
#include "coopsense/signal.hpp"

namespace coopsense::control {

struct PhaseDefinition {
  int id = 0;
  std::vector<int> incoming_lanes;
  std::vector<int> outgoing_lanes;
  double upstream_window = 200.0;
  double downstream_window = 100.0;
};

/// One phase per signal group of the network. A phase's outgoing lanes are
/// the lanes its own movements discharge into.
std::vector<PhaseDefinition> phases_for(const traffic::RoadNetwork& network,
                                        double upstream_window = 200.0,
                                        double downstream_window = 100.0);

/// Throws std::invalid_argument if some lane of the network is in no
/// phase's incoming or outgoing set.
void validate(const std::vector<PhaseDefinition>& phases,
              const traffic::RoadNetwork& network);

/// Vehicles on the phase's incoming lanes with 0 <= distance <= upstream
/// window, minus those on its outgoing lanes within the downstream window.
int pressure(const PhaseDefinition& phase,
             std::span<const fusion::FusedVehicleObservation> observations);

struct TimingConfig {
  double min_green = 5.0;
  double yellow = 4.0;
  double all_red = 1.0;
};

void validate(const TimingConfig& timing);

struct ControllerState {
  SignalState signal;
  /// Phase that receives green once the current change interval ends.
  std::optional<int> pending_phase;

  bool operator==(const ControllerState&) const = default;
};

/// Phase with the highest pressure. Ties keep the active phase, or go to
/// the lowest index when the active phase is not among the leaders.
int argmax_phase(std::span<const int> pressures, int active_phase);

/// Advances the signal timers by dt and applies the max-pressure rule:
/// after min_green, a green phase yields (Yellow, then AllRed) to a phase
/// with strictly higher pressure. Change intervals always run to
/// completion.
ControllerState decide(const ControllerState& state, std::span<const int> pressures,
                       double dt, const TimingConfig& timing = {});

/// Holds the most recent fused frame. A frame older than max_age seconds is
/// no longer served: the controller then sees no vehicles.
class ObservationBuffer {
 public:
  explicit ObservationBuffer(double max_age = 1.0) : max_age_(max_age) {}

  void push(double time, std::vector<fusion::FusedVehicleObservation> frame);
  std::span<const fusion::FusedVehicleObservation> current(double now) const;

 private:
  double max_age_;
  std::optional<double> time_;
  std::vector<fusion::FusedVehicleObservation> frame_;
};

/// Checks a recorded sequence of signal states sampled every dt seconds and
/// returns a description of every timing violation found.
std::vector<std::string> timing_violations(std::span<const SignalState> trace,
                                           double dt, const TimingConfig& timing = {});

}  // namespace coopsense::control
