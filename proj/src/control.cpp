#include "coopsense/control.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include <fmt/format.h>

namespace coopsense::control {

std::vector<PhaseDefinition> phases_for(const traffic::RoadNetwork& network,
                                        double upstream_window,
                                        double downstream_window) {
  const int n = network.phase_count();
  std::vector<PhaseDefinition> phases(n);
  for (int p = 0; p < n; ++p) {
    std::set<int> in, out;
    for (const auto& path : network.paths)
      if (path.phase == p) {
        in.insert(path.incoming_lane);
        out.insert(path.outgoing_lane);
      }
    phases[p].id = p;
    phases[p].incoming_lanes.assign(in.begin(), in.end());
    phases[p].outgoing_lanes.assign(out.begin(), out.end());
    phases[p].upstream_window = upstream_window;
    phases[p].downstream_window = downstream_window;
  }
  return phases;
}

void validate(const std::vector<PhaseDefinition>& phases,
              const traffic::RoadNetwork& network) {
  if (phases.empty()) throw std::invalid_argument("no phases defined");
  std::vector<bool> covered(network.lanes.size(), false);
  for (const auto& p : phases) {
    if (!(p.upstream_window > 0.0) || !(p.downstream_window > 0.0))
      throw std::invalid_argument("pressure windows must be positive");
    for (int l : p.incoming_lanes) covered.at(l) = true;
    for (int l : p.outgoing_lanes) covered.at(l) = true;
  }
  for (std::size_t l = 0; l < covered.size(); ++l)
    if (!covered[l])
      throw std::invalid_argument(
          fmt::format("lane {} is not in any phase", network.lanes[l].id));
}

int pressure(const PhaseDefinition& phase,
             std::span<const fusion::FusedVehicleObservation> observations) {
  auto has = [](const std::vector<int>& lanes, int lane) {
    return std::find(lanes.begin(), lanes.end(), lane) != lanes.end();
  };
  int incoming = 0, outgoing = 0;
  for (const auto& o : observations) {
    if (has(phase.incoming_lanes, o.lane) && o.dist_to_bar >= 0.0 &&
        o.dist_to_bar <= phase.upstream_window)
      ++incoming;
    else if (has(phase.outgoing_lanes, o.lane) && o.dist_to_bar <= 0.0 &&
             o.dist_to_bar >= -phase.downstream_window)
      ++outgoing;
  }
  return incoming - outgoing;
}

void validate(const TimingConfig& t) {
  if (!(t.min_green > 0.0) || !(t.yellow >= 0.0) || !(t.all_red >= 0.0))
    throw std::invalid_argument("signal timings must be positive");
}

int argmax_phase(std::span<const int> pressures, int active_phase) {
  if (pressures.empty()) return active_phase;
  const int best = *std::max_element(pressures.begin(), pressures.end());
  if (active_phase >= 0 && active_phase < static_cast<int>(pressures.size()) &&
      pressures[active_phase] == best)
    return active_phase;
  return static_cast<int>(std::find(pressures.begin(), pressures.end(), best) -
                          pressures.begin());
}

namespace {
std::int64_t to_ms(double seconds) { return std::llround(seconds * 1000.0); }
}  // namespace

ControllerState decide(const ControllerState& state, std::span<const int> pressures,
                       double dt, const TimingConfig& timing) {
  ControllerState next = state;
  SignalState& s = next.signal;
  s.elapsed_ms += to_ms(dt);
  switch (s.interval) {
    case Interval::kGreen: {
      if (s.elapsed_ms < to_ms(timing.min_green)) break;
      const int target = argmax_phase(pressures, s.active_phase);
      if (target != s.active_phase) {
        s.interval = Interval::kYellow;
        s.elapsed_ms = 0;
        next.pending_phase = target;
      }
      break;
    }
    case Interval::kYellow:
      if (s.elapsed_ms >= to_ms(timing.yellow)) {
        s.elapsed_ms -= to_ms(timing.yellow);
        s.interval = Interval::kAllRed;
      }
      break;
    case Interval::kAllRed:
      if (s.elapsed_ms >= to_ms(timing.all_red)) {
        s.elapsed_ms -= to_ms(timing.all_red);
        s.interval = Interval::kGreen;
        s.active_phase = next.pending_phase.value_or(s.active_phase);
        next.pending_phase.reset();
      }
      break;
  }
  return next;
}

void ObservationBuffer::push(double time,
                             std::vector<fusion::FusedVehicleObservation> frame) {
  time_ = time;
  frame_ = std::move(frame);
}

std::span<const fusion::FusedVehicleObservation> ObservationBuffer::current(
    double now) const {
  if (!time_ || now - *time_ > max_age_ + 1e-9) return {};
  return frame_;
}

std::vector<std::string> timing_violations(std::span<const SignalState> trace, double dt,
                                           const TimingConfig& timing) {
  std::vector<std::string> issues;
  if (trace.empty()) return issues;
  const std::int64_t step = to_ms(dt);
  auto required = [&](Interval i) {
    return i == Interval::kYellow ? to_ms(timing.yellow) : to_ms(timing.all_red);
  };

  std::size_t run_start = 0;
  for (std::size_t i = 1; i <= trace.size(); ++i) {
    const bool ends = i == trace.size() || trace[i].interval != trace[run_start].interval;
    if (i < trace.size() && !ends) {
      if (trace[i].active_phase != trace[i - 1].active_phase)
        issues.push_back(fmt::format("sample {}: phase changed inside an interval", i));
      if (trace[i].elapsed_ms != trace[i - 1].elapsed_ms + step)
        issues.push_back(fmt::format("sample {}: elapsed time jumped", i));
    }
    if (!ends) continue;

    const SignalState& first = trace[run_start];
    const std::int64_t duration = static_cast<std::int64_t>(i - run_start) * step;
    const bool complete = run_start > 0 && i < trace.size();
    if (complete) {
      if (first.interval == Interval::kGreen && duration < to_ms(timing.min_green))
        issues.push_back(
            fmt::format("sample {}: green lasted {} ms", run_start, duration));
      if (first.interval != Interval::kGreen && duration != required(first.interval))
        issues.push_back(fmt::format("sample {}: {} lasted {} ms", run_start,
                                     to_string(first.interval), duration));
    }
    if (i < trace.size()) {
      const SignalState& prev = trace[i - 1];
      const SignalState& cur = trace[i];
      const bool order_ok =
          (prev.interval == Interval::kGreen && cur.interval == Interval::kYellow) ||
          (prev.interval == Interval::kYellow && cur.interval == Interval::kAllRed) ||
          (prev.interval == Interval::kAllRed && cur.interval == Interval::kGreen);
      if (!order_ok)
        issues.push_back(fmt::format("sample {}: {} -> {}", i, to_string(prev.interval),
                                     to_string(cur.interval)));
      if (cur.interval != Interval::kGreen && cur.active_phase != prev.active_phase)
        issues.push_back(fmt::format("sample {}: phase changed outside all-red", i));
      if (cur.interval == Interval::kGreen && cur.active_phase == prev.active_phase)
        issues.push_back(fmt::format("sample {}: change interval without a switch", i));
      if (cur.elapsed_ms != 0)
        issues.push_back(fmt::format("sample {}: interval did not start at 0", i));
    }
    run_start = i;
  }
  return issues;
}

}  // namespace coopsense::control
