#include <doctest.h>

#include <algorithm>

#include "coopsense/control.hpp"
#include "coopsense/network.hpp"
#include "coopsense/rng.hpp"

using namespace coopsense;
using namespace coopsense::control;
using fusion::FusedVehicleObservation;

namespace {

const traffic::RoadNetwork& net() {
  static const traffic::RoadNetwork n = traffic::make_t_intersection({});
  return n;
}

FusedVehicleObservation obs(int lane, double dist) {
  FusedVehicleObservation o;
  o.lane = lane;
  o.dist_to_bar = dist;
  return o;
}

ControllerState start(int phase = 0) { return ControllerState{{phase, Interval::kGreen, 0}, {}}; }

}  // namespace

TEST_CASE("phase definitions for the T-intersection") {
  const auto phases = phases_for(net());
  REQUIRE(phases.size() == 2);
  CHECK(phases[0].incoming_lanes == std::vector<int>{0, 1, 2, 3});
  CHECK(phases[1].incoming_lanes == std::vector<int>{4});
  // Side-street movements discharge into the inner westbound and the curb
  // eastbound lanes.
  std::vector<std::string> out1;
  for (int l : phases[1].outgoing_lanes) out1.push_back(net().lane(l).id);
  std::sort(out1.begin(), out1.end());
  CHECK(out1 == std::vector<std::string>{"east_out_0", "west_out_1"});
  CHECK(phases[0].outgoing_lanes.size() == 5);
  CHECK_NOTHROW(validate(phases, net()));

  auto broken = phases;
  broken[1].incoming_lanes.clear();
  CHECK_THROWS_AS(validate(broken, net()), std::invalid_argument);
  CHECK_THROWS_AS(validate(std::vector<PhaseDefinition>{}, net()), std::invalid_argument);
}

TEST_CASE("pressure examples") {
  const auto phases = phases_for(net());
  const PhaseDefinition& main = phases[0];
  CHECK(pressure(main, {}) == 0);

  std::vector<FusedVehicleObservation> v;
  for (int i = 0; i < 5; ++i) v.push_back(obs(i % 4, 10.0 * i));
  v.push_back(obs(7, -20));
  v.push_back(obs(9, -99));
  CHECK(pressure(main, v) == 3);

  CHECK(pressure(main, std::vector{obs(0, 250)}) == 0);
  CHECK(pressure(main, std::vector{obs(0, 200)}) == 1);
  CHECK(pressure(main, std::vector{obs(0, -0.5)}) == 0);  // past the bar
  CHECK(pressure(main, std::vector{obs(7, -100)}) == -1);
  CHECK(pressure(main, std::vector{obs(7, -101)}) == 0);
  CHECK(pressure(phases[1], std::vector{obs(0, 10)}) == 0);
}

TEST_CASE("decide examples") {
  const TimingConfig t;
  SUBCASE("strict max stays green") {
    ControllerState s = start(0);
    for (int i = 0; i < 20; ++i) s = decide(s, std::vector{5, 1}, 1.0, t);
    CHECK(s.signal.interval == Interval::kGreen);
    CHECK(s.signal.active_phase == 0);
  }
  SUBCASE("min green holds the phase") {
    ControllerState s = start(0);
    s.signal.elapsed_ms = 2000;
    s = decide(s, std::vector{0, 9}, 1.0, t);
    CHECK(s.signal.elapsed_ms == 3000);
    CHECK(s.signal.interval == Interval::kGreen);
  }
  SUBCASE("yellow 4 s, all-red 1 s, then the switch") {
    ControllerState s = start(0);
    std::vector<ControllerState> trace;
    for (int i = 0; i < 12; ++i) {
      s = decide(s, std::vector{0, 9}, 1.0, t);
      trace.push_back(s);
    }
    for (int i = 0; i < 4; ++i) CHECK(trace[i].signal.interval == Interval::kGreen);
    for (int i = 4; i < 8; ++i) {
      CHECK(trace[i].signal.interval == Interval::kYellow);
      CHECK(trace[i].signal.active_phase == 0);
      CHECK(trace[i].pending_phase == 1);
    }
    CHECK(trace[8].signal.interval == Interval::kAllRed);
    CHECK(trace[9].signal.interval == Interval::kGreen);
    CHECK(trace[9].signal.active_phase == 1);
    CHECK(trace[9].signal.elapsed_ms == 0);
    CHECK_FALSE(trace[9].pending_phase);
  }
  SUBCASE("change interval completes even if pressures flip back") {
    ControllerState s = start(0);
    s.signal.elapsed_ms = 5000;
    s = decide(s, std::vector{0, 9}, 1.0, t);
    REQUIRE(s.signal.interval == Interval::kYellow);
    for (int i = 0; i < 5; ++i) s = decide(s, std::vector{9, 0}, 1.0, t);
    CHECK(s.signal.interval == Interval::kGreen);
    CHECK(s.signal.active_phase == 1);
  }
}

TEST_CASE("argmax ties and scale invariance") {
  CHECK(argmax_phase(std::vector{3, 3}, 1) == 1);
  CHECK(argmax_phase(std::vector{3, 3, 1}, 2) == 0);
  CHECK(argmax_phase(std::vector{-2, -1}, 0) == 1);
  CHECK(argmax_phase(std::vector<int>{}, 1) == 1);

  Rng rng(31);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 2 + static_cast<int>(rng.index(4));
    std::vector<int> p(n), scaled(n);
    const int k = 1 + static_cast<int>(rng.index(50));
    for (int i = 0; i < n; ++i) {
      p[i] = static_cast<int>(rng.index(21)) - 10;
      scaled[i] = p[i] * k;
    }
    const int active = static_cast<int>(rng.index(n));
    REQUIRE(argmax_phase(p, active) == argmax_phase(scaled, active));
    ControllerState s{{active, Interval::kGreen, static_cast<std::int64_t>(rng.index(8)) * 1000}, {}};
    REQUIRE(decide(s, p, 1.0) == decide(s, scaled, 1.0));
  }
}

TEST_CASE("liveness under persistent demand") {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    ControllerState s = start(0);
    s.signal.elapsed_ms = static_cast<std::int64_t>(rng.index(30)) * 1000;
    int seconds = 0;
    while (!(s.signal.active_phase == 1 && s.signal.interval == Interval::kGreen)) {
      s = decide(s, std::vector{1, 4}, 1.0);
      ++seconds;
      REQUIRE(seconds <= 10);
    }
  }
}

TEST_CASE("random pressures never violate timing") {
  Rng rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    ControllerState s = start(static_cast<int>(rng.index(2)));
    std::vector<SignalState> trace{s.signal};
    for (int i = 0; i < 2000; ++i) {
      const std::vector<int> p{static_cast<int>(rng.index(12)) - 3,
                               static_cast<int>(rng.index(12)) - 3};
      s = decide(s, p, 1.0);
      trace.push_back(s.signal);
    }
    const auto issues = timing_violations(trace, 1.0);
    CHECK(issues.empty());
  }
}

TEST_CASE("timing checker catches violations") {
  auto st = [](int ph, Interval i, int ms) { return SignalState{ph, i, ms}; };
  const auto G = Interval::kGreen, Y = Interval::kYellow, R = Interval::kAllRed;
  // Valid: green (truncated), yellow 4, red 1, green.
  std::vector<SignalState> ok{st(0, G, 7000), st(0, Y, 0),    st(0, Y, 1000), st(0, Y, 2000),
                              st(0, Y, 3000), st(0, R, 0),    st(1, G, 0),    st(1, G, 1000)};
  CHECK(timing_violations(ok, 1.0).empty());

  auto short_yellow = ok;
  short_yellow.erase(short_yellow.begin() + 4);
  short_yellow[4] = st(0, R, 0);
  CHECK_FALSE(timing_violations(short_yellow, 1.0).empty());

  std::vector<SignalState> skip_red{st(0, G, 7000), st(0, Y, 0), st(0, Y, 1000),
                                    st(0, Y, 2000), st(0, Y, 3000), st(1, G, 0)};
  CHECK_FALSE(timing_violations(skip_red, 1.0).empty());

  std::vector<SignalState> short_green{st(1, G, 0),    st(1, G, 1000), st(1, Y, 0),
                                       st(1, Y, 1000), st(1, Y, 2000), st(1, Y, 3000),
                                       st(1, R, 0),    st(0, G, 0)};
  std::vector<SignalState> preceded{st(0, R, 0)};
  preceded.insert(preceded.end(), short_green.begin(), short_green.end());
  CHECK_FALSE(timing_violations(preceded, 1.0).empty());

  std::vector<SignalState> jump{st(0, G, 0), st(1, G, 1000)};
  CHECK_FALSE(timing_violations(jump, 1.0).empty());
}

TEST_CASE("observation buffer staleness") {
  ObservationBuffer buf(1.0);
  CHECK(buf.current(0.0).empty());
  buf.push(10.0, std::vector{obs(0, 5), obs(1, 6)});
  CHECK(buf.current(10.0).size() == 2);
  CHECK(buf.current(11.0).size() == 2);
  CHECK(buf.current(11.2).empty());
  buf.push(11.1, {});
  CHECK(buf.current(11.2).empty());
}

TEST_CASE("timing validation") {
  CHECK_NOTHROW(validate(TimingConfig{}));
  CHECK_THROWS_AS(validate(TimingConfig{0, 4, 1}), std::invalid_argument);
  CHECK_THROWS_AS(validate(TimingConfig{5, -1, 1}), std::invalid_argument);
}
