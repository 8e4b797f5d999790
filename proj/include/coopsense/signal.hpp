#pragma once

#include <cstdint>
#include <string_view>

namespace coopsense {

enum class Interval { kGreen, kYellow, kAllRed };

std::string_view to_string(Interval interval);
/// Single-letter code used in logs: G, Y or R.
char interval_code(Interval interval);

/// Signal state shared by the simulator and the controller. Elapsed time is
/// kept in integer milliseconds so interval durations are exact.
struct SignalState {
  int active_phase = 0;
  Interval interval = Interval::kGreen;
  std::int64_t elapsed_ms = 0;

  bool is_green(int phase) const {
    return interval == Interval::kGreen && active_phase == phase;
  }
  bool operator==(const SignalState&) const = default;
};

}  // namespace coopsense
