#include "coopsense/signal.hpp"

namespace coopsense {

std::string_view to_string(Interval interval) {
  switch (interval) {
    case Interval::kGreen: return "green";
    case Interval::kYellow: return "yellow";
    case Interval::kAllRed: return "all_red";
  }
  return "green";
}

char interval_code(Interval interval) {
  switch (interval) {
    case Interval::kGreen: return 'G';
    case Interval::kYellow: return 'Y';
    case Interval::kAllRed: return 'R';
  }
  return 'G';
}

}  // namespace coopsense
