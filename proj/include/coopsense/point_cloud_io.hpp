#pragma once

#include <iosfwd>
#include <string>

#include "coopsense/geometry.hpp"

namespace coopsense::io {

// Text format: a header line "# frame=<id> n=<count>" followed by one
// "x y z intensity" line per point, each value with 9 decimal digits.

void write_cloud(std::ostream& out, const geometry::PointCloud& cloud);
std::string format_cloud(const geometry::PointCloud& cloud);

/// Throws std::runtime_error on a malformed header, a short file, or a
/// point line that does not hold exactly four numbers.
geometry::PointCloud read_cloud(std::istream& in);
geometry::PointCloud parse_cloud(const std::string& text);

void save_cloud(const std::string& path, const geometry::PointCloud& cloud);
geometry::PointCloud load_cloud(const std::string& path);

}  // namespace coopsense::io
