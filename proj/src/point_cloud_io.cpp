#include "coopsense/point_cloud_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

namespace coopsense::io {

namespace {

double parse_number(std::string_view token, std::size_t line_no) {
  double value = 0.0;
  const auto* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, value);
  if (ec != std::errc() || ptr != end)
    throw std::runtime_error(fmt::format("line {}: bad number '{}'", line_no,
                                         std::string(token)));
  return value;
}

}  // namespace

void write_cloud(std::ostream& out, const geometry::PointCloud& cloud) {
  out << format_cloud(cloud);
}

std::string format_cloud(const geometry::PointCloud& cloud) {
  fmt::memory_buffer buf;
  fmt::format_to(std::back_inserter(buf), "# frame={} n={}\n", cloud.frame_id,
                 cloud.size());
  for (const auto& p : cloud.points)
    fmt::format_to(std::back_inserter(buf), "{:.9f} {:.9f} {:.9f} {:.9f}\n",
                   p.x, p.y, p.z, p.intensity);
  return fmt::to_string(buf);
}

geometry::PointCloud read_cloud(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw std::runtime_error("empty cloud file");

  constexpr std::string_view kFrame = "# frame=";
  const auto n_pos = header.rfind(" n=");
  if (header.rfind(kFrame, 0) != 0 || n_pos == std::string::npos ||
      n_pos < kFrame.size())
    throw std::runtime_error("line 1: expected '# frame=<id> n=<count>'");

  geometry::PointCloud cloud;
  cloud.frame_id = header.substr(kFrame.size(), n_pos - kFrame.size());
  if (cloud.frame_id.empty()) throw std::runtime_error("line 1: empty frame id");
  const std::string count_text = header.substr(n_pos + 3);
  std::size_t count = 0;
  auto [ptr, ec] = std::from_chars(
      count_text.data(), count_text.data() + count_text.size(), count);
  if (ec != std::errc() || ptr != count_text.data() + count_text.size())
    throw std::runtime_error("line 1: bad point count");

  cloud.points.reserve(count);
  std::string line;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t line_no = i + 2;
    if (!std::getline(in, line))
      throw std::runtime_error(fmt::format(
          "expected {} points, file ends after {}", count, i));
    double values[4];
    std::size_t n = 0;
    std::size_t pos = 0;
    while (pos < line.size()) {
      while (pos < line.size() && line[pos] == ' ') ++pos;
      if (pos >= line.size()) break;
      const auto next = line.find(' ', pos);
      const auto stop = next == std::string::npos ? line.size() : next;
      if (n == 4)
        throw std::runtime_error(fmt::format("line {}: too many fields", line_no));
      values[n++] = parse_number(std::string_view(line).substr(pos, stop - pos),
                                 line_no);
      pos = stop;
    }
    if (n != 4)
      throw std::runtime_error(fmt::format("line {}: expected 4 fields", line_no));
    cloud.points.push_back({values[0], values[1], values[2], values[3]});
  }
  geometry::validate(cloud);
  return cloud;
}

geometry::PointCloud parse_cloud(const std::string& text) {
  std::istringstream in(text);
  return read_cloud(in);
}

void save_cloud(const std::string& path, const geometry::PointCloud& cloud) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_cloud(out, cloud);
}

geometry::PointCloud load_cloud(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  return read_cloud(in);
}

}  // namespace coopsense::io
