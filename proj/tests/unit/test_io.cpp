#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <sstream>

#include "coopsense/point_cloud_io.hpp"
#include "coopsense/rng.hpp"

using namespace coopsense;
using geometry::Point;
using geometry::PointCloud;

TEST_CASE("cloud text round trip at 9 decimals") {
  Rng rng(9);
  PointCloud c{"infra_0", {}};
  for (int i = 0; i < 500; ++i)
    c.points.push_back({std::round(rng.uniform(-150, 150) * 1e9) / 1e9,
                        std::round(rng.uniform(-150, 150) * 1e9) / 1e9,
                        std::round(rng.uniform(-5, 5) * 1e9) / 1e9, i % 2 ? 1.0 : 0.3});
  const std::string text = io::format_cloud(c);
  const PointCloud back = io::parse_cloud(text);
  CHECK(back.frame_id == "infra_0");
  REQUIRE(back.size() == c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    CHECK(std::abs(back.points[i].x - c.points[i].x) < 1e-12);
    CHECK(std::abs(back.points[i].y - c.points[i].y) < 1e-12);
    CHECK(std::abs(back.points[i].z - c.points[i].z) < 1e-12);
    CHECK(back.points[i].intensity == c.points[i].intensity);
  }
  // Writing the parsed cloud again reproduces the text byte for byte.
  CHECK(io::format_cloud(back) == text);
}

TEST_CASE("header format") {
  const PointCloud c{"cav_12", {{1.5, -2, 0.25, 1}}};
  CHECK(io::format_cloud(c) ==
        "# frame=cav_12 n=1\n1.500000000 -2.000000000 0.250000000 1.000000000\n");
  CHECK(io::format_cloud(PointCloud{"e", {}}) == "# frame=e n=0\n");
}

TEST_CASE("malformed files are rejected") {
  CHECK_THROWS_AS(io::parse_cloud(""), std::runtime_error);
  CHECK_THROWS_AS(io::parse_cloud("frame=a n=1\n1 2 3 4\n"), std::runtime_error);
  CHECK_THROWS_AS(io::parse_cloud("# frame= n=0\n"), std::runtime_error);
  CHECK_THROWS_AS(io::parse_cloud("# frame=a n=x\n"), std::runtime_error);
  CHECK_THROWS_AS(io::parse_cloud("# frame=a n=2\n1 2 3 4\n"), std::runtime_error);
  CHECK_THROWS_AS(io::parse_cloud("# frame=a n=1\n1 2 3\n"), std::runtime_error);
  CHECK_THROWS_AS(io::parse_cloud("# frame=a n=1\n1 2 3 4 5\n"), std::runtime_error);
  CHECK_THROWS_AS(io::parse_cloud("# frame=a n=1\n1 2 z 4\n"), std::runtime_error);
  CHECK_THROWS_AS(io::parse_cloud("# frame=a n=1\nnan 2 3 4\n"), std::exception);
}

TEST_CASE("save and load through a file") {
  const auto path = std::filesystem::temp_directory_path() / "coopsense_io_test.txt";
  const PointCloud c{"f", {{1, 2, 3, 0.3}, {-1, -2, -3, 1}}};
  io::save_cloud(path.string(), c);
  const PointCloud back = io::load_cloud(path.string());
  CHECK(back.points == c.points);
  std::filesystem::remove(path);
  CHECK_THROWS(io::load_cloud(path.string()));
}
