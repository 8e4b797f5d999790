#include <doctest.h>

#include <algorithm>
#include <set>

#include "coopsense/detection.hpp"
#include "coopsense/lidar_sim.hpp"
#include "coopsense/rng.hpp"
#include "oracles.hpp"

using namespace coopsense;
using namespace coopsense::detection;
using geometry::Point;
using geometry::PointCloud;

namespace {

PointCloud plane_cloud(Rng& rng, int n, double z = 0.0) {
  PointCloud c{"p", {}};
  for (int i = 0; i < n; ++i)
    c.points.push_back({rng.uniform(-30, 30), rng.uniform(-30, 30), z, 0.3});
  return c;
}

// Points on the surface of an axis-aligned box.
void add_box_shell(PointCloud& c, Rng& rng, double cx, double cy, double z0, double len,
                   double wid, double hei, int n) {
  for (int i = 0; i < n; ++i) {
    Point p{cx + rng.uniform(-len / 2, len / 2), cy + rng.uniform(-wid / 2, wid / 2),
            z0 + rng.uniform(0, hei), 1.0};
    switch (i % 3) {
      case 0: p.x = cx + (i % 2 ? len / 2 : -len / 2); break;
      case 1: p.y = cy + (i % 2 ? wid / 2 : -wid / 2); break;
      default: p.z = z0 + hei; break;
    }
    c.points.push_back(p);
  }
}

}  // namespace

TEST_CASE("config validation") {
  CHECK_NOTHROW(validate(DetectorConfig{}));
  DetectorConfig c;
  c.dbscan_eps = 0;
  CHECK_THROWS_AS(validate(c), std::invalid_argument);
  c = DetectorConfig{};
  c.bounds.min_length = 7;
  CHECK_THROWS_AS(validate(c), std::invalid_argument);
  c = DetectorConfig{};
  c.ransac_sample = 2;
  CHECK_THROWS_AS(validate(c), std::invalid_argument);
}

TEST_CASE("ransac ground removal examples") {
  Rng rng(1);
  PointCloud c = plane_cloud(rng, 10000);
  const std::size_t n_plane = c.size();
  for (int i = 0; i < 200; ++i)
    c.points.push_back({rng.uniform(-30, 30), rng.uniform(-30, 30), 1.0, 1.0});
  const auto r = ransac_ground_removal_detailed(c, DetectorConfig{}, 7);
  CHECK(r.remaining.size() <= 200);
  CHECK(r.remaining.size() == 200);
  for (std::size_t k : r.kept) CHECK(k >= n_plane);
  REQUIRE_FALSE(r.planes.empty());
  CHECK(std::abs(r.planes[0].nz) == doctest::Approx(1.0));
  CHECK(r.planes[0].d == doctest::Approx(0.0).epsilon(1e-9));

  CHECK(ransac_ground_removal(PointCloud{"e", {}}, DetectorConfig{}, 1).empty());
  const PointCloud two{"t", {{0, 0, 0, 1}, {1, 1, 1, 1}}};
  CHECK(ransac_ground_removal(two, DetectorConfig{}, 1).points == two.points);
}

TEST_CASE("ransac survivors are a subset and the result is seeded") {
  Rng rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    const auto scene = oracle::ground_scene(rng, 3000, 5);
    const auto a = ransac_ground_removal_detailed(scene.cloud, DetectorConfig{}, 99);
    const auto b = ransac_ground_removal_detailed(scene.cloud, DetectorConfig{}, 99);
    CHECK(a.remaining.points == b.remaining.points);
    REQUIRE(a.kept.size() == a.remaining.size());
    CHECK(std::is_sorted(a.kept.begin(), a.kept.end()));
    for (std::size_t i = 0; i < a.kept.size(); ++i)
      CHECK(a.remaining.points[i] == scene.cloud.points[a.kept[i]]);
    CHECK(a.remaining.size() <= scene.cloud.size());
  }
}

TEST_CASE("two ransac passes clean plane + elevated scenes") {
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const auto scene = oracle::ground_scene(rng);
    const auto r = ransac_ground_removal_detailed(scene.cloud, DetectorConfig{}, trial + 1);
    std::size_t plane_total = 0, elevated_total = 0, plane_left = 0, elevated_left = 0;
    for (bool p : scene.is_plane) (p ? plane_total : elevated_total)++;
    for (std::size_t k : r.kept) (scene.is_plane[k] ? plane_left : elevated_left)++;
    CHECK(plane_left <= 0.01 * plane_total);
    CHECK(elevated_left >= 0.95 * elevated_total);
  }
}

TEST_CASE("dbscan examples") {
  PointCloud two{"g", {}};
  for (int g = 0; g < 2; ++g)
    for (int i = 0; i < 5; ++i) two.points.push_back({g * 10.0 + i * 0.5, 0, 0, 1});
  const auto cl = dbscan(two, 1.25, 3);
  REQUIRE(cl.size() == 2);
  CHECK(cl[0] == Cluster{0, 1, 2, 3, 4});
  CHECK(cl[1] == Cluster{5, 6, 7, 8, 9});

  CHECK(dbscan(PointCloud{"s", {{1, 1, 1, 1}}}, 1.25, 3).empty());
  CHECK(dbscan(PointCloud{"e", {}}, 1.25, 3).empty());

  PointCloud same{"c", std::vector<Point>(6, Point{2, 2, 2, 1})};
  const auto one = dbscan(same, 0.5, 3);
  REQUIRE(one.size() == 1);
  CHECK(one[0].size() == 6);

  CHECK_THROWS_AS(dbscan(two, 0.0, 3), std::invalid_argument);
  CHECK_THROWS_AS(dbscan(two, 1.0, 0), std::invalid_argument);
}

TEST_CASE("dbscan border point goes to the first cluster reaching it") {
  // Two cores at x = 0 and x = 2 (each with two close friends), border at 1.
  PointCloud c{"b", {{0, 0, 0, 1}, {0, 0.1, 0, 1}, {0, -0.1, 0, 1},
                     {2, 0, 0, 1}, {2, 0.1, 0, 1}, {2, -0.1, 0, 1}, {1, 0, 0, 1}}};
  // min_pts 3 would make the middle point core (x = 0 and 2 are exactly eps
  // away) and join everything. With 4 only (0, 0) and (2, 0) are core.
  CHECK(dbscan(c, 1.0, 3).size() == 1);
  const auto cl = dbscan(c, 1.0, 4);
  CHECK(cl == oracle::dbscan(c, 1.0, 4));
  REQUIRE(cl.size() == 2);
  CHECK(cl[0] == Cluster{0, 1, 2, 6});
  CHECK(cl[1] == Cluster{3, 4, 5});
}

TEST_CASE("dbscan matches the brute-force oracle on random clouds") {
  Rng rng(42);
  for (int trial = 0; trial < 200; ++trial) {
    const auto c = oracle::random_dbscan_case(rng);
    const auto got = dbscan(c.cloud, c.eps, c.min_pts);
    const auto want = oracle::dbscan(c.cloud, c.eps, c.min_pts);
    REQUIRE(got == want);
  }
}

TEST_CASE("dbscan core set does not depend on point order") {
  Rng rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    auto c = oracle::random_dbscan_case(rng);
    std::vector<std::size_t> perm(c.cloud.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.index(i)]);
    PointCloud shuffled{"s", {}};
    for (std::size_t i : perm) shuffled.points.push_back(c.cloud.points[i]);

    auto cores = [&](const PointCloud& cloud, const std::vector<Cluster>& clusters) {
      const auto oracle_cores = oracle::core_points(cloud, c.eps, c.min_pts);
      std::set<std::size_t> in_clusters;
      for (const auto& cl : clusters)
        for (std::size_t i : cl)
          if (oracle_cores.count(i)) in_clusters.insert(i);
      CHECK(in_clusters == oracle_cores);
      return oracle_cores;
    };
    const auto a = cores(c.cloud, dbscan(c.cloud, c.eps, c.min_pts));
    const auto b = cores(shuffled, dbscan(shuffled, c.eps, c.min_pts));
    std::set<std::size_t> mapped;
    for (std::size_t i : b) mapped.insert(perm[i]);
    CHECK(mapped == a);
  }
}

TEST_CASE("size filter") {
  Rng rng(4);
  auto detect_box = [&](double len, double wid, double hei) {
    PointCloud c{"f", {}};
    add_box_shell(c, rng, 0, 0, 0, len, wid, hei, 300);
    // Pin the extremes so the extents are exact.
    c.points.push_back({-len / 2, -wid / 2, 0, 1});
    c.points.push_back({len / 2, wid / 2, hei, 1});
    Cluster all(c.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return size_filter({all}, c, SizeBounds{});
  };
  const auto car = detect_box(4.4, 1.7, 1.5);
  REQUIRE(car.size() == 1);
  CHECK(car[0].box.ex == doctest::Approx(4.4));
  CHECK(car[0].box.ey == doctest::Approx(1.7));
  CHECK(car[0].box.ez == doctest::Approx(1.5));
  CHECK(car[0].score == 302);
  CHECK(car[0].sources == std::vector<std::string>{"f"});
  CHECK(detect_box(8, 3, 2).empty());
  CHECK(detect_box(4, 1.8, 0.05).empty());
  // Length is the larger horizontal extent, whichever axis it lies on.
  CHECK(within_bounds(Box3{0, 0, 0, 1.7, 4.4, 1.5, 0}, SizeBounds{}));
  CHECK_FALSE(within_bounds(Box3{0, 0, 0, 0.4, 3.5, 1.5, 0}, SizeBounds{}));
}

TEST_CASE("size filter output always satisfies the bounds") {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const auto c = oracle::random_dbscan_case(rng);
    const auto clusters = dbscan(c.cloud, c.eps, c.min_pts);
    for (const auto& d : size_filter(clusters, c.cloud, SizeBounds{}))
      CHECK(within_bounds(d.box, SizeBounds{}));
  }
}

TEST_CASE("detect end to end") {
  Rng rng(10);
  const PointCloud ground = plane_cloud(rng, 5000, -2.0);
  CHECK(detect(ground, DetectorConfig{}, 1).empty());

  PointCloud scene = ground;
  add_box_shell(scene, rng, 12, 4, -1.7, 4.5, 1.8, 1.5, 400);
  const auto dets = detect(scene, DetectorConfig{}, 1);
  REQUIRE(dets.size() == 1);
  CHECK(dets[0].box.cx == doctest::Approx(12).epsilon(0.02));
  CHECK(dets[0].box.cy == doctest::Approx(4).epsilon(0.05));
  CHECK(dets[0].frame_id == "p");

  const auto again = detect(scene, DetectorConfig{}, 1);
  REQUIRE(again.size() == dets.size());
  CHECK(again[0].box.cx == dets[0].box.cx);
  CHECK(again[0].score == dets[0].score);
}

TEST_CASE("merged two-sensor cloud of one car gives one or two detections") {
  SceneSnapshot scene;
  scene.boxes.push_back(OrientedBox{15, 2, 0.75, 4.5, 1.8, 1.5, 0.2, 1, true});
  lidar::LidarSpec a;
  a.sensor_id = "a";
  a.mount_height = 3.0;
  lidar::LidarSpec b = a;
  b.sensor_id = "b";
  b.pose = geometry::make_pose(30, 0, 0, 3.0);
  const auto fa = lidar::cast_frame(a, scene);
  const auto fb = lidar::cast_frame(b, scene);
  const std::vector<geometry::SensorFrame> others{fb};
  const PointCloud merged = geometry::merge_clouds(fa, others);
  const auto dets = detect(merged, DetectorConfig{}, 5);
  CHECK(dets.size() >= 1);
  CHECK(dets.size() <= 2);
}
