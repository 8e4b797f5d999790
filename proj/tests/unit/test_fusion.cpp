#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "coopsense/fusion.hpp"
#include "coopsense/network.hpp"
#include "coopsense/rng.hpp"
#include "support.hpp"

using namespace coopsense;
using namespace coopsense::fusion;
using detection::Box3;

namespace {

const traffic::RoadNetwork& net() {
  static const traffic::RoadNetwork n = traffic::make_t_intersection({});
  return n;
}

Detection det_at(double x, double y, std::string src = "s", int score = 10) {
  Detection d;
  d.box = Box3{x, y, 0.75, 4.0, 1.8, 1.5, 0.0};
  d.score = score;
  d.sources = {src};
  d.frame_id = "global";
  return d;
}

std::array<Eigen::Vector3d, 8> box_corners(const Box3& b) {
  std::array<Eigen::Vector3d, 8> out;
  const Eigen::Matrix3d r =
      Eigen::AngleAxisd(b.yaw, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  int k = 0;
  for (int sx : {-1, 1})
    for (int sy : {-1, 1})
      for (int sz : {-1, 1})
        out[k++] = Eigen::Vector3d(b.cx, b.cy, b.cz) +
                   r * Eigen::Vector3d(sx * b.ex / 2, sy * b.ey / 2, sz * b.ez / 2);
  return out;
}

}  // namespace

TEST_CASE("to_global examples") {
  const std::vector<Detection> local{det_at(10, 2), det_at(-3, 7)};
  const auto same = to_global(local, geometry::Pose{}, 0.0);
  CHECK(same[0].box.cx == doctest::Approx(10));
  CHECK(same[0].box.cy == doctest::Approx(2));
  CHECK(same[1].box.cz == doctest::Approx(0.75));
  CHECK(same[0].frame_id == "global");
  CHECK(same[0].sources == local[0].sources);

  const auto flipped = to_global(local, geometry::make_pose(0, 0, 0, std::numbers::pi), 0.0);
  CHECK(flipped[0].box.cx == doctest::Approx(-10));
  CHECK(flipped[0].box.cy == doctest::Approx(-2));
  CHECK(flipped[1].box.cx == doctest::Approx(3));
}

TEST_CASE("to_global matches corner-wise transformation") {
  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const geometry::Pose pose = testsupport::random_pose(rng, true);
    const double h = rng.uniform(0, 3);
    Detection d = det_at(rng.uniform(-50, 50), rng.uniform(-50, 50));
    d.box.ex = rng.uniform(1, 5);
    d.box.ey = rng.uniform(1, 3);
    const auto g = to_global(std::vector<Detection>{d}, pose, h)[0];
    const auto local_corners = box_corners(d.box);
    const auto global_corners = box_corners(g.box);
    for (int k = 0; k < 8; ++k)
      REQUIRE((testsupport::to_world(pose, h, local_corners[k]) - global_corners[k]).norm() <
              1e-9);
  }
}

TEST_CASE("to_global agrees with merge math on box centers") {
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const geometry::Pose ego = testsupport::random_pose(rng, true);
    const geometry::Pose other = testsupport::random_pose(rng, true);
    const Detection d = det_at(rng.uniform(-50, 50), rng.uniform(-50, 50));
    const Eigen::Vector3d c(d.box.cx, d.box.cy, d.box.cz);
    // Route through the ego frame and then to global, versus straight to global.
    const Eigen::Vector3d in_ego = geometry::relative_transform(ego, 3, other, 2).apply(c);
    const auto via_ego = to_global(
        std::vector<Detection>{det_at(in_ego.x(), in_ego.y())}, ego, 3)[0];
    const auto direct = to_global(std::vector<Detection>{d}, other, 2)[0];
    CHECK(std::hypot(via_ego.box.cx - direct.box.cx, via_ego.box.cy - direct.box.cy) < 1e-6);
  }
}

TEST_CASE("dedupe examples") {
  const traffic::Vec2 center{0, 0};
  const std::vector<Detection> pair{det_at(20.5, 0, "far"), det_at(20, 0, "near")};
  const auto one = dedupe(pair, 5.0, center);
  REQUIRE(one.size() == 1);
  CHECK(one[0].box.cx == doctest::Approx(20));
  CHECK(one[0].sources == std::vector<std::string>{"near", "far"});

  const std::vector<Detection> apart{det_at(0, 10), det_at(0, 30)};
  CHECK(dedupe(apart, 5.0, center).size() == 2);

  // Greedy closure on a triple: c is nearest the center and absorbs a and b.
  const std::vector<Detection> triple{det_at(14, 0, "a"), det_at(12, 1, "b"),
                                      det_at(11, 0, "c")};
  const auto t = dedupe(triple, 5.0, center);
  REQUIRE(t.size() == 1);
  CHECK(t[0].sources == std::vector<std::string>{"c", "b", "a"});

  // Chain: a-b and b-c are close, a-c is not. a survives and takes b; c stays.
  const std::vector<Detection> chain{det_at(10, 0, "a"), det_at(14, 0, "b"),
                                     det_at(18, 0, "c")};
  const auto ch = dedupe(chain, 5.0, center);
  REQUIRE(ch.size() == 2);
  CHECK(ch[0].box.cx == 10);
  CHECK(ch[1].box.cx == 18);
}

TEST_CASE("dedupe properties on random sets") {
  Rng rng(14);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Detection> ds;
    const int n = static_cast<int>(rng.index(40));
    for (int i = 0; i < n; ++i) ds.push_back(det_at(rng.uniform(-60, 60), rng.uniform(-60, 60)));
    const auto once = dedupe(ds, 5.0, {0, 0});
    CHECK(once.size() <= ds.size());
    for (std::size_t i = 0; i < once.size(); ++i)
      for (std::size_t j = i + 1; j < once.size(); ++j)
        CHECK(std::hypot(once[i].box.cx - once[j].box.cx, once[i].box.cy - once[j].box.cy) >=
              5.0);
    const auto twice = dedupe(once, 5.0, {0, 0});
    REQUIRE(twice.size() == once.size());
    for (std::size_t i = 0; i < once.size(); ++i) {
      CHECK(twice[i].box.cx == once[i].box.cx);
      CHECK(twice[i].box.cy == once[i].box.cy);
    }
  }
}

TEST_CASE("point in polygon and geofence") {
  const std::vector<traffic::Vec2> square{{0, 0}, {10, 0}, {10, 10}, {0, 10}};
  CHECK(inside_polygon({5, 5}, square));
  CHECK_FALSE(inside_polygon({15, 5}, square));
  CHECK(inside_polygon({10, 5}, square));
  CHECK(inside_polygon({0, 0}, square));
  CHECK(inside_polygon({5, 0}, square));
  CHECK_FALSE(inside_polygon({-1e-6, 5}, square));

  const auto& poly = net().geofence_polygon;
  traffic::Vec2 centroid{0, 0};
  for (const auto& p : poly) {
    centroid.x += p.x / poly.size();
    centroid.y += p.y / poly.size();
  }
  const traffic::Vec2 edge{0.5 * (poly[0].x + poly[1].x), 0.5 * (poly[0].y + poly[1].y)};
  const std::vector<Detection> ds{det_at(0, 0), det_at(-100, 50), det_at(edge.x, edge.y),
                                  det_at(centroid.x, centroid.y)};
  const auto kept = geofence(ds, poly);
  REQUIRE(kept.size() == 3);
  CHECK(kept[0].box.cx == 0);
  CHECK(kept[1].box.cx == doctest::Approx(edge.x));
  CHECK(geofence(kept, poly).size() == kept.size());
}

TEST_CASE("lane matching") {
  // Eastbound curb lane: y = -5.25, stop bar at x = -4.5.
  const auto m = match_lane({-34.5, -5.25}, net());
  CHECK(net().lane(m.lane).id == "west_in_0");
  CHECK(m.dist_to_bar == doctest::Approx(30.0));
  CHECK(m.offset == doctest::Approx(0.0));

  // Halfway between the two eastbound lanes: the lower index wins.
  const auto tie = match_lane({-50, -3.5}, net());
  CHECK(tie.lane == 0);

  // Inside the box past the eastbound bar.
  const auto inside = match_lane({-2.0, -5.25}, net());
  CHECK(inside.lane == 0);
  CHECK(inside.dist_to_bar == doctest::Approx(-2.5));

  // Outgoing westbound curb lane, 40 m out: negative distance.
  const auto out = match_lane({-44.5, 5.25}, net());
  CHECK(net().lane(out.lane).id == "west_out_0");
  CHECK(out.dist_to_bar == doctest::Approx(-40.0));

  // Side street approach, 20 m before its bar at y = -8.
  const auto side = match_lane({1.75, -28}, net());
  CHECK(net().lane(side.lane).id == "south_in_0");
  CHECK(side.dist_to_bar == doctest::Approx(20.0));

  CHECK(match_lane({50, 50}, net()).lane == -1);
}

TEST_CASE("fuse pipeline is monotone and lane_map keeps sources") {
  std::vector<Detection> ds{det_at(-30, -5.25, "infra_0"), det_at(-30.5, -5.3, "cav_3"),
                            det_at(-80, 40, "infra_0"), det_at(20, 5.25, "infra_0")};
  const auto r = fuse(ds, net());
  CHECK(r.global.size() == 4);
  CHECK(r.fenced.size() == 3);
  CHECK(r.deduped.size() == 2);
  REQUIRE(r.observations.size() == 2);
  const auto& west = r.observations[0].x < 0 ? r.observations[0] : r.observations[1];
  CHECK(west.sources == std::vector<std::string>{"infra_0", "cav_3"});
  CHECK(west.dist_to_bar == doctest::Approx(25.5));
}

TEST_CASE("observation text round trip") {
  std::vector<FusedVehicleObservation> obs(2);
  obs[0] = {1.5, -5.25, 0, 30.25, {}, {}};
  obs[1] = {-40.125, 5.25, 5, -35.625, {}, {}};
  std::stringstream ss;
  write_observations(ss, 7, obs);
  write_observations(ss, 8, std::vector<FusedVehicleObservation>{obs[1]});
  const auto back = read_observations(ss);
  REQUIRE(back.size() == 2);
  CHECK(back[0].first == 7);
  REQUIRE(back[0].second.size() == 2);
  CHECK(back[0].second[1].lane == 5);
  CHECK(back[0].second[1].dist_to_bar == doctest::Approx(-35.625));
  CHECK(back[1].first == 8);
  std::istringstream bad("7 0 1.0 2.0\n");
  CHECK_THROWS_AS(read_observations(bad), std::runtime_error);
}
