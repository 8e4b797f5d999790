#pragma once

// Reference implementations used only as test oracles. Kept deliberately
// naive: no grids, no early exits, no shared code with the library.

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "coopsense/detection.hpp"
#include "coopsense/geometry.hpp"
#include "coopsense/metrics.hpp"
#include "coopsense/rng.hpp"

namespace oracle {

using coopsense::Rng;
using coopsense::geometry::Point;
using coopsense::geometry::PointCloud;

// O(n^2) DBSCAN. Clusters are the eps-connected components of core points,
// numbered by their lowest core index; a border point goes to the
// lowest-numbered cluster owning a core point within eps.
inline std::vector<std::vector<std::size_t>> dbscan(const PointCloud& cloud, double eps,
                                                    int min_pts) {
  const std::size_t n = cloud.size();
  auto near = [&](std::size_t i, std::size_t j) {
    const Point& a = cloud.points[i];
    const Point& b = cloud.points[j];
    const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
    return dx * dx + dy * dy + dz * dz <= eps * eps;
  };
  std::vector<bool> core(n);
  for (std::size_t i = 0; i < n; ++i) {
    int count = 0;
    for (std::size_t j = 0; j < n; ++j) count += near(i, j);
    core[i] = count >= min_pts;
  }
  std::vector<int> label(n, -1);
  int next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!core[i] || label[i] >= 0) continue;
    // Flood fill over core points.
    std::vector<std::size_t> todo{i};
    label[i] = next;
    while (!todo.empty()) {
      const std::size_t c = todo.back();
      todo.pop_back();
      for (std::size_t j = 0; j < n; ++j)
        if (core[j] && label[j] < 0 && near(c, j)) {
          label[j] = next;
          todo.push_back(j);
        }
    }
    ++next;
  }
  std::vector<std::vector<std::size_t>> clusters(next);
  for (std::size_t i = 0; i < n; ++i) {
    int cl = label[i];
    if (!core[i]) {
      for (std::size_t j = 0; j < n; ++j)
        if (core[j] && near(i, j) && (cl < 0 || label[j] < cl)) cl = label[j];
    }
    if (cl >= 0) clusters[cl].push_back(i);
  }
  return clusters;
}

inline std::set<std::size_t> core_points(const PointCloud& cloud, double eps, int min_pts) {
  std::set<std::size_t> out;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    int count = 0;
    for (std::size_t j = 0; j < cloud.size(); ++j) {
      const double dx = cloud.points[i].x - cloud.points[j].x,
                   dy = cloud.points[i].y - cloud.points[j].y,
                   dz = cloud.points[i].z - cloud.points[j].z;
      count += dx * dx + dy * dy + dz * dz <= eps * eps;
    }
    if (count >= min_pts) out.insert(i);
  }
  return out;
}

struct DbscanCase {
  PointCloud cloud;
  double eps = 1.0;
  int min_pts = 3;
};

// A few gaussian blobs plus uniform noise, some points duplicated, and
// some coordinates snapped to a coarse lattice so exact-eps distances occur.
inline DbscanCase random_dbscan_case(Rng& rng) {
  DbscanCase c;
  c.cloud.frame_id = "oracle";
  c.eps = rng.uniform(0.2, 2.0);
  c.min_pts = 1 + static_cast<int>(rng.index(8));
  const int n = 1 + static_cast<int>(rng.index(200));
  const int blobs = 1 + static_cast<int>(rng.index(6));
  std::vector<Point> centers;
  for (int b = 0; b < blobs; ++b)
    centers.push_back({rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-2, 2), 1});
  const bool lattice = rng.uniform() < 0.3;
  for (int i = 0; i < n; ++i) {
    Point p;
    const double u = rng.uniform();
    if (u < 0.15) {
      p = {rng.uniform(-12, 12), rng.uniform(-12, 12), rng.uniform(-3, 3), 1};
    } else if (u < 0.2 && !c.cloud.points.empty()) {
      p = c.cloud.points[rng.index(c.cloud.points.size())];
    } else {
      const Point& ctr = centers[rng.index(centers.size())];
      const double spread = rng.uniform(0.3, 2.0) * c.eps;
      p = {ctr.x + rng.normal(0, spread), ctr.y + rng.normal(0, spread),
           ctr.z + rng.normal(0, 0.3 * spread), 1};
    }
    if (lattice) {
      const double q = c.eps / 2;
      p.x = std::round(p.x / q) * q;
      p.y = std::round(p.y / q) * q;
      p.z = std::round(p.z / q) * q;
    }
    c.cloud.points.push_back(p);
  }
  return c;
}

struct GroundScene {
  PointCloud cloud;
  std::vector<bool> is_plane;
};

// Gently tilted ground with sensor-like noise, plus box-shaped clusters
// standing on it (bodies start at least 0.5 m above the surface).
inline GroundScene ground_scene(Rng& rng, int plane_points = 8000, int objects = 8) {
  GroundScene s;
  s.cloud.frame_id = "scene";
  const double gx = rng.uniform(-0.03, 0.03), gy = rng.uniform(-0.03, 0.03),
               g0 = rng.uniform(-2.5, -1.5);
  auto ground = [&](double x, double y) { return g0 + gx * x + gy * y; };
  for (int i = 0; i < plane_points; ++i) {
    const double x = rng.uniform(-40, 40), y = rng.uniform(-40, 40);
    s.cloud.points.push_back({x, y, ground(x, y) + rng.normal(0, 0.02), 0.3});
    s.is_plane.push_back(true);
  }
  for (int o = 0; o < objects; ++o) {
    const double cx = rng.uniform(-35, 35), cy = rng.uniform(-35, 35);
    const double len = rng.uniform(3, 5), wid = rng.uniform(1.5, 2), hei = rng.uniform(1, 1.6);
    const double base = ground(cx, cy) + 0.5;
    for (int k = 0; k < 60; ++k) {
      const double x = cx + rng.uniform(-len / 2, len / 2);
      const double y = cy + rng.uniform(-wid / 2, wid / 2);
      s.cloud.points.push_back({x, y, base + rng.uniform(0, hei), 1.0});
      s.is_plane.push_back(false);
    }
  }
  return s;
}

// --- AP40 ---------------------------------------------------------------

struct AabbOracle {
  double x0, x1, y0, y1, z0, z1;
};

inline AabbOracle aabb(const coopsense::detection::Box3& b) {
  // Yaw-free boxes only.
  return {b.cx - b.ex / 2, b.cx + b.ex / 2, b.cy - b.ey / 2,
          b.cy + b.ey / 2, b.cz - b.ez / 2, b.cz + b.ez / 2};
}

inline double iou(const coopsense::detection::Box3& a, const coopsense::detection::Box3& b,
                  bool bev) {
  const AabbOracle p = aabb(a), q = aabb(b);
  const double ix = std::max(0.0, std::min(p.x1, q.x1) - std::max(p.x0, q.x0));
  const double iy = std::max(0.0, std::min(p.y1, q.y1) - std::max(p.y0, q.y0));
  const double iz = std::max(0.0, std::min(p.z1, q.z1) - std::max(p.z0, q.z0));
  const double inter = bev ? ix * iy : ix * iy * iz;
  const double va = (p.x1 - p.x0) * (p.y1 - p.y0) * (bev ? 1 : (p.z1 - p.z0));
  const double vb = (q.x1 - q.x0) * (q.y1 - q.y0) * (bev ? 1 : (q.z1 - q.z0));
  return inter / (va + vb - inter);
}

// Brute force: greedy matching per frame, then for every score cut the
// precision/recall from scratch, then the 40-level interpolation.
inline double ap40(const std::vector<coopsense::metrics::FrameEval>& frames, double thr,
                   bool bev) {
  struct Scored {
    double score;
    bool tp;
  };
  std::vector<Scored> all;
  std::size_t n_gt = 0;
  for (const auto& f : frames) {
    n_gt += f.gts.size();
    std::vector<std::size_t> order(f.preds.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return f.preds[a].score > f.preds[b].score;
    });
    std::vector<bool> used(f.gts.size(), false);
    for (std::size_t i : order) {
      int best = -1;
      double best_v = -1;
      for (std::size_t g = 0; g < f.gts.size(); ++g) {
        if (used[g]) continue;
        const double v = iou(f.preds[i].box, f.gts[g], bev);
        if (v >= thr && v > best_v) {
          best = static_cast<int>(g);
          best_v = v;
        }
      }
      if (best >= 0) used[best] = true;
      all.push_back({f.preds[i].score, best >= 0});
    }
  }
  if (n_gt == 0) return 0.0;
  std::set<double> cuts;
  for (const auto& s : all) cuts.insert(s.score);
  std::vector<std::pair<double, double>> rp;  // recall, precision
  for (double c : cuts) {
    int tp = 0, n = 0;
    for (const auto& s : all)
      if (s.score >= c) {
        ++n;
        tp += s.tp;
      }
    rp.emplace_back(static_cast<double>(tp) / n_gt, static_cast<double>(tp) / n);
  }
  double sum = 0;
  for (int k = 1; k <= 40; ++k) {
    const double r = k / 40.0;
    double best = 0;
    for (const auto& [rec, prec] : rp)
      if (rec >= r - 1e-12) best = std::max(best, prec);
    sum += best;
  }
  return 100.0 * sum / 40.0;
}

inline coopsense::detection::Box3 box(double cx, double cy, double ex = 4.0, double ey = 2.0,
                                      double cz = 0.75, double ez = 1.5) {
  return {cx, cy, cz, ex, ey, ez, 0.0};
}

// Hand-built style evaluation sets: exact hits, shifted hits, duplicates,
// misses and false alarms, with tied scores in some sets.
inline std::vector<coopsense::metrics::FrameEval> ap_case(Rng& rng) {
  std::vector<coopsense::metrics::FrameEval> frames(1 + rng.index(4));
  for (auto& f : frames) {
    const int n_gt = static_cast<int>(rng.index(6));
    for (int g = 0; g < n_gt; ++g) {
      const auto gt = box(g * 10.0 + rng.uniform(-1, 1), rng.uniform(-1, 1));
      f.gts.push_back(gt);
      const double u = rng.uniform();
      if (u < 0.6)
        f.preds.push_back(
            {box(gt.cx + rng.uniform(-2, 2), gt.cy + rng.uniform(-1, 1), rng.uniform(2, 5),
                 rng.uniform(1, 3), rng.uniform(0.3, 1.5), rng.uniform(0.5, 2)),
             std::round(rng.uniform(0, 10))});
      if (u > 0.85)
        f.preds.push_back({box(gt.cx + 0.3, gt.cy), std::round(rng.uniform(0, 10))});
    }
    const int n_fp = static_cast<int>(rng.index(4));
    for (int k = 0; k < n_fp; ++k)
      f.preds.push_back(
          {box(rng.uniform(-50, 50), 30 + rng.uniform(0, 20)), std::round(rng.uniform(0, 10))});
  }
  return frames;
}

}  // namespace oracle
