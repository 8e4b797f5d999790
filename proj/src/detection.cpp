#include "coopsense/detection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <unordered_map>

#include <Eigen/Eigenvalues>

#include "coopsense/rng.hpp"

namespace coopsense::detection {

using geometry::Point;
using geometry::PointCloud;

void validate(const DetectorConfig& cfg) {
  if (!(cfg.ransac_distance > 0.0) || cfg.ransac_sample < 3 ||
      cfg.ransac_iters < 1 || cfg.ransac_passes < 0)
    throw std::invalid_argument("invalid RANSAC parameters");
  if (!(cfg.ransac_confidence > 0.0 && cfg.ransac_confidence <= 1.0))
    throw std::invalid_argument("RANSAC confidence must be in (0, 1]");
  if (!(cfg.ground_max_tilt_deg >= 0.0) || !(cfg.ground_max_offset >= 0.0) ||
      !(cfg.ground_min_support >= 0.0))
    throw std::invalid_argument("invalid ground gate parameters");
  if (!(cfg.dbscan_eps > 0.0) || cfg.dbscan_min_pts < 1)
    throw std::invalid_argument("invalid DBSCAN parameters");
  const auto& b = cfg.bounds;
  if (!(b.min_length > 0.0 && b.min_width > 0.0 && b.min_height > 0.0) ||
      !(b.min_length < b.max_length) || !(b.min_width < b.max_width) ||
      !(b.min_height < b.max_height))
    throw std::invalid_argument("invalid size bounds");
}

Box3 Box3::axis_aligned_envelope() const {
  const double c = std::abs(std::cos(yaw)), s = std::abs(std::sin(yaw));
  return Box3{cx, cy, cz, c * ex + s * ey, s * ex + c * ey, ez, 0.0};
}

namespace {

std::optional<Plane> fit_plane(const std::vector<const Point*>& sample) {
  Eigen::Vector3d normal;
  Eigen::Vector3d anchor;
  if (sample.size() == 3) {
    const Eigen::Vector3d a(sample[0]->x, sample[0]->y, sample[0]->z);
    const Eigen::Vector3d b(sample[1]->x, sample[1]->y, sample[1]->z);
    const Eigen::Vector3d c(sample[2]->x, sample[2]->y, sample[2]->z);
    normal = (b - a).cross(c - a);
    anchor = a;
  } else {
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (const Point* p : sample) mean += Eigen::Vector3d(p->x, p->y, p->z);
    mean /= static_cast<double>(sample.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const Point* p : sample) {
      const Eigen::Vector3d v = Eigen::Vector3d(p->x, p->y, p->z) - mean;
      cov += v * v.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov);
    if (solver.eigenvalues()(1) < 1e-18) return std::nullopt;  // collinear
    normal = solver.eigenvectors().col(0);
    anchor = mean;
  }
  const double norm = normal.norm();
  if (norm < 1e-12) return std::nullopt;
  normal /= norm;
  if (normal.z() < 0.0) normal = -normal;
  return Plane{normal.x(), normal.y(), normal.z(), -normal.dot(anchor)};
}

std::size_t required_iterations(double inlier_ratio, int sample,
                                double confidence, std::size_t cap) {
  if (confidence >= 1.0) return cap;
  const double all_inliers = std::pow(inlier_ratio, sample);
  if (all_inliers >= 1.0) return 1;
  if (all_inliers <= 0.0) return cap;
  const double k =
      std::ceil(std::log(1.0 - confidence) / std::log1p(-all_inliers));
  if (!std::isfinite(k) || k >= static_cast<double>(cap)) return cap;
  return std::max<std::size_t>(1, static_cast<std::size_t>(k));
}

}  // namespace

GroundRemovalResult ransac_ground_removal_detailed(const PointCloud& cloud,
                                                   const DetectorConfig& cfg,
                                                   std::uint64_t seed) {
  validate(cfg);
  Rng rng(seed, 0x5a4c);

  std::vector<std::size_t> alive(cloud.size());
  for (std::size_t i = 0; i < alive.size(); ++i) alive[i] = i;
  std::vector<Point> pts = cloud.points;

  GroundRemovalResult result;
  std::size_t first_support = 0;
  Eigen::Vector3d first_centroid = Eigen::Vector3d::Zero();
  const double cos_tilt = std::cos(cfg.ground_max_tilt_deg * std::numbers::pi / 180.0);
  const std::size_t sample_size = static_cast<std::size_t>(cfg.ransac_sample);
  const std::size_t cap = static_cast<std::size_t>(cfg.ransac_iters);

  std::vector<const Point*> sample(sample_size);
  std::vector<std::size_t> picked(sample_size);
  for (int pass = 0; pass < cfg.ransac_passes; ++pass) {
    const std::size_t m = pts.size();
    if (m < sample_size) break;

    std::size_t best_count = 0;
    Plane best{};
    std::size_t needed = cap;
    for (std::size_t it = 0; it < std::min(cap, needed); ++it) {
      for (std::size_t s = 0; s < sample_size; ++s) {
        std::size_t candidate = 0;
        bool fresh = false;
        while (!fresh) {
          candidate = rng.index(m);
          fresh = std::find(picked.begin(), picked.begin() + s, candidate) ==
                  picked.begin() + s;
        }
        picked[s] = candidate;
        sample[s] = &pts[candidate];
      }
      const auto plane = fit_plane(sample);
      if (!plane) continue;
      if (pass > 0) {
        const auto& g = result.planes.front();
        const double alignment = plane->nx * g.nx + plane->ny * g.ny + plane->nz * g.nz;
        const double offset = plane->nx * first_centroid.x() +
                              plane->ny * first_centroid.y() +
                              plane->nz * first_centroid.z() + plane->d;
        if (alignment < cos_tilt || std::abs(offset) > cfg.ground_max_offset)
          continue;
      }
      std::size_t count = 0;
      for (const auto& p : pts)
        if (std::abs(plane->distance(p)) <= cfg.ransac_distance) ++count;
      if (count > best_count) {
        best_count = count;
        best = *plane;
        needed = required_iterations(static_cast<double>(count) / m,
                                     cfg.ransac_sample, cfg.ransac_confidence, cap);
      }
    }
    if (best_count == 0) break;
    if (pass > 0 && static_cast<double>(best_count) <
                        cfg.ground_min_support * static_cast<double>(first_support))
      break;

    std::vector<Point> next_pts;
    std::vector<std::size_t> next_alive;
    next_pts.reserve(m - best_count);
    next_alive.reserve(m - best_count);
    Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
    for (std::size_t i = 0; i < m; ++i) {
      if (std::abs(best.distance(pts[i])) <= cfg.ransac_distance) {
        centroid += Eigen::Vector3d(pts[i].x, pts[i].y, pts[i].z);
      } else {
        next_pts.push_back(pts[i]);
        next_alive.push_back(alive[i]);
      }
    }
    if (pass == 0) {
      first_support = best_count;
      first_centroid = centroid / static_cast<double>(best_count);
    }
    result.planes.push_back(best);
    pts = std::move(next_pts);
    alive = std::move(next_alive);
  }

  result.remaining.frame_id = cloud.frame_id;
  result.remaining.points = std::move(pts);
  result.kept = std::move(alive);
  return result;
}

PointCloud ransac_ground_removal(const PointCloud& cloud,
                                 const DetectorConfig& cfg, std::uint64_t seed) {
  return ransac_ground_removal_detailed(cloud, cfg, seed).remaining;
}

namespace {

struct CellKey {
  std::int64_t x, y, z;
  bool operator==(const CellKey&) const = default;
};

struct CellHash {
  std::size_t operator()(const CellKey& k) const {
    std::uint64_t h = static_cast<std::uint64_t>(k.x) * 0x9e3779b97f4a7c15ULL;
    h ^= static_cast<std::uint64_t>(k.y) * 0xc2b2ae3d27d4eb4fULL + (h << 6) + (h >> 2);
    h ^= static_cast<std::uint64_t>(k.z) * 0x165667b19e3779f9ULL + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

class NeighborGrid {
 public:
  NeighborGrid(const PointCloud& cloud, double eps)
      : cloud_(cloud), eps_(eps), eps_sq_(eps * eps), cell_of_(cloud.size()) {
    index_.reserve(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      const auto [it, fresh] = index_.try_emplace(key(cloud.points[i]), members_.size());
      if (fresh) members_.emplace_back();
      members_[it->second].push_back(i);
      cell_of_[i] = it->second;
    }
    neighbors_.resize(members_.size());
    for (const auto& [k, c] : index_)
      for (std::int64_t dx = -1; dx <= 1; ++dx)
        for (std::int64_t dy = -1; dy <= 1; ++dy)
          for (std::int64_t dz = -1; dz <= 1; ++dz) {
            const auto it = index_.find({k.x + dx, k.y + dy, k.z + dz});
            if (it != index_.end()) neighbors_[c].push_back(it->second);
          }
    for (auto& n : neighbors_) std::sort(n.begin(), n.end());
  }

  std::size_t cells() const { return members_.size(); }
  std::size_t cell_of(std::size_t i) const { return cell_of_[i]; }
  const std::vector<std::size_t>& members(std::size_t cell) const { return members_[cell]; }

  // Calls fn(j) for every point within eps of point i, cell by cell. Cells
  // for which skip(cell) is true are not visited; fn returning false stops
  // the scan.
  template <typename Skip, typename Fn>
  void scan(std::size_t i, Skip&& skip, Fn&& fn) const {
    const Point& p = cloud_.points[i];
    for (std::size_t c : neighbors_[cell_of_[i]]) {
      if (skip(c)) continue;
      for (std::size_t j : members_[c]) {
        const Point& q = cloud_.points[j];
        const double ddx = p.x - q.x, ddy = p.y - q.y, ddz = p.z - q.z;
        if (ddx * ddx + ddy * ddy + ddz * ddz <= eps_sq_ && !fn(j)) return;
      }
    }
  }

 private:
  CellKey key(const Point& p) const {
    return {static_cast<std::int64_t>(std::floor(p.x / eps_)),
            static_cast<std::int64_t>(std::floor(p.y / eps_)),
            static_cast<std::int64_t>(std::floor(p.z / eps_))};
  }

  const PointCloud& cloud_;
  double eps_;
  double eps_sq_;
  std::unordered_map<CellKey, std::size_t, CellHash> index_;
  std::vector<std::vector<std::size_t>> members_;
  std::vector<std::vector<std::size_t>> neighbors_;
  std::vector<std::size_t> cell_of_;
};

}  // namespace

std::vector<Cluster> dbscan(const PointCloud& cloud, double eps, int min_pts) {
  if (!(eps > 0.0) || min_pts < 1)
    throw std::invalid_argument("dbscan needs eps > 0 and min_pts >= 1");
  const std::size_t n = cloud.size();
  if (n == 0) return {};

  const NeighborGrid grid(cloud, eps);
  auto never = [](std::size_t) { return false; };
  std::vector<char> core(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    int count = 0;
    grid.scan(i, never, [&](std::size_t) { return ++count < min_pts; });
    core[i] = count >= min_pts;
  }

  constexpr int kUnassigned = -1;
  std::vector<int> label(n, kUnassigned);
  // Unlabeled points left per cell; exhausted cells are skipped.
  std::vector<std::size_t> open(grid.cells());
  for (std::size_t c = 0; c < grid.cells(); ++c) open[c] = grid.members(c).size();
  auto exhausted = [&](std::size_t c) { return open[c] == 0; };
  auto assign = [&](std::size_t q, int cid) {
    label[q] = cid;
    --open[grid.cell_of(q)];
  };

  int next_cluster = 0;
  std::vector<std::size_t> frontier;
  for (std::size_t i = 0; i < n; ++i) {
    if (!core[i] || label[i] != kUnassigned) continue;
    const int cid = next_cluster++;
    assign(i, cid);
    frontier.push_back(i);
    while (!frontier.empty()) {
      const std::size_t p = frontier.back();
      frontier.pop_back();
      grid.scan(p, exhausted, [&](std::size_t q) {
        if (label[q] == kUnassigned) {
          assign(q, cid);
          if (core[q]) frontier.push_back(q);
        }
        return true;
      });
    }
  }

  std::vector<Cluster> clusters(next_cluster);
  for (std::size_t i = 0; i < n; ++i)
    if (label[i] != kUnassigned) clusters[label[i]].push_back(i);
  return clusters;
}

bool within_bounds(const Box3& box, const SizeBounds& b) {
  const double length = std::max(box.ex, box.ey);
  const double width = std::min(box.ex, box.ey);
  return length >= b.min_length && length <= b.max_length &&
         width >= b.min_width && width <= b.max_width &&
         box.ez >= b.min_height && box.ez <= b.max_height;
}

std::vector<Detection> size_filter(const std::vector<Cluster>& clusters,
                                   const PointCloud& cloud,
                                   const SizeBounds& bounds) {
  std::vector<Detection> out;
  for (const auto& cluster : clusters) {
    if (cluster.empty()) continue;
    double lo[3] = {std::numeric_limits<double>::infinity(),
                    std::numeric_limits<double>::infinity(),
                    std::numeric_limits<double>::infinity()};
    double hi[3] = {-lo[0], -lo[1], -lo[2]};
    for (std::size_t idx : cluster) {
      const Point& p = cloud.points.at(idx);
      const double v[3] = {p.x, p.y, p.z};
      for (int a = 0; a < 3; ++a) {
        lo[a] = std::min(lo[a], v[a]);
        hi[a] = std::max(hi[a], v[a]);
      }
    }
    Detection det;
    det.box = Box3{0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1]),
                   0.5 * (lo[2] + hi[2]), hi[0] - lo[0],
                   hi[1] - lo[1], hi[2] - lo[2], 0.0};
    if (!within_bounds(det.box, bounds)) continue;
    det.score = static_cast<int>(cluster.size());
    det.frame_id = cloud.frame_id;
    det.sources = {cloud.frame_id};
    out.push_back(std::move(det));
  }
  return out;
}

std::vector<Detection> detect(const PointCloud& cloud, const DetectorConfig& cfg,
                              std::uint64_t seed) {
  validate(cfg);
  const PointCloud above = ransac_ground_removal(cloud, cfg, seed);
  const auto clusters = dbscan(above, cfg.dbscan_eps, cfg.dbscan_min_pts);
  return size_filter(clusters, above, cfg.bounds);
}

}  // namespace coopsense::detection
