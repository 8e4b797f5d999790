#include "coopsense/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include <fmt/format.h>
#include <fmt/ostream.h>

namespace coopsense::metrics {

std::string_view to_string(View view) { return view == View::kBev ? "bev" : "3d"; }

Box3 to_box3(const OrientedBox& b) {
  return {b.cx, b.cy, b.cz, b.length, b.width, b.height, b.yaw};
}

namespace {

double overlap(double c1, double e1, double c2, double e2) {
  const double lo = std::max(c1 - 0.5 * e1, c2 - 0.5 * e2);
  const double hi = std::min(c1 + 0.5 * e1, c2 + 0.5 * e2);
  return std::max(0.0, hi - lo);
}

}  // namespace

double iou(const Box3& a_in, const Box3& b_in, View view) {
  const Box3 a = a_in.axis_aligned_envelope();
  const Box3 b = b_in.axis_aligned_envelope();
  if (!(a.ex > 0 && a.ey > 0 && a.ez > 0 && b.ex > 0 && b.ey > 0 && b.ez > 0))
    throw std::invalid_argument("iou needs boxes with positive extents");
  double inter = overlap(a.cx, a.ex, b.cx, b.ex) * overlap(a.cy, a.ey, b.cy, b.ey);
  double va = a.ex * a.ey, vb = b.ex * b.ey;
  if (view == View::k3D) {
    inter *= overlap(a.cz, a.ez, b.cz, b.ez);
    va *= a.ez;
    vb *= b.ez;
  }
  const double uni = va + vb - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

MatchResult match(std::span<const ScoredBox> preds, std::span<const Box3> gts,
                  double iou_threshold, View view) {
  MatchResult r;
  r.is_tp.assign(preds.size(), false);
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return preds[a].score > preds[b].score;
  });
  std::vector<bool> taken(gts.size(), false);
  for (std::size_t i : order) {
    int best = -1;
    double best_iou = iou_threshold;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[g]) continue;
      const double v = iou(preds[i].box, gts[g], view);
      if (v >= best_iou && (best < 0 || v > best_iou)) {
        best = static_cast<int>(g);
        best_iou = v;
      }
    }
    if (best >= 0) {
      taken[best] = true;
      r.is_tp[i] = true;
      ++r.tp;
    } else {
      ++r.fp;
    }
  }
  r.fn = static_cast<int>(gts.size()) - r.tp;
  return r;
}

std::vector<PRPoint> pr_curve(std::span<const FrameEval> frames, double iou_threshold,
                              View view) {
  std::vector<std::pair<double, bool>> scored;
  std::size_t n_gt = 0;
  for (const auto& f : frames) {
    const MatchResult m = match(f.preds, f.gts, iou_threshold, view);
    for (std::size_t i = 0; i < f.preds.size(); ++i)
      scored.emplace_back(f.preds[i].score, m.is_tp[i]);
    n_gt += f.gts.size();
  }
  std::vector<PRPoint> prs;
  if (n_gt == 0) return prs;
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  std::size_t tp = 0;
  for (std::size_t i = 0; i < scored.size(); ++i) {
    if (scored[i].second) ++tp;
    // One point per distinct score threshold.
    if (i + 1 < scored.size() && scored[i + 1].first == scored[i].first) continue;
    prs.push_back({static_cast<double>(tp) / static_cast<double>(n_gt),
                   static_cast<double>(tp) / static_cast<double>(i + 1)});
  }
  return prs;
}

double interpolated_precision(std::span<const PRPoint> prs, double r) {
  double best = 0.0;
  for (const auto& p : prs)
    if (p.recall >= r - 1e-12) best = std::max(best, p.precision);
  return best;
}

double ap40(std::span<const PRPoint> prs) {
  double sum = 0.0;
  double previous = 1.0;
  for (int k = 1; k <= kRecallLevels; ++k) {
    const double rho = interpolated_precision(prs, static_cast<double>(k) / kRecallLevels);
    if (rho > previous + 1e-15)
      throw std::logic_error("interpolated precision must not increase with recall");
    previous = rho;
    sum += rho;
  }
  return 100.0 * sum / kRecallLevels;
}

std::optional<double> ap40(std::span<const FrameEval> frames, double iou_threshold,
                           View view) {
  std::size_t n_gt = 0;
  for (const auto& f : frames) n_gt += f.gts.size();
  if (n_gt == 0) return std::nullopt;
  return ap40(pr_curve(frames, iou_threshold, view));
}

ApTable ap_table(std::span<const FrameEval> frames) {
  ApTable t;
  for (std::size_t i = 0; i < kIouThresholds.size(); ++i) {
    t.values[i][0] = ap40(frames, kIouThresholds[i], View::kBev);
    t.values[i][1] = ap40(frames, kIouThresholds[i], View::k3D);
  }
  return t;
}

bool in_control_region(const traffic::Path& path, double s, double upstream,
                       double downstream) {
  if (s <= path.bar_s) return path.bar_s - s <= upstream;
  if (s < path.exit_s) return true;
  return s - path.exit_s <= downstream;
}

std::optional<double> e_cvpr(std::span<const fusion::FusedVehicleObservation> observations,
                             std::span<const traffic::Vec2> truth, double radius) {
  if (truth.empty()) return std::nullopt;
  std::size_t found = 0;
  for (const auto& t : truth)
    for (const auto& o : observations)
      if (std::hypot(o.x - t.x, o.y - t.y) <= radius) {
        ++found;
        break;
      }
  return static_cast<double>(found) / static_cast<double>(truth.size());
}

std::optional<double> avg_delay(std::span<const TripRecord> trips, double warmup) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& t : trips) {
    if (t.spawn_time < warmup) continue;
    sum += (t.exit_time - t.spawn_time) - t.free_flow_time;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

std::optional<MeanStd> mean_std(std::span<const double> values) {
  if (values.empty()) return std::nullopt;
  MeanStd m;
  m.n = values.size();
  m.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(m.n);
  if (m.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - m.mean) * (v - m.mean);
    m.std = std::sqrt(ss / static_cast<double>(m.n - 1));
  }
  return m;
}

std::string format_mean_std(const MeanStd& m, int decimals) {
  return fmt::format("{:.{}f} ({:.{}f})", m.mean, decimals, m.std, decimals);
}

std::vector<int> histogram(std::span<const double> values, int bins) {
  if (bins < 1) throw std::invalid_argument("histogram needs at least one bin");
  std::vector<int> counts(bins, 0);
  for (double v : values) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("histogram value outside [0, 1]");
    const int b = std::min(bins - 1, static_cast<int>(v * bins));
    ++counts[b];
  }
  return counts;
}

void write_histogram(std::ostream& out, std::span<const double> values, int bins) {
  const auto counts = histogram(values, bins);
  fmt::print(out, "# bin_lo bin_hi count\n");
  for (int b = 0; b < bins; ++b)
    fmt::print(out, "{:.3f} {:.3f} {}\n", static_cast<double>(b) / bins,
               static_cast<double>(b + 1) / bins, counts[b]);
}

std::vector<std::string> report_columns() {
  std::vector<std::string> cols{"run", "mode", "cav_rate", "cv_rate", "seed"};
  for (const char* prefix : {"", "raw_"})
    for (const char* name : {"ap40_bev_01", "ap40_3d_01", "ap40_bev_001", "ap40_3d_001"})
      cols.push_back(std::string(prefix) + name);
  for (const char* name : {"ecvpr_mean", "ecvpr_std", "avg_delay_s", "n_exited"})
    cols.emplace_back(name);
  return cols;
}

void write_report_header(std::ostream& out) {
  const auto cols = report_columns();
  fmt::print(out, "{}\n", fmt::join(cols, "\t"));
}

namespace {

std::string opt(const std::optional<double>& v, int decimals = 4) {
  return v ? fmt::format("{:.{}f}", *v, decimals) : std::string("NA");
}

}  // namespace

void write_report_row(std::ostream& out, const ReportRow& row) {
  std::vector<std::string> f{row.run, row.mode, fmt::format("{:.4f}", row.cav_rate),
                             fmt::format("{:.4f}", row.cv_rate), fmt::format("{}", row.seed)};
  for (const ApTable* t : {&row.fused, &row.raw})
    for (std::size_t th = 0; th < 2; ++th)
      for (std::size_t v = 0; v < 2; ++v) f.push_back(opt(t->values[th][v]));
  f.push_back(row.ecvpr ? fmt::format("{:.6f}", row.ecvpr->mean) : "NA");
  f.push_back(row.ecvpr ? fmt::format("{:.6f}", row.ecvpr->std) : "NA");
  f.push_back(opt(row.avg_delay));
  f.push_back(fmt::format("{}", row.n_exited));
  fmt::print(out, "{}\n", fmt::join(f, "\t"));
}

}  // namespace coopsense::metrics
