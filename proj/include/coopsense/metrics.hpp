#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "coopsense/detection.hpp"
#include "coopsense/fusion.hpp"
#include "coopsense/network.hpp"
#include "coopsense/scene.hpp"

namespace coopsense::metrics {

using detection::Box3;

enum class View { kBev, k3D };

std::string_view to_string(View view);

/// Ground-truth box in the same representation as detections.
Box3 to_box3(const OrientedBox& box);

/// Intersection over union of the axis-aligned envelopes of a and b.
/// Throws std::invalid_argument if either box has a non-positive extent.
double iou(const Box3& a, const Box3& b, View view);

struct ScoredBox {
  Box3 box;
  double score = 0.0;
};

struct MatchResult {
  int tp = 0;
  int fp = 0;
  int fn = 0;
  /// Per prediction, in input order: true when it matched a ground truth.
  std::vector<bool> is_tp;
};

/// Greedy matching: predictions by descending score (input order breaks
/// ties) each take the unmatched ground truth with the highest IoU at or
/// above the threshold.
MatchResult match(std::span<const ScoredBox> preds, std::span<const Box3> gts,
                  double iou_threshold, View view);

struct PRPoint {
  double recall = 0.0;
  double precision = 0.0;
};

/// Precision/recall after each distinct score threshold, sweeping scores
/// from high to low over every frame's predictions.
struct FrameEval {
  std::vector<ScoredBox> preds;
  std::vector<Box3> gts;
};

std::vector<PRPoint> pr_curve(std::span<const FrameEval> frames, double iou_threshold,
                              View view);

inline constexpr int kRecallLevels = 40;

/// Max precision over points with recall >= r, or 0 if there are none.
double interpolated_precision(std::span<const PRPoint> prs, double r);

/// Mean interpolated precision over recall levels 1/40 .. 40/40, times 100.
double ap40(std::span<const PRPoint> prs);

/// AP40 over a set of frames; nullopt when there is no ground truth at all.
std::optional<double> ap40(std::span<const FrameEval> frames, double iou_threshold,
                           View view);

struct ApTable {
  // Indexed [threshold][view]: thresholds 0.1, 0.01; views BEV, 3D.
  std::array<std::array<std::optional<double>, 2>, 2> values{};
};

inline constexpr std::array<double, 2> kIouThresholds{0.1, 0.01};

ApTable ap_table(std::span<const FrameEval> frames);

/// Whether a point belongs to the control region: 0-200 m upstream of a
/// stop bar, the intersection box, or 0-100 m past the box on an outgoing
/// lane. Positions are expressed along a vehicle path.
bool in_control_region(const traffic::Path& path, double s, double upstream = 200.0,
                       double downstream = 100.0);

inline constexpr double kEcvprMatchRadius = 2.5;

/// Share of ground-truth vehicles with an observation within `radius`
/// (planar). nullopt when there is no vehicle in the region.
std::optional<double> e_cvpr(std::span<const fusion::FusedVehicleObservation> observations,
                             std::span<const traffic::Vec2> truth,
                             double radius = kEcvprMatchRadius);

struct TripRecord {
  double spawn_time = 0.0;
  double exit_time = 0.0;
  double free_flow_time = 0.0;
};

/// Mean of (travel time - free-flow time) over trips that started at or
/// after `warmup`; nullopt when no trip qualifies.
std::optional<double> avg_delay(std::span<const TripRecord> trips, double warmup = 0.0);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for fewer than 2 values
  std::size_t n = 0;
};

std::optional<MeanStd> mean_std(std::span<const double> values);

/// "mean (std)" with the given number of decimals.
std::string format_mean_std(const MeanStd& m, int decimals = 2);

/// Equal-width bins over [0, 1]; the value 1 falls in the last bin.
std::vector<int> histogram(std::span<const double> values, int bins = 20);

void write_histogram(std::ostream& out, std::span<const double> values, int bins = 20);

/// One row of the tabular metrics report.
struct ReportRow {
  std::string run;
  std::string mode;
  double cav_rate = 0.0;
  double cv_rate = 0.0;
  std::uint64_t seed = 0;
  ApTable fused;
  ApTable raw;
  std::optional<MeanStd> ecvpr;
  std::optional<double> avg_delay;
  std::size_t n_exited = 0;  // trips counted in avg_delay
};

std::vector<std::string> report_columns();
void write_report_header(std::ostream& out);
void write_report_row(std::ostream& out, const ReportRow& row);

}  // namespace coopsense::metrics
