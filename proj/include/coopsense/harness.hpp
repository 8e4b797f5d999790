#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "coopsense/control.hpp"
#include "coopsense/detection.hpp"
#include "coopsense/fusion.hpp"
#include "coopsense/geometry.hpp"
#include "coopsense/lidar_sim.hpp"
#include "coopsense/metrics.hpp"
#include "coopsense/network.hpp"
#include "coopsense/traffic_sim.hpp"

namespace coopsense::harness {

enum class Mode { kCoop, kCv, kOracle };

std::string_view to_string(Mode mode);
Mode parse_mode(std::string_view text);

/// Raised for configurations that cannot be simulated.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct InfraSensor {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double yaw = 0.0;
  double height = 3.0;
};

enum class LogDetail { kFull, kSummary };

struct ScenarioConfig {
  std::string name = "run";
  Mode mode = Mode::kCoop;
  double duration = 900.0;
  double warmup = 120.0;
  double dt = 0.1;
  std::uint64_t seed = 1;

  traffic::NetworkParams network;
  traffic::DemandConfig demand;
  traffic::DriverParams driver;

  /// Unset means the mode default: one sensor at the intersection center
  /// for COOP, none otherwise.
  std::optional<std::vector<InfraSensor>> infra_sensors;
  double cav_lidar_height = 2.4;
  lidar::LidarSpec lidar;  // beam pattern shared by every sensor

  detection::DetectorConfig detector;
  /// Detect on the merged cloud (default) or on each sensor's own cloud.
  bool detect_per_sensor = false;
  fusion::FusionConfig fusion;
  control::TimingConfig timing;
  double upstream_window = 200.0;
  double downstream_window = 100.0;
  double decision_period = 1.0;
  double stale_after = 1.0;

  double cv_noise_sigma = 1.5;
  /// Seconds between perception frames; a multiple of dt.
  double perception_period = 0.1;
  int clutter_count = 40;
  /// Vehicles with fewer LiDAR returns than this (all sensors together) are
  /// left out of detection scoring.
  int eval_min_points = 10;
  std::uint64_t clutter_seed = 7;
  LogDetail log_detail = LogDetail::kFull;

  std::vector<InfraSensor> effective_infra() const;
};

/// Throws ConfigError describing the first problem found.
void validate(const ScenarioConfig& cfg);

/// Flat `key = value` text, '#' starts a comment. Unknown keys, malformed
/// values and invalid combinations raise ConfigError.
ScenarioConfig parse_config(std::istream& in);
ScenarioConfig load_config(const std::filesystem::path& path);
void set_option(ScenarioConfig& cfg, const std::string& key, const std::string& value);

/// Every key with its current value, in a fixed order. Parsing the result
/// gives back an equivalent configuration.
std::vector<std::pair<std::string, std::string>> config_entries(const ScenarioConfig& cfg);
std::string format_config(const ScenarioConfig& cfg);

/// Static off-road objects around the intersection, sized like small
/// vehicles so the clustering detector picks them up.
std::vector<OrientedBox> make_clutter(const traffic::RoadNetwork& network, int count,
                                      std::uint64_t seed);

/// Region used for detection scoring: every arm out to 200 m past its stop
/// bar and 30 m to either side of the road axis.
bool in_eval_window(const traffic::RoadNetwork& network, double x, double y,
                    double reach = 200.0, double half_width = 30.0);

struct FrameOutput {
  std::vector<detection::Detection> raw;  // global frame, before fusion
  std::vector<detection::Detection> fused;
  std::vector<fusion::FusedVehicleObservation> observations;
  /// LiDAR returns per vehicle id, over every sensor.
  std::map<std::int64_t, int> returns;
};

/// One perception frame in COOP mode: cast every sensor, merge into the
/// first infrastructure sensor's frame, detect, move to the global frame
/// and fuse with CAV self-reports. With detect_per_sensor each sensor's
/// cloud is detected on its own instead of merging.
FrameOutput perceive_coop(const ScenarioConfig& cfg, const traffic::RoadNetwork& network,
                          const traffic::World& world,
                          const std::vector<OrientedBox>& clutter, std::uint64_t frame_seed);

struct EcvprSample {
  std::int64_t tick = 0;
  double time = 0.0;
  double value = 0.0;
};

struct RunResult {
  metrics::ReportRow row;
  std::vector<EcvprSample> ecvpr;
  /// Signal state after every controller decision, starting with the
  /// initial state.
  std::vector<SignalState> decisions;
  std::vector<metrics::TripRecord> trips;
};

/// Closed-loop run. When `log` is given the scenario log is written to it.
RunResult simulate(const ScenarioConfig& cfg, std::ostream* log = nullptr);

struct RunFiles {
  std::filesystem::path log;
  std::filesystem::path metrics;
  std::filesystem::path ecvpr;
  std::filesystem::path histogram;
};

RunFiles output_files(const std::filesystem::path& dir, const std::string& name);

/// simulate() plus the log, metrics report and E-CVPR files in `dir`.
RunResult run(const ScenarioConfig& cfg, const std::filesystem::path& dir);

/// Recomputes the metrics report from a scenario log.
RunResult evaluate_log(std::istream& log);

void write_ecvpr(std::ostream& out, const std::vector<EcvprSample>& samples);

/// "key=v1,v2;key2=v3" -> ordered parameter grid. Empty text gives no axes.
std::vector<std::pair<std::string, std::vector<std::string>>> parse_grid(
    const std::string& text);

struct SweepCell {
  std::map<std::string, std::string> params;
  std::vector<RunResult> runs;  // one per seed
};

/// Cross product of the grid with `seeds` seeds per cell (base seed,
/// base seed + 1, ...). Cells run on up to `workers` threads; results do not
/// depend on the worker count.
std::vector<SweepCell> sweep(const ScenarioConfig& base, const std::string& grid,
                             int seeds, int workers = 0);

/// Per-run rows followed by a per-cell mean (std) table.
void write_sweep_report(std::ostream& out, const std::vector<SweepCell>& cells);

}  // namespace coopsense::harness
