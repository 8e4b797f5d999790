#include "coopsense/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <functional>
#include <mutex>
#include <numbers>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "coopsense/rng.hpp"

namespace coopsense::harness {

std::string_view to_string(Mode mode) {
  switch (mode) {
    case Mode::kCoop: return "COOP";
    case Mode::kCv: return "CV";
    case Mode::kOracle: return "ORACLE";
  }
  return "COOP";
}

Mode parse_mode(std::string_view text) {
  if (text == "COOP") return Mode::kCoop;
  if (text == "CV") return Mode::kCv;
  if (text == "ORACLE") return Mode::kOracle;
  throw ConfigError(fmt::format("unknown mode '{}' (COOP, CV or ORACLE)", text));
}

std::vector<InfraSensor> ScenarioConfig::effective_infra() const {
  if (infra_sensors) return *infra_sensors;
  if (mode == Mode::kCoop) return {InfraSensor{}};
  return {};
}

namespace {

bool multiple_of(double value, double step) {
  const double k = value / step;
  return std::abs(k - std::round(k)) < 1e-6 && std::round(k) >= 1.0;
}

template <class F>
void rethrow_as_config(F&& f) {
  try {
    f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace

void validate(const ScenarioConfig& cfg) {
  if (cfg.name.empty() || cfg.name.find_first_of(" \t/\\") != std::string::npos)
    throw ConfigError("name must be nonempty without spaces or slashes");
  if (!(cfg.duration > 0.0)) throw ConfigError("duration must be positive");
  if (!(cfg.warmup >= 0.0)) throw ConfigError("warmup must be >= 0");
  if (!(cfg.dt > 0.0)) throw ConfigError("dt must be positive");
  if (!multiple_of(cfg.perception_period, cfg.dt))
    throw ConfigError("perception_period must be a positive multiple of dt");
  if (!multiple_of(cfg.decision_period, cfg.dt))
    throw ConfigError("decision_period must be a positive multiple of dt");
  for (double t : {cfg.timing.min_green, cfg.timing.yellow, cfg.timing.all_red})
    if (!multiple_of(t, cfg.decision_period))
      throw ConfigError("signal timings must be multiples of decision_period");
  if (!(cfg.stale_after >= 0.0)) throw ConfigError("stale_after must be >= 0");
  if (!(cfg.cv_noise_sigma >= 0.0)) throw ConfigError("cv_noise_sigma must be >= 0");
  if (cfg.clutter_count < 0) throw ConfigError("clutter_count must be >= 0");
  if (cfg.eval_min_points < 0) throw ConfigError("eval_min_points must be >= 0");
  if (!(cfg.cav_lidar_height > 0.0)) throw ConfigError("cav_lidar_height must be positive");
  if (!(cfg.upstream_window > 0.0) || cfg.upstream_window > cfg.network.upstream_length)
    throw ConfigError("upstream_window must lie in (0, upstream_length]");
  if (!(cfg.downstream_window > 0.0) ||
      cfg.downstream_window > cfg.network.downstream_length)
    throw ConfigError("downstream_window must lie in (0, downstream_length]");
  rethrow_as_config([&] {
    traffic::validate(cfg.network);
    traffic::validate(cfg.demand);
    traffic::validate(cfg.driver);
    detection::validate(cfg.detector);
    lidar::validate(cfg.lidar);
    control::validate(cfg.timing);
  });
  if (!(cfg.fusion.dedupe_threshold >= 0.0))
    throw ConfigError("dedupe_threshold must be >= 0");
  const auto infra = cfg.effective_infra();
  if (cfg.mode == Mode::kCv && !infra.empty())
    throw ConfigError("CV mode takes no infrastructure sensors");
  if (cfg.mode == Mode::kCoop && infra.empty())
    throw ConfigError("COOP mode needs at least one infrastructure sensor");
  for (const auto& s : infra)
    if (!(s.height > 0.0) || !std::isfinite(s.x) || !std::isfinite(s.y) ||
        !std::isfinite(s.z) || !std::isfinite(s.yaw))
      throw ConfigError("infrastructure sensor needs finite pose and positive height");
}

namespace {

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError(fmt::format("{}: '{}' is not a number", key, v));
  }
}

long long to_integer(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long i = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw ConfigError(fmt::format("{}: '{}' is not an integer", key, v));
  }
}

std::uint64_t to_unsigned(const std::string& key, const std::string& v) {
  if (v.empty() || v[0] == '-')
    throw ConfigError(fmt::format("{}: '{}' is not a non-negative integer", key, v));
  try {
    std::size_t used = 0;
    const unsigned long long u = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return u;
  } catch (const std::exception&) {
    throw ConfigError(fmt::format("{}: '{}' is not a non-negative integer", key, v));
  }
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) parts.push_back(trim(cur));
  if (!s.empty() && s.back() == sep) parts.emplace_back();
  return parts;
}

std::string num(double v) { return fmt::format("{}", v); }

std::vector<InfraSensor> parse_infra(const std::string& v) {
  std::vector<InfraSensor> out;
  if (v == "none") return out;
  for (const auto& item : split(v, ';')) {
    const auto f = split(item, ',');
    if (f.size() != 5)
      throw ConfigError(fmt::format("infra_sensors: '{}' needs x,y,z,yaw,height", item));
    out.push_back({to_double("infra_sensors", f[0]), to_double("infra_sensors", f[1]),
                   to_double("infra_sensors", f[2]), to_double("infra_sensors", f[3]),
                   to_double("infra_sensors", f[4])});
  }
  return out;
}

std::string format_infra(const std::optional<std::vector<InfraSensor>>& infra) {
  if (!infra) return "default";
  if (infra->empty()) return "none";
  std::vector<std::string> items;
  for (const auto& s : *infra)
    items.push_back(fmt::format("{},{},{},{},{}", s.x, s.y, s.z, s.yaw, s.height));
  return fmt::format("{}", fmt::join(items, ";"));
}

struct Option {
  const char* key;
  std::function<std::string(const ScenarioConfig&)> get;
  std::function<void(ScenarioConfig&, const std::string&)> set;
};

#define COOP_DOUBLE(KEY, FIELD)                                      \
  Option {                                                           \
    KEY, [](const ScenarioConfig& c) { return num(c.FIELD); },       \
        [](ScenarioConfig& c, const std::string& v) { c.FIELD = to_double(KEY, v); } \
  }
#define COOP_INT(KEY, FIELD)                                                        \
  Option {                                                                          \
    KEY, [](const ScenarioConfig& c) { return fmt::format("{}", c.FIELD); },        \
        [](ScenarioConfig& c, const std::string& v) {                               \
          c.FIELD = static_cast<decltype(c.FIELD)>(to_integer(KEY, v));             \
        }                                                                           \
  }

const std::vector<Option>& options() {
  static const std::vector<Option> table = {
      {"name", [](const ScenarioConfig& c) { return c.name; },
       [](ScenarioConfig& c, const std::string& v) { c.name = v; }},
      {"mode", [](const ScenarioConfig& c) { return std::string(to_string(c.mode)); },
       [](ScenarioConfig& c, const std::string& v) { c.mode = parse_mode(v); }},
      COOP_DOUBLE("duration", duration),
      COOP_DOUBLE("warmup", warmup),
      COOP_DOUBLE("dt", dt),
      {"seed", [](const ScenarioConfig& c) { return fmt::format("{}", c.seed); },
       [](ScenarioConfig& c, const std::string& v) { c.seed = to_unsigned("seed", v); }},
      COOP_DOUBLE("lane_width", network.lane_width),
      COOP_INT("main_lanes", network.main_lanes),
      COOP_DOUBLE("upstream_length", network.upstream_length),
      COOP_DOUBLE("downstream_length", network.downstream_length),
      COOP_DOUBLE("shoulder", network.shoulder),
      COOP_DOUBLE("main_turn_ratio", network.main_turn_ratio),
      COOP_DOUBLE("side_left_ratio", network.side_left_ratio),
      COOP_DOUBLE("main_volume", demand.main_volume),
      COOP_DOUBLE("side_volume", demand.side_volume),
      COOP_DOUBLE("cav_rate", demand.cav_rate),
      COOP_DOUBLE("cv_rate", demand.cv_rate),
      COOP_DOUBLE("a_max", driver.a_max),
      COOP_DOUBLE("b_max", driver.b_max),
      COOP_DOUBLE("min_gap", driver.min_gap),
      COOP_DOUBLE("headway", driver.headway),
      COOP_DOUBLE("v_free", driver.v_free),
      {"infra_sensors", [](const ScenarioConfig& c) { return format_infra(c.infra_sensors); },
       [](ScenarioConfig& c, const std::string& v) {
         if (v == "default")
           c.infra_sensors.reset();
         else
           c.infra_sensors = parse_infra(v);
       }},
      COOP_DOUBLE("cav_lidar_height", cav_lidar_height),
      COOP_INT("lidar_channels", lidar.channels),
      COOP_DOUBLE("lidar_fov_min", lidar.fov_min_deg),
      COOP_DOUBLE("lidar_fov_max", lidar.fov_max_deg),
      COOP_DOUBLE("lidar_azimuth_step", lidar.azimuth_step_deg),
      COOP_DOUBLE("lidar_range", lidar.max_range),
      COOP_DOUBLE("lidar_range_noise", lidar.range_noise_sigma),
      COOP_DOUBLE("ransac_distance", detector.ransac_distance),
      COOP_INT("ransac_sample", detector.ransac_sample),
      COOP_INT("ransac_iters", detector.ransac_iters),
      COOP_INT("ransac_passes", detector.ransac_passes),
      COOP_DOUBLE("ransac_confidence", detector.ransac_confidence),
      COOP_DOUBLE("ground_max_tilt_deg", detector.ground_max_tilt_deg),
      COOP_DOUBLE("ground_max_offset", detector.ground_max_offset),
      COOP_DOUBLE("ground_min_support", detector.ground_min_support),
      COOP_DOUBLE("dbscan_eps", detector.dbscan_eps),
      COOP_INT("dbscan_min_pts", detector.dbscan_min_pts),
      COOP_DOUBLE("min_length", detector.bounds.min_length),
      COOP_DOUBLE("max_length", detector.bounds.max_length),
      COOP_DOUBLE("min_width", detector.bounds.min_width),
      COOP_DOUBLE("max_width", detector.bounds.max_width),
      COOP_DOUBLE("min_height", detector.bounds.min_height),
      COOP_DOUBLE("max_height", detector.bounds.max_height),
      {"detection_input",
       [](const ScenarioConfig& c) {
         return std::string(c.detect_per_sensor ? "per_sensor" : "merged");
       },
       [](ScenarioConfig& c, const std::string& v) {
         if (v == "merged")
           c.detect_per_sensor = false;
         else if (v == "per_sensor")
           c.detect_per_sensor = true;
         else
           throw ConfigError("detection_input must be merged or per_sensor");
       }},
      COOP_DOUBLE("dedupe_threshold", fusion.dedupe_threshold),
      COOP_DOUBLE("min_green", timing.min_green),
      COOP_DOUBLE("yellow", timing.yellow),
      COOP_DOUBLE("all_red", timing.all_red),
      COOP_DOUBLE("upstream_window", upstream_window),
      COOP_DOUBLE("downstream_window", downstream_window),
      COOP_DOUBLE("decision_period", decision_period),
      COOP_DOUBLE("stale_after", stale_after),
      COOP_DOUBLE("cv_noise_sigma", cv_noise_sigma),
      COOP_DOUBLE("perception_period", perception_period),
      COOP_INT("clutter_count", clutter_count),
      COOP_INT("eval_min_points", eval_min_points),
      {"clutter_seed", [](const ScenarioConfig& c) { return fmt::format("{}", c.clutter_seed); },
       [](ScenarioConfig& c, const std::string& v) {
         c.clutter_seed = to_unsigned("clutter_seed", v);
       }},
      {"log_detail",
       [](const ScenarioConfig& c) {
         return std::string(c.log_detail == LogDetail::kFull ? "full" : "summary");
       },
       [](ScenarioConfig& c, const std::string& v) {
         if (v == "full")
           c.log_detail = LogDetail::kFull;
         else if (v == "summary")
           c.log_detail = LogDetail::kSummary;
         else
           throw ConfigError("log_detail must be full or summary");
       }},
  };
  return table;
}

#undef COOP_DOUBLE
#undef COOP_INT

}  // namespace

void set_option(ScenarioConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& o : options())
    if (key == o.key) {
      o.set(cfg, value);
      return;
    }
  throw ConfigError(fmt::format("unknown key '{}'", key));
}

ScenarioConfig parse_config(std::istream& in) {
  ScenarioConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(fmt::format("line {}: expected key = value", line_no));
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      set_option(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(fmt::format("line {}: {}", line_no, e.what()));
    }
  }
  validate(cfg);
  return cfg;
}

ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config '{}'", path.string()));
  return parse_config(in);
}

std::vector<std::pair<std::string, std::string>> config_entries(const ScenarioConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& o : options()) out.emplace_back(o.key, o.get(cfg));
  return out;
}

std::string format_config(const ScenarioConfig& cfg) {
  std::string s;
  for (const auto& [k, v] : config_entries(cfg)) s += fmt::format("{} = {}\n", k, v);
  return s;
}

std::vector<OrientedBox> make_clutter(const traffic::RoadNetwork& network, int count,
                                      std::uint64_t seed) {
  Rng rng(seed, 0);
  std::vector<OrientedBox> out;
  // Corner where the side street meets the main street's south edge.
  const traffic::Vec2 corner = network.geofence_polygon.at(1);
  const double main_edge = std::abs(corner.y), side_edge = std::abs(corner.x);
  const double reach = 120.0;
  while (static_cast<int>(out.size()) < count) {
    OrientedBox b;
    double margin = 0.0;
    const bool hedge = rng.uniform() < 0.5;
    if (hedge) {
      // Hedges and low walls run parallel to the curb, close to it.
      b.length = rng.uniform(2.5, 5.5);
      b.width = rng.uniform(0.6, 1.2);
      b.height = rng.uniform(0.8, 1.8);
      b.yaw = rng.uniform(-0.1, 0.1);
      margin = rng.uniform(0.5, 6.0);
    } else {
      b.length = rng.uniform(1.0, 4.0);
      b.width = rng.uniform(0.6, 2.0);
      b.height = rng.uniform(0.6, 1.9);
      b.yaw = rng.uniform(-std::numbers::pi, std::numbers::pi);
      margin = rng.uniform(0.0, 20.0);
    }
    const double clearance = 0.5 * std::hypot(b.length, b.width) + 0.5;
    margin += clearance;
    // Street furniture thins out away from the intersection.
    const double u = rng.uniform(-1.0, 1.0);
    const double along = reach * u * std::abs(u);
    const std::uint64_t side = rng.index(4);
    if (side < 2) {  // north or south of the main street
      b.cx = along;
      b.cy = side == 0 ? main_edge + margin : -(main_edge + margin);
      if (side == 1 && std::abs(b.cx) < side_edge + clearance) continue;
    } else {  // west or east of the side street
      b.cx = side == 2 ? -(side_edge + margin) : side_edge + margin;
      b.cy = -(main_edge + clearance) - std::abs(along);
      if (hedge) b.yaw += 0.5 * std::numbers::pi;
    }
    b.cz = 0.5 * b.height;
    b.id = -static_cast<std::int64_t>(out.size()) - 1;
    b.is_vehicle = false;
    out.push_back(b);
  }
  return out;
}

bool in_eval_window(const traffic::RoadNetwork& network, double x, double y, double reach,
                    double half_width) {
  const auto c = network.intersection_center;
  for (const auto& a : network.approaches) {
    const double bx = a.stop_bar.x - c.x, by = a.stop_bar.y - c.y;
    const double bar = std::hypot(bx, by);
    const double ux = bx / bar, uy = by / bar;
    const double px = x - c.x, py = y - c.y;
    const double along = px * ux + py * uy;
    const double across = std::abs(px * uy - py * ux);
    if (along >= 0.0 && along <= bar + reach && across <= half_width) return true;
  }
  return false;
}

namespace {

std::string cav_sensor_id(std::int64_t id) { return fmt::format("cav_{}", id); }

std::vector<fusion::FusedVehicleObservation> observe_truth(
    const traffic::World& world, const traffic::RoadNetwork& network, double noise_sigma,
    Rng* noise, bool only_cv) {
  std::vector<detection::Detection> reports;
  for (const auto& v : world.vehicles) {
    if (only_cv && v.kind != traffic::VehicleKind::kCV) continue;
    const OrientedBox box = traffic::vehicle_box(v, network);
    detection::Detection d;
    d.box = metrics::to_box3(box);
    if (noise && noise_sigma > 0.0) {
      d.box.cx += noise->normal(0.0, noise_sigma);
      d.box.cy += noise->normal(0.0, noise_sigma);
    }
    d.sources = {cav_sensor_id(v.id)};
    reports.push_back(std::move(d));
  }
  return fusion::lane_map(reports, network);
}

}  // namespace

FrameOutput perceive_coop(const ScenarioConfig& cfg, const traffic::RoadNetwork& network,
                          const traffic::World& world,
                          const std::vector<OrientedBox>& clutter, std::uint64_t frame_seed) {
  SceneSnapshot scene = traffic::ground_truth_boxes(world, network);
  scene.boxes.insert(scene.boxes.end(), clutter.begin(), clutter.end());

  std::vector<lidar::LidarSpec> specs;
  const auto infra = cfg.effective_infra();
  for (std::size_t i = 0; i < infra.size(); ++i) {
    lidar::LidarSpec s = cfg.lidar;
    s.sensor_id = fmt::format("infra_{}", i);
    s.pose = geometry::make_pose(infra[i].x, infra[i].y, infra[i].z, infra[i].yaw);
    s.mount_height = infra[i].height;
    specs.push_back(std::move(s));
  }
  std::vector<detection::Detection> self_reports;
  for (const auto& v : world.vehicles) {
    if (v.kind != traffic::VehicleKind::kCAV) continue;
    const OrientedBox box = traffic::vehicle_box(v, network, scene.ground_z);
    lidar::LidarSpec s = cfg.lidar;
    s.sensor_id = cav_sensor_id(v.id);
    s.pose = geometry::make_pose(box.cx, box.cy, scene.ground_z, box.yaw);
    s.mount_height = cfg.cav_lidar_height;
    s.self_id = v.id;
    specs.push_back(std::move(s));

    detection::Detection self;
    self.box = metrics::to_box3(box);
    self.score = 0;
    self.sources = {cav_sensor_id(v.id)};
    self.frame_id = "global";
    self_reports.push_back(std::move(self));
  }

  FrameOutput out;
  std::vector<geometry::SensorFrame> frames;
  frames.reserve(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    specs[i].noise_seed = splitmix64(frame_seed ^ (0x9E37u + i));
    auto labeled = lidar::cast_frame_labeled(specs[i], scene);
    for (int hit : labeled.hit_box)
      if (hit >= 0 && scene.boxes[hit].is_vehicle) ++out.returns[scene.boxes[hit].id];
    frames.push_back(std::move(labeled.frame));
  }
  if (cfg.detect_per_sensor) {
    for (std::size_t i = 0; i < frames.size(); ++i) {
      const auto local = detection::detect(frames[i].cloud, cfg.detector,
                                           splitmix64(frame_seed + i));
      const auto global = fusion::to_global(local, frames[i].pose, frames[i].mount_height);
      out.raw.insert(out.raw.end(), global.begin(), global.end());
    }
  } else {
    const geometry::PointCloud merged = geometry::merge_clouds(
        frames.front(), std::span<const geometry::SensorFrame>(frames).subspan(1));
    const auto local = detection::detect(merged, cfg.detector, frame_seed);
    out.raw = fusion::to_global(local, frames.front().pose, frames.front().mount_height);
    std::vector<std::string> contributors;
    for (const auto& f : frames) contributors.push_back(f.sensor_id);
    for (auto& d : out.raw) d.sources = contributors;
  }

  const auto perceived = fusion::fuse(out.raw, network, cfg.fusion);
  out.fused = perceived.deduped;

  std::vector<detection::Detection> feed = out.raw;
  feed.insert(feed.end(), self_reports.begin(), self_reports.end());
  out.observations = fusion::fuse(feed, network, cfg.fusion).observations;
  return out;
}

namespace {

std::vector<traffic::Vec2> region_truth(const traffic::World& world,
                                        const traffic::RoadNetwork& network, double up,
                                        double down) {
  std::vector<traffic::Vec2> truth;
  for (const auto& v : world.vehicles) {
    const double center = v.s - 0.5 * v.length;
    if (!metrics::in_control_region(network.paths[v.path], center, up, down)) continue;
    const auto at = network.locate(v.path, center);
    truth.push_back(at.position);
  }
  return truth;
}

std::vector<metrics::ScoredBox> windowed(const traffic::RoadNetwork& network,
                                         const std::vector<detection::Detection>& dets) {
  std::vector<metrics::ScoredBox> out;
  for (const auto& d : dets)
    if (in_eval_window(network, d.box.cx, d.box.cy))
      out.push_back({d.box, static_cast<double>(d.score)});
  return out;
}

std::vector<metrics::Box3> windowed_truth(const traffic::RoadNetwork& network,
                                          const SceneSnapshot& scene,
                                          const std::map<std::int64_t, int>& returns,
                                          int min_points) {
  std::vector<metrics::Box3> out;
  for (const auto& b : scene.boxes) {
    if (!b.is_vehicle || !in_eval_window(network, b.cx, b.cy)) continue;
    const auto it = returns.find(b.id);
    if ((it == returns.end() ? 0 : it->second) < min_points) continue;
    out.push_back(metrics::to_box3(b));
  }
  return out;
}

void log_box(std::ostream& out, const char* stage, const detection::Detection& d) {
  fmt::print(out, "D {} {} {} {} {} {} {} {} {}\n", stage, d.box.cx, d.box.cy, d.box.cz,
             d.box.ex, d.box.ey, d.box.ez, d.box.yaw, d.score);
}

metrics::ReportRow base_row(const ScenarioConfig& cfg) {
  metrics::ReportRow row;
  row.run = cfg.name;
  row.mode = std::string(to_string(cfg.mode));
  row.cav_rate = cfg.demand.cav_rate;
  row.cv_rate = cfg.demand.cv_rate;
  row.seed = cfg.seed;
  return row;
}

void finish_row(RunResult& r, const ScenarioConfig& cfg,
                const std::vector<metrics::FrameEval>& raw_frames,
                const std::vector<metrics::FrameEval>& fused_frames) {
  if (cfg.mode == Mode::kCoop) {
    r.row.raw = metrics::ap_table(raw_frames);
    r.row.fused = metrics::ap_table(fused_frames);
  }
  std::vector<double> values;
  for (const auto& e : r.ecvpr) values.push_back(e.value);
  r.row.ecvpr = metrics::mean_std(values);
  r.row.avg_delay = metrics::avg_delay(r.trips, cfg.warmup);
  r.row.n_exited = static_cast<std::size_t>(
      std::count_if(r.trips.begin(), r.trips.end(),
                    [&](const metrics::TripRecord& t) { return t.spawn_time >= cfg.warmup; }));
}

}  // namespace

RunResult simulate(const ScenarioConfig& cfg, std::ostream* log) {
  validate(cfg);
  const traffic::RoadNetwork network = traffic::make_t_intersection(cfg.network);
  const auto phases =
      control::phases_for(network, cfg.upstream_window, cfg.downstream_window);
  control::validate(phases, network);
  const auto clutter = cfg.mode == Mode::kCoop
                           ? make_clutter(network, cfg.clutter_count, cfg.clutter_seed)
                           : std::vector<OrientedBox>{};

  traffic::World world;
  world.dt = cfg.dt;
  traffic::Spawner spawner(network, cfg.demand, cfg.driver, cfg.seed);
  control::ControllerState ctrl;
  control::ObservationBuffer buffer(cfg.stale_after);
  Rng cv_noise(cfg.seed, 300);

  RunResult result;
  result.row = base_row(cfg);
  result.decisions.push_back(ctrl.signal);
  std::vector<metrics::FrameEval> raw_frames, fused_frames;

  const bool full_log = log && cfg.log_detail == LogDetail::kFull;
  if (log) {
    fmt::print(*log, "# coopsense scenario log\n");
    for (const auto& [k, v] : config_entries(cfg)) fmt::print(*log, "C {} {}\n", k, v);
  }

  const std::int64_t total = std::llround((cfg.warmup + cfg.duration) / cfg.dt);
  const std::int64_t perceive_every = std::llround(cfg.perception_period / cfg.dt);
  const std::int64_t decide_every = std::llround(cfg.decision_period / cfg.dt);
  const std::int64_t warmup_ticks = std::llround(cfg.warmup / cfg.dt);

  for (std::int64_t tick = 0; tick < total; ++tick) {
    const double now = world.time();
    spawner.spawn(world);

    if (tick % perceive_every == 0) {
      FrameOutput frame;
      const std::uint64_t frame_seed = splitmix64(cfg.seed * 0x100000001B3ull + tick);
      switch (cfg.mode) {
        case Mode::kCoop:
          frame = perceive_coop(cfg, network, world, clutter, frame_seed);
          break;
        case Mode::kCv:
          frame.observations =
              observe_truth(world, network, cfg.cv_noise_sigma, &cv_noise, true);
          break;
        case Mode::kOracle:
          frame.observations = observe_truth(world, network, 0.0, nullptr, false);
          break;
      }
      if (tick >= warmup_ticks) {
        const auto truth =
            region_truth(world, network, cfg.upstream_window, cfg.downstream_window);
        if (auto e = metrics::e_cvpr(frame.observations, truth))
          result.ecvpr.push_back({tick, now, *e});
        if (cfg.mode == Mode::kCoop) {
          const auto scene = traffic::ground_truth_boxes(world, network);
          const auto gts = windowed_truth(network, scene, frame.returns, cfg.eval_min_points);
          raw_frames.push_back({windowed(network, frame.raw), gts});
          fused_frames.push_back({windowed(network, frame.fused), gts});
        }
        if (full_log) {
          fmt::print(*log, "F {} {}\n", tick, now);
          for (const auto& v : world.vehicles) {
            const auto it = frame.returns.find(v.id);
            fmt::print(*log, "V {} {} {} {} {} {} {} {} {} {}\n", v.id,
                       traffic::to_string(v.kind), v.path, v.s, v.v, v.length, v.width,
                       v.height, v.spawn_time, it == frame.returns.end() ? 0 : it->second);
          }
          for (const auto& o : frame.observations)
            fmt::print(*log, "O {} {} {} {}\n", o.lane, o.dist_to_bar, o.x, o.y);
          for (const auto& d : frame.raw) log_box(*log, "raw", d);
          for (const auto& d : frame.fused) log_box(*log, "fused", d);
        }
      }
      buffer.push(now, std::move(frame.observations));
    }

    if (tick > 0 && tick % decide_every == 0) {
      const auto current = buffer.current(now);
      std::vector<int> pressures;
      for (const auto& p : phases) pressures.push_back(control::pressure(p, current));
      ctrl = control::decide(ctrl, pressures, cfg.decision_period, cfg.timing);
      result.decisions.push_back(ctrl.signal);
    }
    if (log)
      fmt::print(*log, "T {} {} {} {} {}\n", tick, now, ctrl.signal.active_phase,
                 interval_code(ctrl.signal.interval), ctrl.signal.elapsed_ms);

    const std::size_t exited_before = world.exited.size();
    traffic::step(world, network, ctrl.signal, cfg.driver);
    for (std::size_t i = exited_before; i < world.exited.size(); ++i) {
      const auto& v = world.exited[i];
      const metrics::TripRecord trip{v.spawn_time, *v.exit_time,
                                     traffic::free_flow_time(network, v.path, cfg.driver)};
      result.trips.push_back(trip);
      if (log)
        fmt::print(*log, "E {} {} {} {}\n", v.id, trip.spawn_time, trip.exit_time,
                   trip.free_flow_time);
    }
  }
  finish_row(result, cfg, raw_frames, fused_frames);
  return result;
}

RunFiles output_files(const std::filesystem::path& dir, const std::string& name) {
  return {dir / (name + ".log"), dir / (name + ".metrics.txt"), dir / (name + ".ecvpr.txt"),
          dir / (name + ".ecvpr_hist.txt")};
}

void write_ecvpr(std::ostream& out, const std::vector<EcvprSample>& samples) {
  fmt::print(out, "# tick time ecvpr\n");
  for (const auto& s : samples) fmt::print(out, "{} {:.1f} {:.6f}\n", s.tick, s.time, s.value);
}

namespace {

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", p.string()));
  return out;
}

void write_outputs(const RunResult& r, const RunFiles& files) {
  {
    auto out = open_out(files.metrics);
    metrics::write_report_header(out);
    metrics::write_report_row(out, r.row);
  }
  {
    auto out = open_out(files.ecvpr);
    write_ecvpr(out, r.ecvpr);
  }
  {
    auto out = open_out(files.histogram);
    std::vector<double> values;
    for (const auto& e : r.ecvpr) values.push_back(e.value);
    metrics::write_histogram(out, values);
  }
}

}  // namespace

RunResult run(const ScenarioConfig& cfg, const std::filesystem::path& dir) {
  validate(cfg);
  std::filesystem::create_directories(dir);
  const RunFiles files = output_files(dir, cfg.name);
  RunResult r;
  {
    auto log = open_out(files.log);
    r = simulate(cfg, &log);
  }
  write_outputs(r, files);
  return r;
}

RunResult evaluate_log(std::istream& in) {
  ScenarioConfig cfg;
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& why) {
    throw std::runtime_error(fmt::format("log line {}: {}", line_no, why));
  };

  // Config block first.
  std::vector<std::string> pending;
  int config_lines = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (line.rfind("C ", 0) == 0) {
      ++config_lines;
      const auto sp = line.find(' ', 2);
      const std::string key = line.substr(2, sp == std::string::npos ? sp : sp - 2);
      const std::string value = sp == std::string::npos ? "" : line.substr(sp + 1);
      set_option(cfg, key, value);
      continue;
    }
    pending.push_back(line);
    break;
  }
  if (config_lines == 0) fail("no configuration block");
  validate(cfg);
  const traffic::RoadNetwork network = traffic::make_t_intersection(cfg.network);

  RunResult r;
  r.row = base_row(cfg);
  std::vector<metrics::FrameEval> raw_frames, fused_frames;

  struct Frame {
    std::int64_t tick = 0;
    double time = 0.0;
    traffic::World world;
    std::vector<fusion::FusedVehicleObservation> obs;
    std::vector<detection::Detection> raw, fused;
    std::map<std::int64_t, int> returns;
  };
  std::optional<Frame> frame;
  auto flush = [&] {
    if (!frame) return;
    const auto truth =
        region_truth(frame->world, network, cfg.upstream_window, cfg.downstream_window);
    if (auto e = metrics::e_cvpr(frame->obs, truth))
      r.ecvpr.push_back({frame->tick, frame->time, *e});
    if (cfg.mode == Mode::kCoop) {
      const auto gts = windowed_truth(network, traffic::ground_truth_boxes(frame->world, network),
                                      frame->returns, cfg.eval_min_points);
      raw_frames.push_back({windowed(network, frame->raw), gts});
      fused_frames.push_back({windowed(network, frame->fused), gts});
    }
    frame.reset();
  };

  auto handle = [&](const std::string& l) {
    std::istringstream ls(l);
    std::string tag;
    ls >> tag;
    if (tag == "F") {
      flush();
      frame.emplace();
      if (!(ls >> frame->tick >> frame->time)) fail("bad frame record");
    } else if (tag == "V") {
      if (!frame) fail("vehicle outside a frame");
      traffic::Vehicle v;
      std::string kind;
      int hits = 0;
      if (!(ls >> v.id >> kind >> v.path >> v.s >> v.v >> v.length >> v.width >> v.height >>
            v.spawn_time >> hits))
        fail("bad vehicle record");
      if (hits > 0) frame->returns[v.id] = hits;
      v.kind = traffic::parse_vehicle_kind(kind);
      if (v.path < 0 || v.path >= static_cast<int>(network.paths.size())) fail("bad path");
      frame->world.vehicles.push_back(v);
    } else if (tag == "O") {
      if (!frame) fail("observation outside a frame");
      fusion::FusedVehicleObservation o;
      if (!(ls >> o.lane >> o.dist_to_bar >> o.x >> o.y)) fail("bad observation record");
      frame->obs.push_back(o);
    } else if (tag == "D") {
      if (!frame) fail("detection outside a frame");
      std::string stage;
      detection::Detection d;
      if (!(ls >> stage >> d.box.cx >> d.box.cy >> d.box.cz >> d.box.ex >> d.box.ey >>
            d.box.ez >> d.box.yaw >> d.score))
        fail("bad detection record");
      (stage == "raw" ? frame->raw : frame->fused).push_back(d);
    } else if (tag == "T") {
      std::int64_t tick, elapsed;
      double time;
      int phase;
      char code;
      if (!(ls >> tick >> time >> phase >> code >> elapsed)) fail("bad signal record");
      SignalState s{phase,
                    code == 'G'   ? Interval::kGreen
                    : code == 'Y' ? Interval::kYellow
                                  : Interval::kAllRed,
                    elapsed};
      if (r.decisions.empty() || !(r.decisions.back() == s)) r.decisions.push_back(s);
    } else if (tag == "E") {
      std::int64_t id;
      metrics::TripRecord t;
      if (!(ls >> id >> t.spawn_time >> t.exit_time >> t.free_flow_time))
        fail("bad exit record");
      r.trips.push_back(t);
    } else {
      fail("unknown record '" + tag + "'");
    }
  };
  for (const auto& l : pending) handle(l);
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    handle(line);
  }
  flush();
  finish_row(r, cfg, raw_frames, fused_frames);
  return r;
}

std::vector<std::pair<std::string, std::vector<std::string>>> parse_grid(
    const std::string& text) {
  std::vector<std::pair<std::string, std::vector<std::string>>> grid;
  if (trim(text).empty()) return grid;
  for (const auto& axis : split(text, ';')) {
    if (axis.empty()) continue;
    const auto eq = axis.find('=');
    if (eq == std::string::npos) throw ConfigError(fmt::format("grid axis '{}' needs key=values", axis));
    const std::string key = trim(axis.substr(0, eq));
    auto values = split(axis.substr(eq + 1), ',');
    if (key.empty() || values.empty() ||
        std::any_of(values.begin(), values.end(), [](const auto& v) { return v.empty(); }))
      throw ConfigError(fmt::format("grid axis '{}' has empty entries", axis));
    grid.emplace_back(key, std::move(values));
  }
  return grid;
}

std::vector<SweepCell> sweep(const ScenarioConfig& base, const std::string& grid_text,
                             int seeds, int workers) {
  if (seeds < 1) throw ConfigError("sweep needs at least one seed");
  const auto grid = parse_grid(grid_text);

  std::vector<SweepCell> cells(1);
  for (const auto& [key, values] : grid) {
    std::vector<SweepCell> next;
    for (const auto& cell : cells)
      for (const auto& v : values) {
        SweepCell c = cell;
        c.params[key] = v;
        next.push_back(std::move(c));
      }
    cells = std::move(next);
  }

  struct Job {
    std::size_t cell;
    ScenarioConfig cfg;
  };
  std::vector<Job> jobs;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    ScenarioConfig cell_cfg = base;
    std::string suffix;
    for (const auto& [key, values] : grid) {
      set_option(cell_cfg, key, cells[c].params[key]);
      suffix += fmt::format("_{}{}", key, cells[c].params[key]);
    }
    for (int s = 0; s < seeds; ++s) {
      ScenarioConfig cfg = cell_cfg;
      cfg.seed = base.seed + static_cast<std::uint64_t>(s);
      cfg.name = fmt::format("{}{}_s{}", base.name, suffix, cfg.seed);
      validate(cfg);
      jobs.push_back({c, std::move(cfg)});
    }
  }

  std::vector<RunResult> results(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j; (j = next.fetch_add(1)) < jobs.size();) {
      try {
        results[j] = simulate(jobs[j].cfg);
      } catch (...) {
        errors[j] = std::current_exception();
      }
    }
  };
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t n_workers =
      std::min<std::size_t>(jobs.size(), workers > 0 ? static_cast<std::size_t>(workers) : hw);
  std::vector<std::thread> pool;
  for (std::size_t i = 1; i < n_workers; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  for (std::size_t j = 0; j < jobs.size(); ++j)
    cells[jobs[j].cell].runs.push_back(std::move(results[j]));
  return cells;
}

void write_sweep_report(std::ostream& out, const std::vector<SweepCell>& cells) {
  metrics::write_report_header(out);
  for (const auto& c : cells)
    for (const auto& r : c.runs) metrics::write_report_row(out, r.row);

  fmt::print(out, "\n# cell\tn\tecvpr\tavg_delay_s\tap40_bev_01\n");
  for (const auto& c : cells) {
    std::vector<std::string> params;
    for (const auto& [k, v] : c.params) params.push_back(k + "=" + v);
    std::vector<double> ecvpr, delay, ap;
    for (const auto& r : c.runs) {
      if (r.row.ecvpr) ecvpr.push_back(r.row.ecvpr->mean);
      if (r.row.avg_delay) delay.push_back(*r.row.avg_delay);
      if (r.row.fused.values[0][0]) ap.push_back(*r.row.fused.values[0][0]);
    }
    auto cell = [](const std::vector<double>& v, int decimals) {
      const auto m = metrics::mean_std(v);
      return m ? metrics::format_mean_std(*m, decimals) : std::string("NA");
    };
    fmt::print(out, "{}\t{}\t{}\t{}\t{}\n", params.empty() ? "base" : fmt::format("{}", fmt::join(params, ",")),
               c.runs.size(), cell(ecvpr, 4), cell(delay, 2), cell(ap, 2));
  }
}

}  // namespace coopsense::harness
