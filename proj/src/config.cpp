#include <charconv>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>

#include "crashscene/errors.hpp"
#include "crashscene/io.hpp"
#include "crashscene/pipeline.hpp"

namespace crashscene::pipeline {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

// Shortest text that parses back to the same double.
std::string format_double(double v) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

struct Key {
  const char* name;
  std::function<void(PipelineConfig&, const std::string&)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

template <typename T>
T parse_number(const std::string& value) {
  T out{};
  const auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || end != value.data() + value.size()) {
    throw ConfigError("'" + value + "' is not a valid number");
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(out)) throw ConfigError("'" + value + "' is not finite");
  }
  return out;
}

template <typename T, typename Ref>
Key number(const char* name, Ref ref) {
  return {name,
          [ref](PipelineConfig& c, const std::string& v) { ref(c) = parse_number<T>(v); },
          [ref](const PipelineConfig& c) {
            PipelineConfig copy = c;
            if constexpr (std::is_floating_point_v<T>) {
              return format_double(ref(copy));
            } else {
              return std::to_string(ref(copy));
            }
          }};
}

#define CS_FIELD(expr) [](PipelineConfig& c) -> auto& { return c.expr; }

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      number<double>("frame_rate", CS_FIELD(frame_rate)),
      {"intrinsics",
       [](PipelineConfig& c, const std::string& v) {
         if (v == "config") {
           c.intrinsics = IntrinsicsSource::kConfig;
         } else if (v == "calibrate") {
           c.intrinsics = IntrinsicsSource::kCalibrate;
         } else if (v == "dataset-default") {
           c.intrinsics = IntrinsicsSource::kDatasetDefault;
         } else {
           throw ConfigError("intrinsics must be config, calibrate or dataset-default");
         }
       },
       [](const PipelineConfig& c) -> std::string {
         switch (c.intrinsics) {
           case IntrinsicsSource::kConfig: return "config";
           case IntrinsicsSource::kCalibrate: return "calibrate";
           default: return "dataset-default";
         }
       }},
      number<double>("fu", CS_FIELD(fu)),
      number<double>("fv", CS_FIELD(fv)),
      number<double>("cu", CS_FIELD(cu)),
      number<double>("cv", CS_FIELD(cv)),
      number<double>("camera_height", CS_FIELD(camera_height)),
      number<double>("camera_pitch", CS_FIELD(camera_pitch)),
      number<double>("max_depth", CS_FIELD(max_depth)),
      number<double>("depth_scale", CS_FIELD(depth_scale)),
      number<double>("center_offset", CS_FIELD(center_offset)),
      number<double>("ego_ref_u", CS_FIELD(ego_ref_u)),
      number<double>("min_score", CS_FIELD(min_score)),
      number<int>("birth_hits", CS_FIELD(tracker.birth_hits)),
      number<int>("death_misses", CS_FIELD(tracker.death_misses)),
      number<double>("iou_threshold", CS_FIELD(tracker.iou_threshold)),
      number<double>("dbscan_eps", CS_FIELD(lanes.eps)),
      number<std::size_t>("dbscan_min_pts", CS_FIELD(lanes.min_pts)),
      number<double>("lane_lower_fraction", CS_FIELD(lanes.lower_fraction)),
      number<double>("lane_max_cost", CS_FIELD(lanes.max_cost)),
      number<int>("lane_survival_frames", CS_FIELD(lanes.survival_frames)),
      number<double>("lane_width", CS_FIELD(lanes.lane_width)),
      number<int>("lane_count", CS_FIELD(lane_count)),
      number<int>("sg_window", CS_FIELD(smoothing.sg_window)),
      number<int>("sg_polyorder", CS_FIELD(smoothing.sg_polyorder)),
      number<int>("local_window", CS_FIELD(smoothing.local_window)),
      number<double>("local_smoothness", CS_FIELD(smoothing.local_smoothness)),
      number<double>("global_smoothness", CS_FIELD(smoothing.global_smoothness)),
      number<double>("endpoint_weight", CS_FIELD(smoothing.endpoint_weight)),
      number<int>("max_gap", CS_FIELD(max_gap)),
      number<int>("min_track_length", CS_FIELD(min_track_length)),
      {"ego_mode",
       [](PipelineConfig& c, const std::string& v) {
         if (v == "auto") {
           c.ego_mode = EgoSource::kAuto;
         } else if (v == "odometry") {
           c.ego_mode = EgoSource::kOdometry;
         } else if (v == "constant") {
           c.ego_mode = EgoSource::kConstant;
         } else {
           throw ConfigError("ego_mode must be auto, odometry or constant");
         }
       },
       [](const PipelineConfig& c) -> std::string {
         switch (c.ego_mode) {
           case EgoSource::kOdometry: return "odometry";
           case EgoSource::kConstant: return "constant";
           default: return "auto";
         }
       }},
      number<double>("ego_speed", CS_FIELD(ego_speed)),
      number<double>("accel", CS_FIELD(accel)),
      number<double>("min_gap", CS_FIELD(min_gap)),
      number<double>("collision_distance", CS_FIELD(collision_distance)),
      number<double>("road_smoothness", CS_FIELD(road_smoothness)),
      number<double>("road_spacing", CS_FIELD(road_spacing)),
      number<double>("standoff", CS_FIELD(standoff)),
      number<double>("match_threshold", CS_FIELD(match_threshold)),
      number<int>("workers", CS_FIELD(workers)),
  };
  return table;
}

#undef CS_FIELD

void require(bool ok, const char* key, const char* range) {
  if (!ok) throw ConfigError(std::string(key) + " must be " + range);
}

}  // namespace

void PipelineConfig::validate() const {
  require(frame_rate > 0.0, "frame_rate", "> 0");
  if (intrinsics == IntrinsicsSource::kConfig) {
    require(fu > 0.0 && fv > 0.0, "fu/fv", "> 0 when intrinsics = config");
    require(cu >= 0.0 && cv >= 0.0, "cu/cv", ">= 0 when intrinsics = config");
  }
  require(camera_height > 0.0, "camera_height", "> 0");
  require(std::abs(camera_pitch) < 0.5, "camera_pitch", "within (-0.5, 0.5) rad");
  require(max_depth > 0.0, "max_depth", "> 0");
  require(depth_scale > 0.0, "depth_scale", "> 0");
  require(center_offset >= 0.0, "center_offset", ">= 0");
  require(min_score >= 0.0 && min_score <= 1.0, "min_score", "in [0, 1]");
  require(max_gap >= 1, "max_gap", ">= 1");
  require(min_track_length >= 2, "min_track_length", ">= 2");
  require(ego_speed >= 0.0, "ego_speed", ">= 0");
  require(lane_count >= 1, "lane_count", ">= 1");
  require(accel > 0.0, "accel", "> 0");
  require(min_gap >= 0.0, "min_gap", ">= 0");
  require(collision_distance > 0.0, "collision_distance", "> 0");
  require(road_smoothness >= 0.0, "road_smoothness", ">= 0");
  require(road_spacing >= 0.5 && road_spacing <= 20.0, "road_spacing", "in [0.5, 20] m");
  require(standoff >= 0.0, "standoff", ">= 0");
  require(match_threshold > 0.0, "match_threshold", "> 0");
  require(workers >= 1, "workers", ">= 1");
  try {
    tracker.validate();
    lanes.validate();
    smoothing.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
}

scenario::ScenarioConfig PipelineConfig::scenario_config() const {
  scenario::ScenarioConfig s;
  s.frame_rate = frame_rate;
  s.accel = accel;
  s.min_gap = min_gap;
  s.collision_distance = collision_distance;
  s.road.lane_count = lane_count;
  s.road.lane_width = lanes.lane_width;
  s.road.smoothness = road_smoothness;
  s.road.spacing = road_spacing;
  s.classify.frame_rate = frame_rate;
  s.extrapolation.frame_rate = frame_rate;
  s.extrapolation.standoff = standoff;
  return s;
}

PipelineConfig parse_config(const std::string& text) {
  PipelineConfig config;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = "config line " + std::to_string(line_no) + ": ";
    // Strip comments outside quotes.
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line.resize(i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    const auto& table = keys();
    const auto it = std::find_if(table.begin(), table.end(), [&](const Key& k) { return key == k.name; });
    if (it == table.end()) throw ConfigError(where + "unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError(where + "repeated key '" + key + "'");
    try {
      it->set(config, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + key + ": " + e.what());
    }
  }
  config.validate();
  return config;
}

PipelineConfig load_config(const fs::path& path) {
  try {
    return parse_config(io::read_text(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string config_to_text(const PipelineConfig& config) {
  std::string out;
  for (const Key& k : keys()) out += std::string(k.name) + " = " + k.get(config) + "\n";
  return out;
}

}  // namespace crashscene::pipeline
