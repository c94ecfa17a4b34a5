#include "crashscene/io.hpp"

#include <png.h>

#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "crashscene/errors.hpp"
#include "crashscene/scenario_synth.hpp"

namespace crashscene::io {

using nlohmann::json;

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  scenario::write_file_atomic(path, text);
}

namespace {

// Header of a binary PGM: magic, width, height, maxval, with '#' comments.
struct PgmHeader {
  int width = 0;
  int height = 0;
  int maxval = 0;
  std::size_t data_offset = 0;
};

PgmHeader parse_pgm_header(const std::string& bytes, const fs::path& path) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    throw FormatError(path.string() + ": not a binary PGM (P5)");
  }
  std::size_t pos = 2;
  int fields[3] = {0, 0, 0};
  for (int& field : fields) {
    while (pos < bytes.size()) {
      if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
    const auto [end, ec] = std::from_chars(bytes.data() + pos, bytes.data() + bytes.size(), field);
    if (ec != std::errc() || field <= 0) throw FormatError(path.string() + ": malformed PGM header");
    pos = static_cast<std::size_t>(end - bytes.data());
  }
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw FormatError(path.string() + ": malformed PGM header");
  }
  return {fields[0], fields[1], fields[2], pos + 1};
}

}  // namespace

camera::DepthMap read_depth_pgm(const fs::path& path, double scale) {
  const std::string bytes = read_text(path);
  const PgmHeader h = parse_pgm_header(bytes, path);
  if (h.maxval < 256) throw FormatError(path.string() + ": depth PGM must be 16-bit");
  const std::size_t n = static_cast<std::size_t>(h.width) * h.height;
  if (bytes.size() - h.data_offset < 2 * n) throw FormatError(path.string() + ": truncated PGM data");
  camera::DepthMap depth(h.width, h.height);
  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data() + h.data_offset);
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned sample = (static_cast<unsigned>(data[2 * i]) << 8) | data[2 * i + 1];
    depth.depth[i] = sample * scale;
  }
  return depth;
}

void write_depth_pgm(const fs::path& path, const camera::DepthMap& depth, double scale) {
  std::string out = "P5\n" + std::to_string(depth.width) + " " + std::to_string(depth.height) + "\n65535\n";
  out.reserve(out.size() + 2 * depth.depth.size());
  for (double d : depth.depth) {
    const double s = std::round(d / scale);
    const unsigned sample = (d > 0.0 && s <= 65535.0) ? static_cast<unsigned>(s) : 0u;
    out.push_back(static_cast<char>(sample >> 8));
    out.push_back(static_cast<char>(sample & 0xff));
  }
  write_text(path, out);
}

namespace {

camera::PixelMask read_png_mask(const fs::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
    throw IoError(path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_GRAY;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw FormatError(path.string() + ": " + msg);
  }
  camera::PixelMask mask(static_cast<int>(image.width), static_cast<int>(image.height));
  for (std::size_t i = 0; i < buffer.size(); ++i) mask.member[i] = buffer[i] ? 1 : 0;
  return mask;
}

camera::PixelMask read_pgm_mask(const fs::path& path) {
  const std::string bytes = read_text(path);
  const PgmHeader h = parse_pgm_header(bytes, path);
  const std::size_t n = static_cast<std::size_t>(h.width) * h.height;
  const std::size_t bytes_per = h.maxval < 256 ? 1 : 2;
  if (bytes.size() - h.data_offset < bytes_per * n) throw FormatError(path.string() + ": truncated PGM data");
  camera::PixelMask mask(h.width, h.height);
  const char* data = bytes.data() + h.data_offset;
  for (std::size_t i = 0; i < n; ++i) {
    bool set = data[bytes_per * i] != 0;
    if (bytes_per == 2) set = set || data[2 * i + 1] != 0;
    mask.member[i] = set ? 1 : 0;
  }
  return mask;
}

}  // namespace

camera::PixelMask read_mask(const fs::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".png" || ext == ".PNG") return read_png_mask(path);
  if (ext == ".pgm" || ext == ".PGM") return read_pgm_mask(path);
  throw FormatError(path.string() + ": unsupported mask format (use .png or .pgm)");
}

void write_mask_png(const fs::path& path, const camera::PixelMask& mask) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(mask.width);
  image.height = static_cast<png_uint_32>(mask.height);
  image.format = PNG_FORMAT_GRAY;
  std::vector<png_byte> buffer(mask.member.size());
  for (std::size_t i = 0; i < buffer.size(); ++i) buffer[i] = mask.member[i] ? 255 : 0;
  // Encode to memory so the file itself is replaced atomically.
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, buffer.data(), 0, nullptr)) {
    throw IoError(path.string() + ": " + image.message);
  }
  std::string bytes(size, '\0');
  if (!png_image_write_to_memory(&image, bytes.data(), &size, 0, buffer.data(), 0, nullptr)) {
    throw IoError(path.string() + ": " + image.message);
  }
  bytes.resize(size);
  write_text(path, bytes);
}

std::vector<camera::PixelCoord> mask_pixels(const camera::PixelMask& mask) {
  std::vector<camera::PixelCoord> out;
  for (int v = 0; v < mask.height; ++v) {
    for (int u = 0; u < mask.width; ++u) {
      if (mask.at(u, v)) out.push_back({static_cast<double>(u), static_cast<double>(v)});
    }
  }
  return out;
}

namespace {

template <typename Fn>
void for_each_json_line(const std::string& text, const std::string& what, Fn&& fn) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      fn(json::parse(line));
    } catch (const json::exception& e) {
      throw FormatError(what + " line " + std::to_string(line_no) + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError(what + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

}  // namespace

std::map<int, std::vector<camera::PixelCoord>> read_lanes_jsonl(const fs::path& path) {
  std::map<int, std::vector<camera::PixelCoord>> out;
  for_each_json_line(read_text(path), path.string(), [&](const json& j) {
    auto& pixels = out[j.at("frame").get<int>()];
    for (const auto& p : j.at("pixels")) {
      if (!p.is_array() || p.size() != 2) throw FormatError("pixel must be [u, v]");
      pixels.push_back({p[0].get<double>(), p[1].get<double>()});
    }
  });
  return out;
}

std::string lanes_to_jsonl(const std::map<int, std::vector<camera::PixelCoord>>& lanes) {
  std::string out;
  for (const auto& [frame, pixels] : lanes) {
    json px = json::array();
    for (const auto& p : pixels) px.push_back({p.u, p.v});
    out += json{{"frame", frame}, {"pixels", px}}.dump() + "\n";
  }
  return out;
}

std::vector<tracking::Detection> parse_detections_jsonl(const std::string& text) {
  std::vector<tracking::Detection> out;
  for_each_json_line(text, "detections", [&](const json& j) {
    tracking::Detection d;
    d.frame = j.at("frame").get<int>();
    const auto& b = j.at("bbox");
    if (!b.is_array() || b.size() != 4) throw FormatError("bbox must have 4 numbers");
    d.bbox = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
    if (!d.bbox.valid()) throw FormatError("bbox must satisfy u_min < u_max and v_min < v_max");
    d.score = j.value("score", 1.0);
    if (j.contains("mask_file") && !j["mask_file"].is_null()) d.mask_file = j["mask_file"].get<std::string>();
    d.label = j.value("class", std::string("car"));
    out.push_back(std::move(d));
  });
  return out;
}

std::vector<tracking::Detection> read_detections_jsonl(const fs::path& path) {
  try {
    return parse_detections_jsonl(read_text(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string detections_to_jsonl(const std::vector<tracking::Detection>& detections) {
  std::string out;
  for (const auto& d : detections) {
    json j = {{"frame", d.frame},
              {"bbox", {d.bbox.u_min, d.bbox.v_min, d.bbox.u_max, d.bbox.v_max}},
              {"score", d.score},
              {"class", d.label}};
    if (d.mask_file) j["mask_file"] = *d.mask_file;
    out += j.dump() + "\n";
  }
  return out;
}

std::vector<trajectory::OdometryPose> parse_odometry_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("frame", 0) != 0) {
    throw FormatError("odometry CSV needs a header row frame,x,y,yaw");
  }
  std::vector<trajectory::OdometryPose> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    trajectory::OdometryPose p;
    char c1 = 0, c2 = 0, c3 = 0;
    std::istringstream row(line);
    std::string rest;
    if (!(row >> p.frame >> c1 >> p.x >> c2 >> p.y >> c3 >> p.yaw) || c1 != ',' || c2 != ',' ||
        c3 != ',' || (row >> rest)) {
      throw FormatError("odometry line " + std::to_string(line_no) + ": expected frame,x,y,yaw");
    }
    out.push_back(p);
  }
  return out;
}

std::vector<trajectory::OdometryPose> read_odometry_csv(const fs::path& path) {
  try {
    return parse_odometry_csv(read_text(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string odometry_to_csv(const std::vector<trajectory::OdometryPose>& odometry) {
  std::string out = "frame,x,y,yaw\n";
  char buf[128];
  for (const auto& p : odometry) {
    std::snprintf(buf, sizeof(buf), "%d,%.9f,%.9f,%.9f\n", p.frame, p.x, p.y, p.yaw);
    out += buf;
  }
  return out;
}

}  // namespace crashscene::io
