#include "crashscene/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "crashscene/errors.hpp"
#include "crashscene/tracking.hpp"

namespace crashscene::metrics {

std::vector<TrackPoint> absolutize_ground_truth(std::span<const TrackPoint> relative,
                                                std::span<const trajectory::OdometryPose> odometry) {
  std::map<int, const trajectory::OdometryPose*> by_frame;
  for (const auto& o : odometry) by_frame[o.frame] = &o;
  std::set<int> missing;
  for (const auto& p : relative) {
    if (!by_frame.count(p.frame)) missing.insert(p.frame);
  }
  if (!missing.empty()) {
    std::string msg = "ground truth frames without odometry:";
    for (int f : missing) msg += " " + std::to_string(f);
    throw GapError(msg);
  }
  std::vector<TrackPoint> out;
  out.reserve(relative.size());
  for (const auto& p : relative) {
    const auto& o = *by_frame.at(p.frame);
    const double c = std::cos(o.yaw), s = std::sin(o.yaw);
    out.push_back({p.frame, p.object_id, o.x + c * p.x - s * p.y, o.y + s * p.x + c * p.y});
  }
  return out;
}

namespace {

using FrameMap = std::map<int, std::vector<const TrackPoint*>>;

FrameMap group_by_frame(std::span<const TrackPoint> points, const char* what) {
  FrameMap frames;
  std::set<std::pair<int, int>> seen;
  for (const auto& p : points) {
    if (!seen.insert({p.frame, p.object_id}).second) {
      throw ParameterError(std::string(what) + " repeats object " + std::to_string(p.object_id) +
                           " in frame " + std::to_string(p.frame));
    }
    frames[p.frame].push_back(&p);
  }
  for (auto& [frame, list] : frames) {
    std::sort(list.begin(), list.end(),
              [](const TrackPoint* a, const TrackPoint* b) { return a->object_id < b->object_id; });
  }
  return frames;
}

double percent(double num, double den) { return den > 0.0 ? 100.0 * num / den : 0.0; }

}  // namespace

MetricsReport evaluate(std::span<const TrackPoint> gt, std::span<const TrackPoint> est,
                       const EvaluateOptions& options) {
  if (gt.empty()) throw UndefinedMetricsError("ground truth is empty; CLEAR-MOT metrics are undefined");
  const double thr = options.match_threshold;
  if (!(thr > 0.0) || !std::isfinite(thr)) throw ParameterError("match_threshold must be positive");

  const FrameMap gt_frames = group_by_frame(gt, "ground truth");
  const FrameMap est_frames = group_by_frame(est, "estimate");
  std::set<int> all_frames;
  for (const auto& [f, _] : gt_frames) all_frames.insert(f);
  for (const auto& [f, _] : est_frames) all_frames.insert(f);

  MetricsReport r;
  std::map<int, int> lifespan, matched_frames, last_match;
  double dist_sum = 0.0;
  double modp_sum = 0.0;
  int modp_frames = 0;
  const std::vector<const TrackPoint*> none;

  for (int frame : all_frames) {
    const auto git = gt_frames.find(frame);
    const auto eit = est_frames.find(frame);
    const auto& g = git == gt_frames.end() ? none : git->second;
    const auto& e = eit == est_frames.end() ? none : eit->second;
    for (const TrackPoint* p : g) ++lifespan[p->object_id];

    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    if (!g.empty() && !e.empty()) {
      // Gated pairs cost more than any set of valid ones, so the assignment
      // maximises the number of valid matches before minimising distance.
      const double gated = thr * (std::min(g.size(), e.size()) + 1);
      tracking::CostMatrix cost(g.size(), e.size());
      for (std::size_t i = 0; i < g.size(); ++i) {
        for (std::size_t j = 0; j < e.size(); ++j) {
          const double d = std::hypot(g[i]->x - e[j]->x, g[i]->y - e[j]->y);
          cost(i, j) = d <= thr ? d : gated;
        }
      }
      for (const auto& [i, j] : tracking::solve_assignment(cost).pairs) {
        if (cost(i, j) <= thr) pairs.emplace_back(i, j);
      }
    }

    double frame_overlap = 0.0;
    for (const auto& [i, j] : pairs) {
      const double d = std::hypot(g[i]->x - e[j]->x, g[i]->y - e[j]->y);
      dist_sum += d;
      frame_overlap += 1.0 - d / thr;
      const int gid = g[i]->object_id;
      const int eid = e[j]->object_id;
      ++matched_frames[gid];
      const auto prev = last_match.find(gid);
      if (prev != last_match.end() && prev->second != eid) ++r.IDSW;
      last_match[gid] = eid;
    }
    if (!pairs.empty()) {
      modp_sum += frame_overlap / pairs.size();
      ++modp_frames;
    }
    r.TP += static_cast<int>(pairs.size());
    r.FN += static_cast<int>(g.size() - pairs.size());
    r.FP += static_cast<int>(e.size() - pairs.size());
  }

  r.objects = static_cast<int>(gt.size());
  r.trajectories = static_cast<int>(lifespan.size());
  r.frames = static_cast<int>(all_frames.size());
  const double n_gt = r.objects;
  r.MOTA = 100.0 * (n_gt - r.FN - r.FP - r.IDSW) / n_gt;
  r.MODA = 100.0 * (n_gt - r.FN - r.FP) / n_gt;
  r.MOTP = r.TP > 0 ? 100.0 * (1.0 - dist_sum / (r.TP * thr)) : 0.0;
  r.MODP = modp_frames > 0 ? 100.0 * modp_sum / modp_frames : 0.0;
  r.recall = percent(r.TP, r.TP + r.FN);
  r.precision = percent(r.TP, r.TP + r.FP);
  r.F1 = r.recall + r.precision > 0.0 ? 2.0 * r.recall * r.precision / (r.recall + r.precision) : 0.0;
  r.FAR = percent(r.FP, r.frames);

  int mt = 0, ml = 0;
  for (const auto& [id, span] : lifespan) {
    const auto it = matched_frames.find(id);
    const double ratio = (it == matched_frames.end() ? 0.0 : it->second) / static_cast<double>(span);
    if (ratio >= options.mostly_tracked) {
      ++mt;
    } else if (ratio <= options.mostly_lost) {
      ++ml;
    }
  }
  r.MT = percent(mt, r.trajectories);
  r.ML = percent(ml, r.trajectories);
  r.PT = percent(r.trajectories - mt - ml, r.trajectories);
  return r;
}

namespace {

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f %%", v);
  return buf;
}

// Pads every column to its widest cell.
std::string table(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(rows.front().size(), 0);
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::string out;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::string line;
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      if (c) line += " | ";
      line += rows[r][c] + std::string(width[c] - rows[r][c].size(), ' ');
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
    if (r == 0) {
      std::size_t total = 0;
      for (std::size_t c = 0; c < width.size(); ++c) total += width[c] + (c ? 3 : 0);
      out += std::string(total, '-') + "\n";
    }
  }
  return out;
}

}  // namespace

std::string format_report(const MetricsReport& r, const std::string& sequence) {
  std::string out;
  out += table({{"Sequences", "MOTA", "MOTP", "MODA", "MODP", "recall"},
                {sequence, pct(r.MOTA), pct(r.MOTP), pct(r.MODA), pct(r.MODP), pct(r.recall)}});
  out += "\n";
  out += table({{"Sequences", "precision", "F1", "TP", "FP", "FN", "FAR"},
                {sequence, pct(r.precision), pct(r.F1), std::to_string(r.TP), std::to_string(r.FP),
                 std::to_string(r.FN), pct(r.FAR)}});
  out += "\n";
  out += table({{"Sequences", "objects", "trajectories", "MT", "PT", "ML"},
                {sequence, std::to_string(r.objects), std::to_string(r.trajectories), pct(r.MT),
                 pct(r.PT), pct(r.ML)}});
  out += "\nIDSW: " + std::to_string(r.IDSW) + "  frames: " + std::to_string(r.frames) + "\n";
  return out;
}

nlohmann::json report_to_json(const MetricsReport& r) {
  return {{"MOTA", r.MOTA},   {"MOTP", r.MOTP},
          {"MODA", r.MODA},   {"MODP", r.MODP},
          {"recall", r.recall}, {"precision", r.precision},
          {"F1", r.F1},       {"FAR", r.FAR},
          {"MT", r.MT},       {"PT", r.PT},
          {"ML", r.ML},       {"TP", r.TP},
          {"FP", r.FP},       {"FN", r.FN},
          {"IDSW", r.IDSW},   {"objects", r.objects},
          {"trajectories", r.trajectories}, {"frames", r.frames}};
}

namespace {

template <typename T>
bool parse_number(std::string cell, T& value) {
  const auto b = cell.find_first_not_of(" \t");
  if (b == std::string::npos) return false;
  cell = cell.substr(b, cell.find_last_not_of(" \t") - b + 1);
  const auto [end, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  return ec == std::errc() && end == cell.data() + cell.size();
}

}  // namespace

std::vector<TrackPoint> parse_tracks_csv(const std::string& text) {
  std::vector<TrackPoint> out;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (line_no == 1 && line.rfind("frame", 0) == 0) continue;
    std::istringstream row(line);
    std::string cell[4];
    for (auto& c : cell) std::getline(row, c, ',');
    std::string extra;
    TrackPoint p;
    if (!parse_number(cell[0], p.frame) || !parse_number(cell[1], p.object_id) ||
        !parse_number(cell[2], p.x) || !parse_number(cell[3], p.y)) {
      throw FormatError("line " + std::to_string(line_no) + ": expected frame,object_id,x,y");
    }
    if (std::getline(row, extra) && !extra.empty()) {
      throw FormatError("line " + std::to_string(line_no) + ": too many columns");
    }
    out.push_back(p);
  }
  return out;
}

std::vector<TrackPoint> read_tracks_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_tracks_csv(buf.str());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string tracks_to_csv(std::span<const TrackPoint> tracks) {
  std::string out = "frame,object_id,x,y\n";
  char buf[96];
  for (const auto& p : tracks) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%.6f,%.6f\n", p.frame, p.object_id, p.x, p.y);
    out += buf;
  }
  return out;
}

}  // namespace crashscene::metrics
