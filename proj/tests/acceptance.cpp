// Acceptance suite: one PASS/FAIL line per primary criterion. Exit status is
// the number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <string>

#include "crashscene/camera_geometry.hpp"
#include "crashscene/io.hpp"
#include "crashscene/metrics.hpp"
#include "crashscene/pipeline.hpp"
#include "crashscene/scenario_synth.hpp"
#include "crashscene/tracking.hpp"
#include "crashscene/trajectory_builder.hpp"

namespace {

using namespace crashscene;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::string detail;
};

double Seconds(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string Format(const char* fmt, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), fmt, a, b, c);
  return buf;
}

// ------------------------------------------------------- projection round trip

Outcome ProjectionRoundTrip() {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> f(50.0, 3000.0), c(0.0, 1500.0), xy(-60.0, 60.0), z(0.1, 200.0);
  const auto start = Clock::now();
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const camera::CameraIntrinsics k{f(rng), f(rng), c(rng), c(rng)};
    const camera::Point3 p{xy(rng), xy(rng), z(rng)};
    const camera::PixelCoord px = camera::project(p, k);
    const camera::Point3 q = camera::backproject(px.u, px.v, k, p.z);
    const double err = std::sqrt((q.x - p.x) * (q.x - p.x) + (q.y - p.y) * (q.y - p.y) + (q.z - p.z) * (q.z - p.z)) /
                       std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z);
    worst = std::max(worst, err);
  }
  const double secs = Seconds(start);
  return {worst < 1e-9 && secs < 1.0, Format("10000 pairs, max relative error %.2e, %.3f s", worst, secs)};
}

// ---------------------------------------------------------- Hungarian optimality

// Minimum over all injections of the smaller side into the larger, summed in
// row order.
double BruteForceMinCost(const tracking::CostMatrix& cost) {
  const bool transpose = cost.rows() > cost.cols();
  const std::size_t small = transpose ? cost.cols() : cost.rows();
  const std::size_t large = transpose ? cost.rows() : cost.cols();
  std::vector<std::size_t> perm(large);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    if (transpose) {
      std::vector<int> col_of_row(cost.rows(), -1);
      for (std::size_t i = 0; i < small; ++i) col_of_row[perm[i]] = static_cast<int>(i);
      for (std::size_t r = 0; r < cost.rows(); ++r) {
        if (col_of_row[r] >= 0) total += cost(r, col_of_row[r]);
      }
    } else {
      for (std::size_t i = 0; i < small; ++i) total += cost(i, perm[i]);
    }
    best = std::min(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

Outcome HungarianOptimality() {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> dim(1, 7), small_int(0, 4);
  std::uniform_real_distribution<double> value(0.0, 100.0);
  const auto start = Clock::now();
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    tracking::CostMatrix m(dim(rng), dim(rng));
    for (std::size_t r = 0; r < m.rows(); ++r) {
      for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) = trial % 3 == 0 ? small_int(rng) : value(rng);
    }
    const tracking::Assignment a = tracking::solve_assignment(m);
    std::set<std::size_t> rows, cols;
    for (const auto& [r, c] : a.pairs) {
      rows.insert(r);
      cols.insert(c);
    }
    const bool ok = a.total_cost == BruteForceMinCost(m) && a.pairs.size() == std::min(m.rows(), m.cols()) &&
                    rows.size() == a.pairs.size() && cols.size() == a.pairs.size();
    if (!ok) ++mismatches;
  }
  const double secs = Seconds(start);
  return {mismatches == 0 && secs < 10.0,
          Format("1000 matrices up to 7x7, %.0f mismatches vs exhaustive search, %.2f s", mismatches, secs)};
}

// -------------------------------------------------------------- CLEAR-MOT oracle

Outcome ClearMotOracle() {
  // One object over 10 frames; estimate 7 tracks it 0.5 m off for frames
  // 0..7 (8 TP, 2 FN); estimate 9 is a far false positive in frame 3.
  std::vector<metrics::TrackPoint> gt, est;
  for (int f = 0; f < 10; ++f) gt.push_back({f, 1, 10.0 + f, 2.0});
  for (int f = 0; f < 8; ++f) est.push_back({f, 7, 10.5 + f, 2.0});
  est.push_back({3, 9, 80.0, -5.0});
  const auto hand = metrics::evaluate(gt, est);
  const bool counts = hand.TP == 8 && hand.FN == 2 && hand.FP == 1 && hand.IDSW == 0;
  const bool mota = hand.MOTA == 70.0 && metrics::format_report(hand).find("70.00 %") != std::string::npos;

  std::mt19937 rng(3);
  std::uniform_int_distribution<int> objects(1, 6), frames(1, 30);
  std::uniform_real_distribution<double> pos(-50.0, 50.0);
  int perfect = 0;
  for (int scene = 0; scene < 20; ++scene) {
    std::vector<metrics::TrackPoint> g;
    const int n = frames(rng);
    for (int id = 1, count = objects(rng); id <= count; ++id) {
      const double x = pos(rng), y = pos(rng);
      for (int f = 0; f < n; ++f) {
        if (rng() % 4) g.push_back({f, id, x + 0.7 * f, y});
      }
    }
    if (g.empty()) g.push_back({0, 1, 0.0, 0.0});
    const auto r = metrics::evaluate(g, g);
    if (r.MOTA == 100.0 && r.MOTP == 100.0 && r.FP == 0 && r.FN == 0 && r.IDSW == 0) ++perfect;
  }
  char buf[200];
  std::snprintf(buf, sizeof(buf), "hand scene %d TP, %d FN, %d FP, %d IDSW, MOTA %.2f%%; evaluate(gt, gt) = 100%% on %d/20",
                hand.TP, hand.FN, hand.FP, hand.IDSW, hand.MOTA, perfect);
  return {counts && mota && perfect == 20, buf};
}

// ---------------------------------------------------------------- step-back

Outcome StepBackSynchronization() {
  std::mt19937 rng(17);
  std::uniform_real_distribution<double> v(0.0, 35.0), a(1.0, 4.0);
  std::uniform_int_distribution<int> fleet(1, 8);
  double worst_dist = 0.0, worst_time = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> targets(fleet(rng));
    for (double& t : targets) t = v(rng);
    const double accel = a(rng);
    const auto s = scenario::compute_stepback(targets, accel);
    for (const auto& e : s.entries) {
      const auto l = scenario::build_leadin({0, 0.0, 0.0, 0.0, 0.0}, e, s.t_s_max, accel, 0.5);
      // Integrate the piecewise-linear speed profile and find when the
      // vehicle is at v_t with D_s covered.
      const auto profile = l.speed_profile();
      double dist = 0.0;
      double arrival = profile.empty() ? 0.0 : profile.back().first;
      for (std::size_t i = 1; i < profile.size(); ++i) {
        dist += 0.5 * (profile[i].second + profile[i - 1].second) * (profile[i].first - profile[i - 1].first);
      }
      const bool at_speed = (profile.empty() || std::abs(profile.back().second - e.v_t) <= 1e-9) &&
                            std::abs(l.speed_at(s.t_s_max) - e.v_t) <= 1e-9;
      if (e.D_s > 0.0) worst_dist = std::max(worst_dist, std::abs(dist - e.D_s) / e.D_s);
      const double time_err = e.D_s > 0.0 ? std::abs(arrival - s.t_s_max) : 0.0;
      worst_time = std::max(worst_time, at_speed ? time_err : std::numeric_limits<double>::infinity());
    }
  }
  return {worst_dist <= 1e-6 && worst_time <= 1e-9,
          Format("100 fleets, max relative D_s error %.2e, max v_t timing error %.2e s", worst_dist, worst_time)};
}

// ------------------------------------------------------------ Savitzky-Golay

Outcome SavitzkyGolayReproduction() {
  std::mt19937 rng(23);
  std::uniform_real_distribution<double> coef(-2.0, 2.0);
  double worst = 0.0;
  int cases = 0;
  for (int window : {5, 7, 11}) {
    for (int polyorder = 0; polyorder < std::min(window, 5); ++polyorder) {
      for (int degree = 0; degree <= polyorder; ++degree) {
        std::vector<double> c(degree + 1);
        for (double& x : c) x = coef(rng);
        std::vector<double> series(40);
        for (int i = 0; i < 40; ++i) {
          const double t = i / 10.0;
          double y = 0.0;
          for (int k = degree; k >= 0; --k) y = y * t + c[k];
          series[i] = y;
        }
        const auto out = trajectory::savitzky_golay(series, window, polyorder);
        for (int i = window / 2; i < 40 - window / 2; ++i) worst = std::max(worst, std::abs(out[i] - series[i]));
        ++cases;
      }
    }
  }
  return {worst < 1e-9, Format("windows {5, 7, 11}, %.0f (polyorder, degree) cases, max interior error %.2e", cases,
                               worst)};
}

// --------------------------------------------------------- point-cloud bound

// Depth map of one yawed cuboid on the ground, ray-cast independently of the
// library.
Outcome PointCloudBound() {
  const camera::ImageSize size{1242, 375};
  const auto k = camera::CameraIntrinsics::centered(pipeline::kDatasetFocal, size);
  const double length = 4.5, width = 1.8, height = 1.5, cam_h = 1.65;
  const double diagonal = std::sqrt(length * length + width * width + height * height);
  std::mt19937 rng(29);
  std::uniform_real_distribution<double> depth(10.0, 80.0), lateral(-6.0, 6.0), yaw(-std::numbers::pi, std::numbers::pi);
  int within = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    // Center in camera coordinates (x right, y down, z forward).
    const double cz = depth(rng), cx = lateral(rng) * cz / 40.0, cy = cam_h - height / 2;
    const double th = yaw(rng), ct = std::cos(th), st = std::sin(th);
    camera::DepthMap d(size.width, size.height);
    camera::PixelMask mask(size.width, size.height);
    for (int v = 0; v < size.height; ++v) {
      for (int u = 0; u < size.width; ++u) {
        const double dir[3] = {(u - k.cu) / k.fu, (v - k.cv) / k.fv, 1.0};
        // Into the box frame: rotate about y by -th around the center.
        const double o[3] = {ct * -cx - st * -cz, -cy, st * -cx + ct * -cz};
        const double r[3] = {ct * dir[0] - st * dir[2], dir[1], st * dir[0] + ct * dir[2]};
        const double half[3] = {width / 2, height / 2, length / 2};
        double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
        bool hit = true;
        for (int a = 0; a < 3 && hit; ++a) {
          if (std::abs(r[a]) < 1e-15) {
            hit = std::abs(o[a]) <= half[a];
            continue;
          }
          double ta = (-half[a] - o[a]) / r[a], tb = (half[a] - o[a]) / r[a];
          if (ta > tb) std::swap(ta, tb);
          t0 = std::max(t0, ta);
          t1 = std::min(t1, tb);
          hit = t0 <= t1;
        }
        if (hit && t0 > 0.0) {
          d.at(u, v) = t0;  // z component of dir is 1
          mask.set(u, v, true);
        }
      }
    }
    const auto cloud = camera::backproject_masked(d, mask, k, 120.0);
    if (cloud.empty()) continue;
    const camera::Point3 e = camera::estimate_position(cloud);
    const double err = std::sqrt((e.x - cx) * (e.x - cx) + (e.y - cy) * (e.y - cy) + (e.z - cz) * (e.z - cz));
    worst = std::max(worst, err);
    if (err < diagonal) ++within;
  }
  return {within == 100, Format("%.0f/100 estimates within the %.2f m diagonal, worst %.2f m", within, diagonal, worst)};
}

// ------------------------------------------------------- calibration closure

Outcome CalibrationClosure() {
  const camera::ImageSize size{1242, 375};
  double worst = 0.0;
  for (double f : {500.0, 720.0, 1000.0}) {
    for (double pitch : {0.02, 0.05, 0.1}) {
      const auto k = camera::CameraIntrinsics::centered(f, size);
      const auto [left, right] = camera::render_ground_lanes(k, pitch, 1.65, -1.85, 1.85);
      try {
        const auto cal = camera::calibrate_from_lanes(left, right, 3.7, 1.65, size);
        worst = std::max(worst, std::abs(cal.intrinsics.fu - f) / f);
      } catch (const std::exception&) {
        worst = std::numeric_limits<double>::infinity();
      }
    }
  }
  return {worst < 0.01,
          Format("f in {500, 720, 1000} x pitch in {0.02, 0.05, 0.1} rad, max relative error %.2e", worst)};
}

// ----------------------------------------------------- end-to-end synthetic

Outcome EndToEnd() {
  const fs::path dir = fs::temp_directory_path() / "crashscene_acceptance_e2e";
  fs::remove_all(dir);
  const auto start = Clock::now();
  pipeline::SceneScript script;
  script.frames = 50;
  script.ego.speed = 20.0;
  pipeline::ScriptVehicle lead;
  lead.id = 1;
  lead.motion.x = 40.0;
  lead.motion.speed = 20.0;
  lead.motion.accel = -4.0;
  lead.motion.accel_frame = 10;
  script.vehicles.push_back(lead);
  const auto k = camera::CameraIntrinsics::centered(pipeline::kDatasetFocal, script.image);
  Outcome out;
  try {
    const auto truth = pipeline::generate_synthetic(script, k, dir / "in");
    const pipeline::PipelineConfig config;  // dataset-default intrinsics
    const auto r = pipeline::run_pipeline(dir / "in", config, dir / "a.json");
    pipeline::run_pipeline(dir / "in", config, dir / "b.json");
    const bool same = io::read_text(dir / "a.json") == io::read_text(dir / "b.json");
    const bool label = r.build.categories.size() == 1 && r.build.categories[0] == AgentCategory::kD0T1;
    double total = 0.0;
    int n = 0;
    for (const auto& g : truth.ground_truth) {
      const auto* p = r.agents.empty() ? nullptr : r.agents[0].at_frame(g.frame);
      total += p ? std::hypot(p->x - g.x, p->y - g.y) : 1e9;
      ++n;
    }
    const double mean = n ? total / n : 1e9;
    const double secs = Seconds(start);
    out.pass = label && same && mean < 1.0 && secs < 60.0 && r.agents.size() == 1;
    out.detail = Format("mean error %.3f m over %.0f frames, ", mean, n) + (label ? "D0T1" : "wrong label") +
                 (same ? ", byte-identical re-run" : ", re-run differs") + Format(", %.1f s", secs);
  } catch (const std::exception& e) {
    out = {false, std::string("error: ") + e.what()};
  }
  fs::remove_all(dir);
  return out;
}

// -------------------------------------------------------- taxonomy totality

using trajectory::Trajectory;
constexpr double kRate = 10.0;

Trajectory StraightEgo(double speed, int frames) {
  Trajectory t;
  for (int f = 0; f < frames; ++f) {
    t.poses.push_back({f, f / kRate, speed * f / kRate, 0.0, 0.0});
    t.speeds.push_back(speed);
  }
  return t;
}

Trajectory Agent(int id, double x0, double y0, double vx, int first, int last) {
  Trajectory t;
  t.vehicle_id = id;
  for (int f = first; f <= last; ++f) {
    t.poses.push_back({f, f / kRate, x0 + vx * (f - first) / kRate, y0, vx >= 0 ? 0.0 : std::numbers::pi});
    t.speeds.push_back(std::abs(vx));
  }
  return t;
}

Outcome TaxonomyTotality() {
  scenario::ClassifyOptions options;
  options.frame_rate = kRate;
  const std::set<AgentCategory> labels(kAgentCategories.begin(), kAgentCategories.end());

  std::mt19937 rng(31);
  std::uniform_real_distribution<double> ego_speed(0.0, 30.0), lon0(-40.0, 120.0), lat0(-8.0, 8.0), speed(0.0, 35.0);
  int total = 0, labelled = 0;
  std::set<AgentCategory> seen;
  while (total < 500) {
    const Trajectory ego = StraightEgo(ego_speed(rng), 50);
    const double v = rng() % 2 ? -speed(rng) : speed(rng);
    const double x0 = lon0(rng), y0 = lat0(rng);
    Trajectory agent;
    agent.vehicle_id = 1;
    for (const auto& e : ego.poses) {
      const double x = x0 + v * e.t, lon = x - e.x;
      if (lon > 2.0 && lon < 80.0 && std::abs(y0) < lon) {
        agent.poses.push_back({e.frame, e.t, x, y0, v >= 0 ? 0.0 : std::numbers::pi});
        agent.speeds.push_back(std::abs(v));
      }
    }
    if (agent.poses.size() < 2) continue;
    ++total;
    try {
      const AgentCategory c = scenario::classify_agent(agent, ego, options);
      if (labels.count(c)) {
        ++labelled;
        seen.insert(c);
      }
    } catch (const std::exception&) {
    }
  }

  const Trajectory ego = StraightEgo(20.0, 60);
  const std::vector<std::pair<Trajectory, AgentCategory>> canonical = {
      {Agent(1, 25, 0, 15, 0, 59), AgentCategory::kD0T1},       {Agent(2, 58, 3.7, 28, 30, 59), AgentCategory::kD0T2},
      {Agent(4, 130, 0, 5, 20, 59), AgentCategory::kD0T3},      {Agent(5, 160, 3.7, -20, 0, 38), AgentCategory::kD1T1},
      {Agent(6, 150, 0, -5, 0, 59), AgentCategory::kD1T2},      {Agent(7, 100, 3.7, -20, 10, 33), AgentCategory::kD1T3},
      {Agent(8, 158, 0, -20, 40, 59), AgentCategory::kD1T4},
  };
  int correct = 0;
  for (const auto& [agent, want] : canonical) correct += scenario::classify_agent(agent, ego, options) == want;
  return {labelled == 500 && correct == 7,
          Format("%.0f/500 random agents labelled (%.0f distinct labels), %.0f/7 canonical examples correct", labelled,
                 static_cast<double>(seen.size()), correct)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"Projection round trip", ProjectionRoundTrip},
      {"Hungarian optimality", HungarianOptimality},
      {"CLEAR-MOT hand oracle", ClearMotOracle},
      {"Step-back synchronization", StepBackSynchronization},
      {"Savitzky-Golay polynomial reproduction", SavitzkyGolayReproduction},
      {"Point-cloud position bound", PointCloudBound},
      {"Calibration closure", CalibrationClosure},
      {"End-to-end synthetic closure", EndToEnd},
      {"Taxonomy totality", TaxonomyTotality},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s  %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed;
}
