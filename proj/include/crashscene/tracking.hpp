#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace crashscene::tracking {

struct BBox2D {
  double u_min = 0.0;
  double v_min = 0.0;
  double u_max = 0.0;
  double v_max = 0.0;

  double area() const { return (u_max - u_min) * (v_max - v_min); }
  bool valid() const { return u_min < u_max && v_min < v_max; }
  friend bool operator==(const BBox2D&, const BBox2D&) = default;
};

struct Detection {
  int frame = 0;
  BBox2D bbox;
  double score = 1.0;
  std::optional<std::string> mask_file;
  std::string label = "car";
};

// Intersection over union; 0 for disjoint boxes.
double iou(const BBox2D& a, const BBox2D& b);

// Dense row-major cost matrix.
class CostMatrix {
 public:
  CostMatrix() = default;
  CostMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  CostMatrix(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return rows_ == 0 || cols_ == 0; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

struct Assignment {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (row, col), sorted by row
  double total_cost = 0.0;
};

// Minimum-cost one-to-one assignment covering min(rows, cols) pairs
// (Hungarian method). Rectangular inputs are padded with 10 * max|c| + 1.
// Among equal-cost optima the lexicographically smallest column choice per
// row wins, so the result is deterministic.
Assignment solve_assignment(const CostMatrix& cost);

struct FrameAssociation {
  std::vector<std::pair<std::size_t, std::size_t>> matches;  // (track, detection)
  std::vector<std::size_t> unmatched_tracks;
  std::vector<std::size_t> unmatched_detections;
};

// Hungarian matching on 1 - IOU; matches below iou_threshold are split.
FrameAssociation associate_frame(const std::vector<BBox2D>& tracks,
                                 const std::vector<BBox2D>& detections, double iou_threshold);

enum class TrackState { kTentative, kActive, kLost, kDead };

const char* to_string(TrackState state);

struct Track {
  int id = 0;
  TrackState state = TrackState::kTentative;
  int hits = 0;
  int misses = 0;
  bool confirmed = false;  // reached kActive at least once
  std::map<int, Detection> history;

  const Detection& last() const { return history.rbegin()->second; }
};

struct TrackerConfig {
  int birth_hits = 3;
  int death_misses = 5;
  double iou_threshold = 0.3;

  void validate() const;
};

// Owns the live track set of one scene. Feed frames in increasing order.
class TrackSet {
 public:
  explicit TrackSet(TrackerConfig config = {});

  // Associates `detections` (all from `frame`) with live tracks and applies
  // the birth/death counter rules. Returns the association used.
  FrameAssociation step(int frame, const std::vector<Detection>& detections);

  const std::vector<Track>& tracks() const { return tracks_; }
  const TrackerConfig& config() const { return config_; }

 private:
  TrackerConfig config_;
  std::vector<Track> tracks_;
  int next_id_ = 1;
  std::optional<int> last_frame_;
};

}  // namespace crashscene::tracking
