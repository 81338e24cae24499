#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "g2k/autodiff.hpp"

namespace g2k::data {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Vec2&) const = default;
};

struct TrackPoint {
  std::int64_t frame_id = 0;
  std::int64_t ped_id = 0;
  double x = 0.0;  // meters, world frame
  double y = 0.0;
  std::optional<double> pan;  // head yaw in (-pi, pi]

  bool operator==(const TrackPoint&) const = default;
};

// Unit gaze vector for a pan angle; zero when the pan is absent.
Vec2 vislet_of(const TrackPoint& p);

struct TrajectoryWindow {
  std::int64_t ped_id = 0;
  std::vector<TrackPoint> obs;
  std::vector<TrackPoint> target;
  // One per observed step when every observed point carries a pan.
  std::vector<Vec2> vislets;

  bool has_vislets() const { return !vislets.empty(); }
};

struct BatchMeta {
  std::string dataset;
  std::int64_t frame_stride = 1;
  double seconds_per_step = 0.4;
  std::string note = "world coordinates in meters; homography pre-applied";
};

struct SceneBatch {
  std::vector<TrajectoryWindow> windows;
  std::optional<ad::Matrix> scene_image;  // grayscale, intensities in [0,1]
  BatchMeta meta;

  std::size_t size() const { return windows.size(); }
  std::size_t obs_len() const;
  std::size_t pred_len() const;
  bool has_vislets() const;
};

struct GraphNode {
  std::int64_t ped_id = 0;
  Vec2 position;
  Vec2 vislet;
};

// Per-step pedestrian graph. Adjacency and edge sets start empty and are
// filled in by the relational kernel.
struct TemporalGraph {
  std::size_t step = 0;
  std::vector<GraphNode> nodes;
  std::vector<std::pair<std::size_t, std::size_t>> temporal_edges;
  ad::Matrix adjacency;
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> edge_sets;
};

struct SyntheticScenario {
  enum class Kind { kConstantVelocity, kCrossingPair, kGroupWalk };

  Kind kind = Kind::kConstantVelocity;
  int n_peds = 5;
  double speed_min = 0.8;  // m/s
  double speed_max = 1.4;
  double noise = 0.0;  // position noise sigma, meters
  std::uint64_t seed = 0;
  int length = 20;  // samples per track
  double heading = std::numeric_limits<double>::quiet_NaN();  // NaN: random
  double turn_rate = 0.05;  // group_walk heading change, rad per step
  double dt = 0.4;
  std::int64_t frame_stride = 10;

  // key=value lines; unknown keys are rejected.
  static SyntheticScenario parse(const std::string& text);
  static SyntheticScenario load(const std::string& path);
};

std::string to_string(SyntheticScenario::Kind kind);

struct WindowOptions {
  std::size_t obs_len = 8;
  std::size_t pred_len = 12;
  std::size_t capacity = 32;  // global neighborhood size
  std::size_t shift = 1;      // window start spacing, in strides
  std::string dataset = "dataset";
};

std::vector<TrackPoint> parse_dataset(std::istream& in);
std::vector<TrackPoint> load_dataset(const std::string& path);
void write_dataset(std::ostream& out, const std::vector<TrackPoint>& points);
void save_dataset(const std::string& path,
                  const std::vector<TrackPoint>& points);

// Smallest positive frame step between consecutive samples of a pedestrian;
// 1 when no pedestrian has two samples.
std::int64_t infer_stride(const std::vector<TrackPoint>& points);

std::vector<SceneBatch> make_windows(const std::vector<TrackPoint>& points,
                                     const WindowOptions& options);

std::vector<TrackPoint> synthesize_tracks(const SyntheticScenario& scenario);
std::vector<SceneBatch> synthesize(const SyntheticScenario& scenario,
                                   const WindowOptions& options);

TemporalGraph build_temporal_graph(const SceneBatch& batch, std::size_t t);

}  // namespace g2k::data
