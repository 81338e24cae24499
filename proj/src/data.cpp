#include "g2k/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "g2k/error.hpp"

namespace g2k::data {
namespace {

constexpr double kPi = std::numbers::pi;

double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * kPi);  // [-pi, pi]
  if (a <= -kPi) a += 2.0 * kPi;
  return a;
}

template <typename T>
bool parse_number(const std::string& tok, T& out) {
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return res.ec == std::errc() && res.ptr == tok.data() + tok.size();
}

std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

Vec2 vislet_of(const TrackPoint& p) {
  if (!p.pan) return {};
  return {std::cos(*p.pan), std::sin(*p.pan)};
}

std::size_t SceneBatch::obs_len() const {
  return windows.empty() ? 0 : windows.front().obs.size();
}

std::size_t SceneBatch::pred_len() const {
  return windows.empty() ? 0 : windows.front().target.size();
}

bool SceneBatch::has_vislets() const {
  return !windows.empty() &&
         std::all_of(windows.begin(), windows.end(),
                     [](const TrajectoryWindow& w) { return w.has_vislets(); });
}

std::vector<TrackPoint> parse_dataset(std::istream& in) {
  std::vector<TrackPoint> points;
  std::set<std::pair<std::int64_t, std::int64_t>> keys;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream fields(line);
    std::vector<std::string> tok;
    for (std::string t; fields >> t;) tok.push_back(t);
    if (tok.empty()) continue;

    auto bad = [&](const std::string& why) {
      fail(ErrorKind::kParse,
           "line " + std::to_string(line_no) + ": " + why);
    };
    if (tok.size() != 4 && tok.size() != 5) {
      bad("expected 4 or 5 columns (frame_id ped_id x y [pan]), got " +
          std::to_string(tok.size()));
    }
    TrackPoint p;
    if (!parse_number(tok[0], p.frame_id)) bad("bad frame_id '" + tok[0] + "'");
    if (!parse_number(tok[1], p.ped_id)) bad("bad ped_id '" + tok[1] + "'");
    if (!parse_number(tok[2], p.x) || !std::isfinite(p.x)) {
      bad("bad x '" + tok[2] + "'");
    }
    if (!parse_number(tok[3], p.y) || !std::isfinite(p.y)) {
      bad("bad y '" + tok[3] + "'");
    }
    if (tok.size() == 5) {
      double pan = 0.0;
      if (!parse_number(tok[4], pan) || !std::isfinite(pan)) {
        bad("bad pan '" + tok[4] + "'");
      }
      p.pan = (pan > -kPi && pan <= kPi) ? pan : wrap_angle(pan);
    }
    if (!keys.insert({p.frame_id, p.ped_id}).second) {
      fail(ErrorKind::kIntegrity,
           "line " + std::to_string(line_no) + ": duplicate (frame " +
               std::to_string(p.frame_id) + ", ped " +
               std::to_string(p.ped_id) + ")");
    }
    points.push_back(p);
  }
  std::sort(points.begin(), points.end(),
            [](const TrackPoint& a, const TrackPoint& b) {
              return std::tie(a.ped_id, a.frame_id) <
                     std::tie(b.ped_id, b.frame_id);
            });
  return points;
}

std::vector<TrackPoint> load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open dataset '" + path + "'");
  return parse_dataset(in);
}

void write_dataset(std::ostream& out, const std::vector<TrackPoint>& points) {
  for (const auto& p : points) {
    out << p.frame_id << '\t' << p.ped_id << '\t' << format_number(p.x) << '\t'
        << format_number(p.y);
    if (p.pan) out << '\t' << format_number(*p.pan);
    out << '\n';
  }
}

void save_dataset(const std::string& path,
                  const std::vector<TrackPoint>& points) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write dataset '" + path + "'");
  write_dataset(out, points);
}

std::int64_t infer_stride(const std::vector<TrackPoint>& points) {
  std::int64_t stride = 0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    if (points[i].ped_id != points[i - 1].ped_id) continue;
    const auto d = points[i].frame_id - points[i - 1].frame_id;
    if (d > 0 && (stride == 0 || d < stride)) stride = d;
  }
  return stride == 0 ? 1 : stride;
}

std::vector<SceneBatch> make_windows(const std::vector<TrackPoint>& points,
                                     const WindowOptions& options) {
  if (options.obs_len < 2) fail(ErrorKind::kConfig, "obs_len must be >= 2");
  if (options.pred_len < 1) fail(ErrorKind::kConfig, "pred_len must be >= 1");
  if (options.capacity < 1) fail(ErrorKind::kConfig, "capacity must be >= 1");
  if (options.shift < 1) fail(ErrorKind::kConfig, "shift must be >= 1");

  std::vector<TrackPoint> sorted = points;
  std::sort(sorted.begin(), sorted.end(),
            [](const TrackPoint& a, const TrackPoint& b) {
              return std::tie(a.ped_id, a.frame_id) <
                     std::tie(b.ped_id, b.frame_id);
            });
  const std::int64_t stride = infer_stride(sorted);
  const std::size_t span = options.obs_len + options.pred_len;
  std::int64_t first_frame = 0;
  if (!sorted.empty()) {
    first_frame = std::min_element(sorted.begin(), sorted.end(),
                                   [](const auto& a, const auto& b) {
                                     return a.frame_id < b.frame_id;
                                   })->frame_id;
  }

  std::map<std::int64_t, std::vector<TrajectoryWindow>> by_start;
  std::size_t begin = 0;
  while (begin < sorted.size()) {
    std::size_t end = begin;
    while (end < sorted.size() && sorted[end].ped_id == sorted[begin].ped_id) {
      ++end;
    }
    for (std::size_t i = begin; i + span <= end; ++i) {
      const std::int64_t f0 = sorted[i].frame_id;
      if (((f0 - first_frame) / stride) % static_cast<std::int64_t>(options.shift) != 0 ||
          (f0 - first_frame) % stride != 0) {
        continue;
      }
      bool contiguous = true;
      for (std::size_t k = 1; k < span && contiguous; ++k) {
        contiguous = sorted[i + k].frame_id == f0 + static_cast<std::int64_t>(k) * stride;
      }
      if (!contiguous) continue;
      TrajectoryWindow w;
      w.ped_id = sorted[i].ped_id;
      w.obs.assign(sorted.begin() + i, sorted.begin() + i + options.obs_len);
      w.target.assign(sorted.begin() + i + options.obs_len,
                      sorted.begin() + i + span);
      if (std::all_of(w.obs.begin(), w.obs.end(),
                      [](const TrackPoint& p) { return p.pan.has_value(); })) {
        for (const auto& p : w.obs) w.vislets.push_back(vislet_of(p));
      }
      by_start[f0].push_back(std::move(w));
    }
    begin = end;
  }

  std::vector<SceneBatch> batches;
  for (auto& [f0, windows] : by_start) {
    for (std::size_t at = 0; at < windows.size(); at += options.capacity) {
      SceneBatch b;
      b.meta.dataset = options.dataset;
      b.meta.frame_stride = stride;
      const auto stop = std::min(windows.size(), at + options.capacity);
      b.windows.assign(std::make_move_iterator(windows.begin() + at),
                       std::make_move_iterator(windows.begin() + stop));
      batches.push_back(std::move(b));
    }
  }
  return batches;
}

std::string to_string(SyntheticScenario::Kind kind) {
  switch (kind) {
    case SyntheticScenario::Kind::kConstantVelocity:
      return "constant_velocity";
    case SyntheticScenario::Kind::kCrossingPair:
      return "crossing_pair";
    case SyntheticScenario::Kind::kGroupWalk:
      return "group_walk";
  }
  return "constant_velocity";
}

SyntheticScenario SyntheticScenario::parse(const std::string& text) {
  SyntheticScenario s;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      fail(ErrorKind::kParse, "scenario line " + std::to_string(line_no) +
                                  ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    auto num = [&](auto& out) {
      if (!parse_number(value, out)) {
        fail(ErrorKind::kParse, "scenario line " + std::to_string(line_no) +
                                    ": bad value for " + key);
      }
    };
    if (key == "kind") {
      if (value == "constant_velocity") s.kind = Kind::kConstantVelocity;
      else if (value == "crossing_pair") s.kind = Kind::kCrossingPair;
      else if (value == "group_walk") s.kind = Kind::kGroupWalk;
      else fail(ErrorKind::kParse, "unknown scenario kind '" + value + "'");
    } else if (key == "n_peds") num(s.n_peds);
    else if (key == "speed_min") num(s.speed_min);
    else if (key == "speed_max") num(s.speed_max);
    else if (key == "noise") num(s.noise);
    else if (key == "seed") num(s.seed);
    else if (key == "length") num(s.length);
    else if (key == "heading") num(s.heading);
    else if (key == "turn_rate") num(s.turn_rate);
    else if (key == "dt") num(s.dt);
    else if (key == "frame_stride") num(s.frame_stride);
    else fail(ErrorKind::kParse, "unknown scenario key '" + key + "'");
  }
  if (s.kind == Kind::kCrossingPair) s.n_peds = 2;
  if (s.n_peds < 1 || s.length < 2 || s.speed_min < 0.0 ||
      s.speed_max < s.speed_min || s.noise < 0.0 || s.dt <= 0.0 ||
      s.frame_stride < 1) {
    fail(ErrorKind::kConfig, "invalid scenario parameters");
  }
  return s;
}

SyntheticScenario SyntheticScenario::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open scenario '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::vector<TrackPoint> synthesize_tracks(const SyntheticScenario& sc) {
  std::mt19937_64 rng(sc.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  auto speed = [&] { return uniform(sc.speed_min, sc.speed_max); };
  auto heading = [&] {
    return std::isnan(sc.heading) ? uniform(-kPi, kPi) : sc.heading;
  };

  // positions[p][t] and headings[p][t] before noise
  const int n = sc.n_peds;
  const int len = sc.length;
  std::vector<std::vector<Vec2>> pos(n, std::vector<Vec2>(len));
  std::vector<std::vector<double>> dir(n, std::vector<double>(len));

  switch (sc.kind) {
    case SyntheticScenario::Kind::kConstantVelocity: {
      for (int p = 0; p < n; ++p) {
        // A fixed heading lines the walkers up side by side from x = 0.
        Vec2 start{0.0, static_cast<double>(p)};
        if (std::isnan(sc.heading)) start = {uniform(-5.0, 5.0), uniform(-5.0, 5.0)};
        const double h = heading();
        const double step = speed() * sc.dt;
        const Vec2 d{std::cos(h), std::sin(h)};
        for (int t = 0; t < len; ++t) {
          pos[p][t] = {start.x + t * step * d.x, start.y + t * step * d.y};
          dir[p][t] = h;
        }
      }
      break;
    }
    case SyntheticScenario::Kind::kCrossingPair: {
      const Vec2 meet{uniform(-2.0, 2.0), uniform(-2.0, 2.0)};
      const double base = heading();
      const double mid = 0.5 * (len - 1);
      for (int p = 0; p < n; ++p) {
        const double h = base + p * 0.5 * kPi;
        const double step = speed() * sc.dt;
        for (int t = 0; t < len; ++t) {
          const double s = (t - mid) * step;
          pos[p][t] = {meet.x + s * std::cos(h), meet.y + s * std::sin(h)};
          dir[p][t] = h;
        }
      }
      break;
    }
    case SyntheticScenario::Kind::kGroupWalk: {
      const Vec2 centre{uniform(-3.0, 3.0), uniform(-3.0, 3.0)};
      const double h0 = heading();
      const double v = speed();
      for (int p = 0; p < n; ++p) {
        const double lateral = (p - 0.5 * (n - 1)) * 0.7 + uniform(-0.1, 0.1);
        const double step = v * sc.dt * (1.0 + uniform(-0.05, 0.05));
        Vec2 c = centre;
        for (int t = 0; t < len; ++t) {
          const double h = h0 + sc.turn_rate * t;
          pos[p][t] = {c.x - lateral * std::sin(h), c.y + lateral * std::cos(h)};
          dir[p][t] = h;
          c.x += step * std::cos(h);
          c.y += step * std::sin(h);
        }
      }
      break;
    }
  }

  std::vector<TrackPoint> points;
  points.reserve(static_cast<std::size_t>(n) * len);
  for (int p = 0; p < n; ++p) {
    for (int t = 0; t < len; ++t) {
      TrackPoint tp;
      tp.frame_id = static_cast<std::int64_t>(t) * sc.frame_stride;
      tp.ped_id = p + 1;
      tp.x = pos[p][t].x;
      tp.y = pos[p][t].y;
      if (sc.noise > 0.0) {
        tp.x += sc.noise * noise(rng);
        tp.y += sc.noise * noise(rng);
      }
      tp.pan = wrap_angle(dir[p][t]);
      points.push_back(tp);
    }
  }
  return points;
}

std::vector<SceneBatch> synthesize(const SyntheticScenario& scenario,
                                   const WindowOptions& options) {
  WindowOptions opts = options;
  if (opts.dataset.empty() || opts.dataset == "dataset") {
    opts.dataset = "synthetic:" + to_string(scenario.kind);
  }
  auto batches = make_windows(synthesize_tracks(scenario), opts);
  for (auto& b : batches) b.meta.seconds_per_step = scenario.dt;
  return batches;
}

TemporalGraph build_temporal_graph(const SceneBatch& batch, std::size_t t) {
  if (t >= batch.obs_len()) {
    fail(ErrorKind::kContract, "build_temporal_graph: step " +
                                   std::to_string(t) +
                                   " outside observation range");
  }
  TemporalGraph g;
  g.step = t;
  const std::size_t n = batch.size();
  g.nodes.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& w = batch.windows[i];
    GraphNode node;
    node.ped_id = w.ped_id;
    node.position = {w.obs[t].x, w.obs[t].y};
    node.vislet = w.has_vislets() ? w.vislets[t] : Vec2{};
    g.nodes.push_back(node);
    if (t >= 1) g.temporal_edges.emplace_back(i, i);
  }
  g.adjacency = ad::Matrix::Zero(static_cast<Eigen::Index>(n),
                                 static_cast<Eigen::Index>(n));
  g.edge_sets.resize(n);
  return g;
}

}  // namespace g2k::data
