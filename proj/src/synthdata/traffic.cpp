#include "etd/synthdata/traffic.hpp"

#include <cmath>
#include <numbers>
#include <optional>

#include "etd/error.hpp"
#include "etd/numerics/rng.hpp"

namespace etd::synth {
namespace {

constexpr double deg(double d) { return d * std::numbers::pi / 180.0; }

double wrap_angle(double a) {
  a = std::fmod(a + std::numbers::pi, 2.0 * std::numbers::pi);
  if (a < 0.0) a += 2.0 * std::numbers::pi;
  return a - std::numbers::pi;
}

double dist(double ax, double ay, double bx, double by) { return std::hypot(ax - bx, ay - by); }

// Nearest map element within the radius; ties go to the lower index.
std::optional<std::size_t> contact(const VehicleState& s, const std::vector<MapElement>& elements, double r) {
  std::optional<std::size_t> best;
  double best_d = r;
  for (std::size_t k = 0; k < elements.size(); ++k) {
    const double d = dist(s.x, s.y, elements[k].x, elements[k].y);
    if (d <= best_d && (!best || d < best_d)) {
      best = k;
      best_d = d;
    }
  }
  return best;
}

VehicleState advance(const VehicleState& s, int regime, int maneuver) {
  VehicleState n = s;
  if (regime == kAccelerate) n.speed += kAccel;
  if (regime == kSlowDown) n.speed -= kAccel;
  if (maneuver == kLeftTurn) n.heading = wrap_angle(s.heading + deg(kTurnDeg));
  if (maneuver == kRightTurn) n.heading = wrap_angle(s.heading - deg(kTurnDeg));
  double lateral = 0.0;
  if (maneuver == kLeftLane) lateral = kLaneWidth;
  if (maneuver == kRightLane) lateral = -kLaneWidth;
  n.x = s.x + kStepDt * n.speed * std::cos(n.heading) - lateral * std::sin(s.heading);
  n.y = s.y + kStepDt * n.speed * std::sin(n.heading) + lateral * std::cos(s.heading);
  return n;
}

}  // namespace

void TrafficScenarioConfig::validate() const {
  if (n_vehicles == 0) throw ConfigError("n_vehicles must be positive");
  if (n_timesteps < 2) throw ConfigError("n_timesteps must be at least 2");
  if (!(interaction_radius > 0.0) || !std::isfinite(interaction_radius)) {
    throw ConfigError("interaction_radius must be positive");
  }
  if (feature_dim < kTrafficFeatureDim) {
    throw ConfigError("feature_dim must be at least " + std::to_string(kTrafficFeatureDim));
  }
}

nlohmann::ordered_json to_json(const TrafficScenarioConfig& c) {
  return {{"n_vehicles", c.n_vehicles},   {"n_static", c.n_static},
          {"n_timesteps", c.n_timesteps}, {"interaction_radius", c.interaction_radius},
          {"feature_dim", c.feature_dim}, {"seed", c.seed}};
}

fhg::DualLabel traffic_label(const VehicleState& now, const VehicleState& next) {
  fhg::DualLabel l;
  const double dv = next.speed - now.speed;
  if (next.speed < kStoppedSpeed) {
    l.speed = kStopped;
  } else if (dv > kSpeedDelta) {
    l.speed = kAccelerate;
  } else if (dv < -kSpeedDelta) {
    l.speed = kSlowDown;
  } else {
    l.speed = kSpeedSame;
  }
  const double dh = wrap_angle(next.heading - now.heading);
  // displacement across the current heading, left positive
  const double lateral = std::cos(now.heading) * (next.y - now.y) - std::sin(now.heading) * (next.x - now.x);
  if (dh > deg(kHeadingDeltaDeg)) {
    l.dir = kLeftTurn;
  } else if (dh < -deg(kHeadingDeltaDeg)) {
    l.dir = kRightTurn;
  } else if (lateral > kLateralShift) {
    l.dir = kLeftLane;
  } else if (lateral < -kLateralShift) {
    l.dir = kRightLane;
  } else {
    l.dir = kStraight;
  }
  return l;
}

TrafficScene gen_traffic(const TrafficScenarioConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const double r = cfg.interaction_radius;
  const std::size_t T = cfg.n_timesteps;

  TrafficScene scene;
  scene.config = cfg;
  for (std::size_t k = 0; k < cfg.n_static; ++k) {
    MapElement e;
    e.entity = "map" + std::to_string(k);
    e.x = rng.uniform(0.0, kArena);
    e.y = rng.uniform(0.0, kArena);
    e.maneuver = static_cast<int>(rng.index(5));
    scene.elements.push_back(e);
  }

  for (std::size_t i = 0; i < cfg.n_vehicles; ++i) {
    VehicleTrack tr;
    tr.entity = "veh" + std::to_string(i);
    tr.regime = static_cast<int>(rng.index(4));
    VehicleState s;
    s.x = rng.uniform(0.0, kArena);
    s.y = rng.uniform(0.0, kArena);
    s.heading = rng.uniform(-std::numbers::pi, std::numbers::pi);
    const double top = static_cast<double>(T) * kAccel;
    switch (tr.regime) {
      case kStopped: s.speed = 0.0; break;
      case kAccelerate: s.speed = rng.uniform(2.0, 6.0); break;
      // starts fast enough to stay above the stopped threshold
      case kSlowDown: s.speed = rng.uniform(top + 1.0, top + 5.0); break;
      default: s.speed = rng.uniform(2.0, top + 5.0); break;
    }
    tr.states.push_back(s);
    for (std::size_t t = 0; t < T; ++t) {
      const auto c = contact(tr.states.back(), scene.elements, r);
      const int m = c ? scene.elements[*c].maneuver : kStraight;
      tr.states.push_back(advance(tr.states.back(), tr.regime, m));
    }
    scene.tracks.push_back(std::move(tr));
  }

  std::vector<fhg::NodeRecord> nodes;
  std::vector<fhg::Edge> edges;
  for (const auto& e : scene.elements) {
    std::vector<double> f(cfg.feature_dim, 0.0);
    f[0] = e.x / kArena;
    f[1] = e.y / kArena;
    f[7 + static_cast<std::size_t>(e.maneuver)] = 1.0;
    f[13] = 1.0;
    nodes.push_back({fhg::NodeId::fixed(e.entity), std::move(f), std::nullopt, false});
  }
  const double peers = cfg.n_vehicles > 1 ? static_cast<double>(cfg.n_vehicles - 1) : 1.0;
  for (std::size_t t = 0; t < T; ++t) {
    const auto tt = static_cast<std::uint32_t>(t);
    for (std::size_t i = 0; i < scene.tracks.size(); ++i) {
      const auto& tr = scene.tracks[i];
      const auto& s = tr.states[t];
      std::vector<double> f(cfg.feature_dim, 0.0);
      f[0] = s.x / kArena;
      f[1] = s.y / kArena;
      f[2] = std::cos(s.heading);
      f[3] = std::sin(s.heading);
      f[4] = s.speed / 4.0;
      f[5] = f[4] * f[2];
      f[6] = f[4] * f[3];
      const auto c = contact(s, scene.elements, r);
      if (c) {
        f[7] = 1.0;
        f[8] = (scene.elements[*c].x - s.x) / r;
        f[9] = (scene.elements[*c].y - s.y) / r;
        edges.push_back({fhg::NodeId::fixed(scene.elements[*c].entity), fhg::NodeId::dynamic(tr.entity, tt),
                         fhg::EdgeFamily::Intra, "lane_contact"});
      }
      for (const auto& e : scene.elements) f[10] += dist(s.x, s.y, e.x, e.y) <= r ? 1.0 : 0.0;
      for (std::size_t j = 0; j < scene.tracks.size(); ++j) {
        if (j == i) continue;
        const auto& o = scene.tracks[j].states[t];
        if (dist(s.x, s.y, o.x, o.y) > r) continue;
        f[11] += 1.0 / peers;
        edges.push_back({fhg::NodeId::dynamic(scene.tracks[j].entity, tt), fhg::NodeId::dynamic(tr.entity, tt),
                         fhg::EdgeFamily::Intra, "proximity"});
      }
      f[12] = 1.0;
      nodes.push_back({fhg::NodeId::dynamic(tr.entity, tt), std::move(f), traffic_label(s, tr.states[t + 1]), t > 0});
      if (t > 0) {
        edges.push_back({fhg::NodeId::dynamic(tr.entity, tt - 1), fhg::NodeId::dynamic(tr.entity, tt),
                         fhg::EdgeFamily::Inter, std::nullopt});
      }
    }
  }
  scene.graph = fhg::FullHistoryGraph::build(std::move(nodes), std::move(edges));
  return scene;
}

nlohmann::ordered_json traffic_metadata(const TrafficScene& scene) {
  std::size_t labeled = 0;
  for (const auto& n : scene.graph.nodes()) labeled += n.mask;
  nlohmann::ordered_json j;
  j["generator"] = kTrafficGenerator;
  j["config"] = to_json(scene.config);
  j["label_rules"] = {{"stopped_speed", kStoppedSpeed},
                      {"speed_delta", kSpeedDelta},
                      {"heading_delta_deg", kHeadingDeltaDeg},
                      {"lateral_shift", kLateralShift},
                      {"speed_classes", {"stopped", "accelerate", "slow-down", "no-change"}},
                      {"dir_classes", {"left-turn", "right-turn", "left-lane-change", "right-lane-change", "no-change"}},
                      {"masked_out", "timestep 0 (no history for the speed class)"}};
  j["kinematics"] = {{"arena", kArena},     {"dt", kStepDt},       {"accel", kAccel},
                     {"turn_deg", kTurnDeg}, {"lane_width", kLaneWidth}};
  j["counts"] = {{"nodes", scene.graph.num_nodes()},
                 {"intra", scene.graph.intra_edges().size()},
                 {"inter", scene.graph.inter_edges().size()},
                 {"labeled", labeled}};
  return j;
}

}  // namespace etd::synth
