#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "etd/fhgraph/graph.hpp"
#include "json.hpp"

namespace etd::synth {

// Label rule constants. Speed classes follow {stopped, accelerate,
// slow-down, no-change}; direction classes {left turn, right turn, left lane
// change, right lane change, no-change}.
inline constexpr double kStoppedSpeed = 0.5;
inline constexpr double kSpeedDelta = 0.5;
inline constexpr double kHeadingDeltaDeg = 15.0;
inline constexpr double kLateralShift = 0.5;

// Generator kinematics.
inline constexpr double kArena = 20.0;
inline constexpr double kStepDt = 0.1;
inline constexpr double kAccel = 1.0;
inline constexpr double kTurnDeg = 30.0;
inline constexpr double kLaneWidth = 1.0;
inline constexpr int kTrafficFeatureDim = 14;
inline constexpr const char* kTrafficGenerator = "traffic-v1";

enum SpeedClass { kStopped = 0, kAccelerate = 1, kSlowDown = 2, kSpeedSame = 3 };
enum DirClass { kLeftTurn = 0, kRightTurn = 1, kLeftLane = 2, kRightLane = 3, kStraight = 4 };

struct TrafficScenarioConfig {
  std::size_t n_vehicles = 10;
  std::size_t n_static = 0;  // map elements are opt-in; without them every direction is no-change
  std::size_t n_timesteps = 8;
  double interaction_radius = 3.0;
  std::size_t feature_dim = kTrafficFeatureDim;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::ordered_json to_json(const TrafficScenarioConfig& c);

struct VehicleState {
  double x = 0.0, y = 0.0;
  double heading = 0.0;  // radians
  double speed = 0.0;
};

struct VehicleTrack {
  std::string entity;
  int regime = kSpeedSame;        // speed regime the vehicle keeps
  std::vector<VehicleState> states;  // n_timesteps + 1; the last one is label-only future
};

// Static map element; vehicles within the interaction radius of one execute
// its maneuver on their next step (kStraight = plain lane element).
struct MapElement {
  std::string entity;
  double x = 0.0, y = 0.0;
  int maneuver = kStraight;
};

struct TrafficScene {
  TrafficScenarioConfig config;
  fhg::FullHistoryGraph graph;
  std::vector<VehicleTrack> tracks;
  std::vector<MapElement> elements;
};

// Label of a step from the ground-truth state now and one step later.
fhg::DualLabel traffic_label(const VehicleState& now, const VehicleState& next);

// Vehicles move with a constant speed regime; maneuvers come from the nearest
// map element in range, which only intra edges reveal. Step 0 is unmasked
// because the speed class needs one step of history.
TrafficScene gen_traffic(const TrafficScenarioConfig& cfg);

nlohmann::ordered_json traffic_metadata(const TrafficScene& scene);

}  // namespace etd::synth
