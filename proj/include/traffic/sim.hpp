#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "traffic/errors.hpp"
#include "traffic/rng.hpp"

namespace traffic {

inline constexpr double kMphToMps = 0.44704;

enum class Action : int {
  accelerate = 0,
  decelerate = 1,
  go_left = 2,
  go_right = 3,
  no_action = 4,
};
inline constexpr int kNumActions = 5;

inline const char* action_name(Action a) {
  switch (a) {
    case Action::accelerate: return "accelerate";
    case Action::decelerate: return "decelerate";
    case Action::go_left: return "goLeft";
    case Action::go_right: return "goRight";
    case Action::no_action: return "noAction";
  }
  return "?";
}

inline std::optional<Action> action_from_name(std::string_view s) {
  for (int i = 0; i < kNumActions; ++i) {
    Action a = static_cast<Action>(i);
    if (s == action_name(a)) return a;
  }
  return std::nullopt;
}

inline Action random_action(Rng& rng) {
  return static_cast<Action>(rng.uniform_int(0, kNumActions - 1));
}

struct BlockedFlags {
  bool front = false;
  bool left = false;
  bool right = false;
  bool operator==(const BlockedFlags&) const = default;
};

struct SimConfig {
  int lanes = 7;
  int road_patches = 700;  // ring length in patches
  int n_vehicles = 20;
  int n_controllable = 0;  // policy-driven vehicles get the lowest ids
  int vehicle_length = 4;  // patches
  double tick_seconds = 0.1;
  double max_speed = 80.0;  // mph
  double accel_step = 2.0;  // mph per tick
  double patch_length = 5.0;  // meters
  int safety_ahead = 6;  // front catchment depth, patches
  int safety_side = 2;   // side catchment margin, patches
  double init_speed_min = 40.0;
  double init_speed_max = 80.0;
  uint64_t rng_seed = 0;

  void validate() const {
    if (lanes < 3) throw ConfigError("sim: lanes must be >= 3");
    if (road_patches < 1) throw ConfigError("sim: road_patches must be positive");
    if (n_vehicles < 1) throw ConfigError("sim: n_vehicles must be >= 1");
    if (n_controllable < 0 || n_controllable > n_vehicles)
      throw ConfigError("sim: n_controllable must be in [0, n_vehicles]");
    if (vehicle_length < 1) throw ConfigError("sim: vehicle_length must be >= 1");
    if (tick_seconds <= 0) throw ConfigError("sim: tick_seconds must be positive");
    if (max_speed <= 0) throw ConfigError("sim: max_speed must be positive");
    if (accel_step <= 0) throw ConfigError("sim: accel_step must be positive");
    if (patch_length <= 0) throw ConfigError("sim: patch_length must be positive");
    if (safety_ahead < 1) throw ConfigError("sim: safety_ahead must be >= 1");
    if (safety_side < 0) throw ConfigError("sim: safety_side must be >= 0");
    if (init_speed_min < 0 || init_speed_max > max_speed || init_speed_min > init_speed_max)
      throw ConfigError("sim: init speed range must satisfy 0 <= min <= max <= max_speed");
  }

  bool operator==(const SimConfig&) const = default;
};

struct Vehicle {
  int id = 0;
  int lane = 0;
  double patch_pos = 0.0;  // fractional front position on the ring
  double speed = 0.0;      // mph
  bool is_policy = false;
  int policy_index = -1;  // index into the per-tick action vector
  int length = 4;         // patches

  bool operator==(const Vehicle&) const = default;
};

struct ObservationSpec {
  int lanes_side = 3;
  int patches_ahead = 30;
  int patches_behind = 13;
  int temporal_window = 0;

  int grid_width() const { return 2 * lanes_side + 1; }
  int grid_rows() const { return patches_ahead + patches_behind; }
  int grid_cells() const { return grid_width() * grid_rows(); }

  void validate() const {
    if (lanes_side < 0) throw ConfigError("observation: lanes_side must be >= 0");
    if (patches_ahead < 0 || patches_behind < 0 || grid_rows() < 1)
      throw ConfigError("observation: patches_ahead + patches_behind must be >= 1");
    if (temporal_window < 0) throw ConfigError("observation: temporal_window must be >= 0");
  }

  bool operator==(const ObservationSpec&) const = default;
};

struct Observation {
  std::vector<double> values;  // cell speeds / max_speed, row-major
  double ego_speed = 0.0;      // mph
};

struct VehicleStep {
  Action applied = Action::no_action;
  double speed = 0.0;  // mph after this tick's decision
  BlockedFlags blocked;
  bool operator==(const VehicleStep&) const = default;
};

struct StepOutcome {
  uint64_t tick = 0;  // tick index that was executed
  std::vector<VehicleStep> vehicles;
  bool operator==(const StepOutcome&) const = default;
};

/// Ring-road micro-traffic world. Cell occupancy is tracked on an integer
/// patch grid; a vehicle with front position p covers patches
/// floor(p), floor(p)-1, ..., floor(p)-length+1 in its lane.
class World {
 public:
  World() = default;

  static World init(const SimConfig& cfg) {
    cfg.validate();
    // conservative packing rule: one lane must be able to hold every vehicle
    if (cfg.road_patches <= cfg.n_vehicles * cfg.vehicle_length)
      throw SetupError("cannot place vehicles: road_patches <= n_vehicles * vehicle_length");
    World w;
    w.cfg_ = cfg;
    w.rng_ = Rng(cfg.rng_seed);
    w.occ_.assign(static_cast<size_t>(cfg.lanes) * cfg.road_patches, -1);
    w.vehicles_.reserve(cfg.n_vehicles);
    for (int id = 0; id < cfg.n_vehicles; ++id) {
      Vehicle v;
      v.id = id;
      v.length = cfg.vehicle_length;
      v.is_policy = id < cfg.n_controllable;
      v.policy_index = v.is_policy ? id : -1;
      bool placed = false;
      for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
        v.lane = static_cast<int>(w.rng_.uniform_int(0, cfg.lanes - 1));
        v.patch_pos = static_cast<double>(w.rng_.uniform_int(0, cfg.road_patches - 1));
        placed = w.span_free(v);
      }
      if (!placed) throw SetupError("cannot place vehicles without overlap");
      v.speed = w.rng_.uniform(cfg.init_speed_min, cfg.init_speed_max);
      w.vehicles_.push_back(v);
      w.paint(w.vehicles_.back());
    }
    return w;
  }

  const SimConfig& config() const { return cfg_; }
  uint64_t tick() const { return tick_; }
  const std::vector<Vehicle>& vehicles() const { return vehicles_; }

  const Vehicle& vehicle(int id) const {
    if (id < 0 || id >= static_cast<int>(vehicles_.size()))
      throw std::out_of_range("unknown vehicle id " + std::to_string(id));
    return vehicles_[static_cast<size_t>(id)];
  }

  /// Test/setup hook: move a vehicle to an exact lane/position.
  void teleport(int id, int lane, double patch_pos) {
    Vehicle& v = vehicles_.at(static_cast<size_t>(id));
    unpaint(v);
    v.lane = lane;
    v.patch_pos = wrap_pos(patch_pos);
    paint_checked(v);
  }

  void set_speed(int id, double speed) {
    vehicles_.at(static_cast<size_t>(id)).speed = std::clamp(speed, 0.0, cfg_.max_speed);
  }

  /// Maximum speed achievable inside a cell: off-road 0, occupied cells hold
  /// the occupant's speed, empty cells the road limit.
  double cell_value(int lane, int64_t patch) const {
    if (lane < 0 || lane >= cfg_.lanes) return 0.0;
    int32_t id = occ_at(lane, wrap_cell(patch));
    if (id < 0) return cfg_.max_speed;
    return vehicles_[static_cast<size_t>(id)].speed;
  }

  Observation observe(int vehicle_id, const ObservationSpec& spec) const {
    spec.validate();
    const Vehicle& ego = vehicle(vehicle_id);
    Observation obs;
    obs.ego_speed = ego.speed;
    obs.values.resize(static_cast<size_t>(spec.grid_cells()));
    const int64_t f = front_cell(ego);
    size_t i = 0;
    for (int row = 0; row < spec.grid_rows(); ++row) {
      // rows run far-ahead -> far-behind; offset 0 is the ego front cell
      const int64_t offset = spec.patches_ahead - row;
      for (int col = 0; col < spec.grid_width(); ++col) {
        const int lane = ego.lane - spec.lanes_side + col;
        obs.values[i++] = cell_value(lane, f + offset) / cfg_.max_speed;
      }
    }
    return obs;
  }

  struct SafetyDecision {
    Action applied = Action::no_action;
    double speed_cap = 0.0;  // mph
    BlockedFlags blocked;
  };

  /// Collision-prevention filter. The front catchment caps speed to the
  /// nearest leading vehicle; an occupied or off-road target lane vetoes the
  /// lane change.
  SafetyDecision safety_filter(int vehicle_id, Action intended) const {
    const Vehicle& ego = vehicle(vehicle_id);
    SafetyDecision d;
    d.speed_cap = cfg_.max_speed;
    const int64_t f = front_cell(ego);
    for (int ahead = 1; ahead <= cfg_.safety_ahead; ++ahead) {
      int32_t id = occ_at(ego.lane, wrap_cell(f + ahead));
      if (id >= 0 && id != ego.id) {
        d.blocked.front = true;
        d.speed_cap = vehicles_[static_cast<size_t>(id)].speed;
        break;
      }
    }
    d.blocked.left = side_blocked(ego, ego.lane - 1);
    d.blocked.right = side_blocked(ego, ego.lane + 1);
    d.applied = intended;
    if ((intended == Action::go_left && d.blocked.left) ||
        (intended == Action::go_right && d.blocked.right))
      d.applied = Action::no_action;
    return d;
  }

  /// Advance one tick. Decisions run in ascending id order against the
  /// evolving state (ties in contested cells go to the lower id); positions
  /// advance afterwards in one sweep.
  StepOutcome step(const std::vector<Action>& policy_actions) {
    if (static_cast<int>(policy_actions.size()) != cfg_.n_controllable)
      throw std::invalid_argument("step: expected one action per controllable vehicle");
    StepOutcome out;
    out.tick = tick_;
    out.vehicles.resize(vehicles_.size());
    for (Vehicle& v : vehicles_) {
      const Action intended =
          v.is_policy ? policy_actions[static_cast<size_t>(v.policy_index)] : random_action(rng_);
      const SafetyDecision d = safety_filter(v.id, intended);
      double target = v.speed;
      if (d.applied == Action::accelerate) target += cfg_.accel_step;
      else if (d.applied == Action::decelerate) target -= cfg_.accel_step;
      v.speed = std::clamp(target, 0.0, std::min(cfg_.max_speed, d.speed_cap));
      if (d.applied == Action::go_left || d.applied == Action::go_right) {
        unpaint(v);
        v.lane += d.applied == Action::go_left ? -1 : 1;
        paint_checked(v);
      }
      out.vehicles[static_cast<size_t>(v.id)] = VehicleStep{d.applied, v.speed, d.blocked};
    }
    const double patches_per_mph = kMphToMps * cfg_.tick_seconds / cfg_.patch_length;
    for (Vehicle& v : vehicles_) unpaint(v);
    for (Vehicle& v : vehicles_) v.patch_pos = wrap_pos(v.patch_pos + v.speed * patches_per_mph);
    for (Vehicle& v : vehicles_) paint_checked(v);
    ++tick_;
    return out;
  }

  /// Exhaustive invariant check: pairwise-disjoint spans per lane and speed
  /// bounds. Throws std::logic_error on violation.
  void check_invariants() const {
    std::vector<std::vector<std::pair<int64_t, int>>> by_lane(static_cast<size_t>(cfg_.lanes));
    for (const Vehicle& v : vehicles_) {
      if (v.speed < 0.0 || v.speed > cfg_.max_speed)
        throw std::logic_error("speed out of bounds for vehicle " + std::to_string(v.id));
      if (v.lane < 0 || v.lane >= cfg_.lanes)
        throw std::logic_error("lane out of bounds for vehicle " + std::to_string(v.id));
      by_lane[static_cast<size_t>(v.lane)].emplace_back(front_cell(v), v.id);
    }
    for (auto& lane_vec : by_lane) {
      std::sort(lane_vec.begin(), lane_vec.end());
      const int n = static_cast<int>(lane_vec.size());
      for (int i = 0; i < n; ++i) {
        // the next vehicle ahead on the ring must clear this one's span
        const auto& [front, id] = lane_vec[static_cast<size_t>(i)];
        const auto& [next_front, next_id] = lane_vec[static_cast<size_t>((i + 1) % n)];
        const int len = vehicles_[static_cast<size_t>(next_id)].length;
        int64_t gap = next_front - front;
        if (i == n - 1) gap += cfg_.road_patches;  // wrap pair
        if (gap < len)
          throw std::logic_error("overlapping vehicles " + std::to_string(id) + " and " +
                                 std::to_string(next_id));
      }
    }
  }

  bool operator==(const World&) const = default;

 private:
  int64_t wrap_cell(int64_t patch) const {
    const int64_t p = cfg_.road_patches;
    int64_t m = patch % p;
    return m < 0 ? m + p : m;
  }

  double wrap_pos(double pos) const {
    const double p = static_cast<double>(cfg_.road_patches);
    if (pos >= p) pos -= p;
    if (pos < 0) pos += p;
    return pos;
  }

  int64_t front_cell(const Vehicle& v) const { return static_cast<int64_t>(std::floor(v.patch_pos)); }

  int32_t occ_at(int lane, int64_t cell) const {
    return occ_[static_cast<size_t>(lane) * cfg_.road_patches + static_cast<size_t>(cell)];
  }
  int32_t& occ_at(int lane, int64_t cell) {
    return occ_[static_cast<size_t>(lane) * cfg_.road_patches + static_cast<size_t>(cell)];
  }

  bool span_free(const Vehicle& v) const {
    const int64_t f = front_cell(v);
    for (int k = 0; k < v.length; ++k)
      if (occ_at(v.lane, wrap_cell(f - k)) >= 0) return false;
    return true;
  }

  void paint(const Vehicle& v) {
    const int64_t f = front_cell(v);
    for (int k = 0; k < v.length; ++k) occ_at(v.lane, wrap_cell(f - k)) = v.id;
  }

  void paint_checked(const Vehicle& v) {
    const int64_t f = front_cell(v);
    for (int k = 0; k < v.length; ++k) {
      int32_t& cell = occ_at(v.lane, wrap_cell(f - k));
      if (cell >= 0 && cell != v.id)
        throw std::logic_error("vehicle overlap between " + std::to_string(cell) + " and " +
                               std::to_string(v.id));
      cell = v.id;
    }
  }

  void unpaint(const Vehicle& v) {
    const int64_t f = front_cell(v);
    for (int k = 0; k < v.length; ++k) occ_at(v.lane, wrap_cell(f - k)) = -1;
  }

  // target-lane catchment: the ego span widened by safety_side patches on
  // both ends, checked in the adjacent lane
  bool side_blocked(const Vehicle& ego, int target_lane) const {
    if (target_lane < 0 || target_lane >= cfg_.lanes) return true;
    const int64_t f = front_cell(ego);
    for (int d = -(ego.length - 1) - cfg_.safety_side; d <= cfg_.safety_side; ++d) {
      int32_t id = occ_at(target_lane, wrap_cell(f + d));
      if (id >= 0 && id != ego.id) return true;
    }
    return false;
  }

  SimConfig cfg_;
  std::vector<Vehicle> vehicles_;
  std::vector<int32_t> occ_;
  uint64_t tick_ = 0;
  Rng rng_;
};

}  // namespace traffic
