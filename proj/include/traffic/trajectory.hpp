#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "traffic/errors.hpp"
#include "traffic/sim.hpp"
#include "traffic/util.hpp"

namespace traffic {

/// One vehicle-tick of a trajectory log. Rows are decision-time snapshots:
/// lane, position and speed as the tick began, plus the action and blocked
/// flags decided during it. The post-action speed shows up as the next
/// tick's speed.
struct TrajectoryRow {
  uint64_t tick = 0;
  int vehicle_id = 0;
  int lane = 0;
  double patch_pos = 0.0;
  double speed = 0.0;
  Action applied = Action::no_action;
  BlockedFlags flags;

  bool operator==(const TrajectoryRow&) const = default;
};

inline constexpr const char* kTrajectoryHeader =
    "tick,vehicle_id,lane,patch_pos,speed,applied_action,blocked_flags";

struct TickSnapshot {
  uint64_t tick = 0;
  struct Entry {
    int lane;
    double patch_pos;
    double speed;
  };
  std::vector<Entry> vehicles;
};

inline TickSnapshot snapshot_world(const World& world) {
  TickSnapshot s;
  s.tick = world.tick();
  s.vehicles.reserve(world.vehicles().size());
  for (const Vehicle& v : world.vehicles())
    s.vehicles.push_back({v.lane, v.patch_pos, v.speed});
  return s;
}

inline void append_rows(std::vector<TrajectoryRow>& rows, const TickSnapshot& pre,
                        const StepOutcome& out) {
  for (size_t id = 0; id < pre.vehicles.size(); ++id) {
    const auto& e = pre.vehicles[id];
    rows.push_back(TrajectoryRow{pre.tick, static_cast<int>(id), e.lane, e.patch_pos, e.speed,
                                 out.vehicles[id].applied, out.vehicles[id].blocked});
  }
}

inline std::string format_row(const TrajectoryRow& r) {
  char buf[160];
  snprintf(buf, sizeof(buf), "%llu,%d,%d,%.4f,%.4f,%s,%d%d%d",
           static_cast<unsigned long long>(r.tick), r.vehicle_id, r.lane, r.patch_pos, r.speed,
           action_name(r.applied), r.flags.front ? 1 : 0, r.flags.left ? 1 : 0,
           r.flags.right ? 1 : 0);
  return buf;
}

inline std::string trajectory_to_csv(const std::vector<TrajectoryRow>& rows) {
  std::string out(kTrajectoryHeader);
  out.push_back('\n');
  for (const auto& r : rows) {
    out += format_row(r);
    out.push_back('\n');
  }
  return out;
}

inline void write_trajectory_csv(const std::string& path, const std::vector<TrajectoryRow>& rows) {
  write_file_atomic(path, trajectory_to_csv(rows));
}

inline std::vector<TrajectoryRow> parse_trajectory_csv(const std::string& content,
                                                       const std::string& name) {
  std::vector<TrajectoryRow> rows;
  size_t line_no = 0;
  size_t pos = 0;
  while (pos < content.size()) {
    size_t eol = content.find('\n', pos);
    if (eol == std::string::npos) eol = content.size();
    std::string_view line = trim(std::string_view(content).substr(pos, eol - pos));
    pos = eol + 1;
    ++line_no;
    if (line.empty()) continue;
    if (line_no == 1) {
      if (line != kTrajectoryHeader)
        throw ParseError(name, line_no, "expected trajectory header");
      continue;
    }
    auto fields = split(line, ',');
    if (fields.size() != 7) throw ParseError(name, line_no, "expected 7 columns");
    TrajectoryRow r;
    auto tick = parse_u64(fields[0]);
    auto vid = parse_int(fields[1]);
    auto lane = parse_int(fields[2]);
    auto ppos = parse_double(fields[3]);
    auto speed = parse_double(fields[4]);
    auto act = action_from_name(trim(fields[5]));
    std::string_view flags = trim(fields[6]);
    if (!tick || !vid || !lane || !ppos || !speed || !act)
      throw ParseError(name, line_no, "malformed numeric field");
    if (flags.size() != 3 || flags.find_first_not_of("01") != std::string_view::npos)
      throw ParseError(name, line_no, "blocked_flags must be three binary digits");
    r.tick = *tick;
    r.vehicle_id = static_cast<int>(*vid);
    r.lane = static_cast<int>(*lane);
    r.patch_pos = *ppos;
    r.speed = *speed;
    r.applied = *act;
    r.flags = BlockedFlags{flags[0] == '1', flags[1] == '1', flags[2] == '1'};
    rows.push_back(r);
  }
  return rows;
}

inline std::vector<TrajectoryRow> read_trajectory_csv(const std::string& path) {
  return parse_trajectory_csv(read_file(path), path);
}

}  // namespace traffic
