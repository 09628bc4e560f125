#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "traffic/errors.hpp"
#include "traffic/sim.hpp"
#include "traffic/trajectory.hpp"
#include "traffic/util.hpp"

namespace traffic::patterns {

/// Road geometry needed to re-derive catchment occupancy from logged rows.
struct Geometry {
  int lanes = 7;
  int road_patches = 700;
  int safety_ahead = 6;
  int safety_side = 2;
  int vehicle_length = 4;

  static Geometry from_sim(const SimConfig& cfg) {
    return {cfg.lanes, cfg.road_patches, cfg.safety_ahead, cfg.safety_side, cfg.vehicle_length};
  }
};

/// One congestion incident, annotated as {B, S, D, C}.
struct CongestionEvent {
  int agent_id = 0;
  uint64_t start_tick = 0;
  bool fully_blocked = false;  // B: front, left and right all blocked at onset
  double entry_speed = 0.0;    // S: mph when the front catchment became occupied
  double deceleration = 0.0;   // D: speed lost within the next half second, floor 0
  bool coop = false;           // C: a policy-controlled vehicle occupies a catchment

  bool operator==(const CongestionEvent&) const = default;
};

struct AnalysisResult {
  std::vector<CongestionEvent> events;
  int dropped_truncated = 0;  // onset too close to the log end to annotate
};

/// Row lookup tables for one log.
class LogIndex {
 public:
  explicit LogIndex(std::span<const TrajectoryRow> rows) {
    for (const TrajectoryRow& r : rows) {
      per_agent_[r.vehicle_id].push_back(&r);
      by_tick_[r.tick].push_back(&r);
    }
    for (auto& [agent, series] : per_agent_) {
      std::stable_sort(series.begin(), series.end(), [](const TrajectoryRow* a,
                                                        const TrajectoryRow* b) {
        return a->tick < b->tick;
      });
      for (size_t i = 1; i < series.size(); ++i)
        if (series[i]->tick == series[i - 1]->tick)
          throw ParseError("trajectory", 0,
                           "duplicate tick " + std::to_string(series[i]->tick) + " for vehicle " +
                               std::to_string(agent));
    }
  }

  const std::vector<const TrajectoryRow*>* series(int agent) const {
    auto it = per_agent_.find(agent);
    return it == per_agent_.end() ? nullptr : &it->second;
  }

  const TrajectoryRow* row_at(int agent, uint64_t tick) const {
    const auto* s = series(agent);
    if (!s) return nullptr;
    auto it = std::lower_bound(s->begin(), s->end(), tick,
                               [](const TrajectoryRow* r, uint64_t t) { return r->tick < t; });
    return (it != s->end() && (*it)->tick == tick) ? *it : nullptr;
  }

  std::span<const TrajectoryRow* const> rows_at(uint64_t tick) const {
    auto it = by_tick_.find(tick);
    if (it == by_tick_.end()) return {};
    return {it->second.data(), it->second.size()};
  }

 private:
  std::map<int, std::vector<const TrajectoryRow*>> per_agent_;
  std::unordered_map<uint64_t, std::vector<const TrajectoryRow*>> by_tick_;
};

namespace detail {

inline int64_t wrap_cell(int64_t patch, int road_patches) {
  int64_t m = patch % road_patches;
  return m < 0 ? m + road_patches : m;
}

}  // namespace detail

/// Onset ticks for one agent: the front catchment transitions from free to
/// occupied. A log that starts inside a blockage counts as an onset at its
/// first row; re-triggers inside an open event are ignored.
inline std::vector<uint64_t> detect_events(const LogIndex& index, int agent_id) {
  std::vector<uint64_t> onsets;
  const auto* series = index.series(agent_id);
  if (!series) return onsets;
  bool prev_front = false;
  for (const TrajectoryRow* r : *series) {
    if (r->flags.front && !prev_front) onsets.push_back(r->tick);
    prev_front = r->flags.front;
  }
  return onsets;
}

inline std::vector<uint64_t> detect_events(std::span<const TrajectoryRow> rows, int agent_id) {
  return detect_events(LogIndex(rows), agent_id);
}

/// Annotate one detected onset. B comes from the ego's logged flags; C is
/// re-derived from the logged positions of every vehicle at the onset tick,
/// so it reflects row-level geometry. Returns nothing when the log ends
/// before onset + half a second.
inline std::optional<CongestionEvent> annotate_event(const LogIndex& index, int agent_id,
                                                     uint64_t onset_tick, const Geometry& geom,
                                                     double tick_seconds,
                                                     const std::set<int>& policy_ids) {
  const TrajectoryRow* onset = index.row_at(agent_id, onset_tick);
  if (onset == nullptr) throw std::invalid_argument("annotate_event: onset row not found");

  const int window = static_cast<int>(std::ceil(0.5 / tick_seconds));
  CongestionEvent ev;
  ev.agent_id = agent_id;
  ev.start_tick = onset_tick;
  ev.fully_blocked = onset->flags.front && onset->flags.left && onset->flags.right;
  ev.entry_speed = onset->speed;

  // min speed over the next `window` ticks; every tick must be present
  double min_speed = std::numeric_limits<double>::infinity();
  for (int k = 1; k <= window; ++k) {
    const TrajectoryRow* r = index.row_at(agent_id, onset_tick + static_cast<uint64_t>(k));
    if (r == nullptr) return std::nullopt;
    min_speed = std::min(min_speed, r->speed);
  }
  ev.deceleration = std::max(0.0, ev.entry_speed - min_speed);

  // catchment cells of the ego at onset: front span plus both side spans
  std::set<std::pair<int, int64_t>> catchment;
  const int64_t f = static_cast<int64_t>(std::floor(onset->patch_pos));
  for (int d = 1; d <= geom.safety_ahead; ++d)
    catchment.insert({onset->lane, detail::wrap_cell(f + d, geom.road_patches)});
  for (int side : {-1, 1}) {
    const int lane = onset->lane + side;
    if (lane < 0 || lane >= geom.lanes) continue;
    for (int d = -(geom.vehicle_length - 1) - geom.safety_side; d <= geom.safety_side; ++d)
      catchment.insert({lane, detail::wrap_cell(f + d, geom.road_patches)});
  }
  for (const TrajectoryRow* r : index.rows_at(onset_tick)) {
    if (r->vehicle_id == agent_id || policy_ids.count(r->vehicle_id) == 0) continue;
    const int64_t front = static_cast<int64_t>(std::floor(r->patch_pos));
    for (int k = 0; k < geom.vehicle_length && !ev.coop; ++k)
      if (catchment.count({r->lane, detail::wrap_cell(front - k, geom.road_patches)}))
        ev.coop = true;
    if (ev.coop) break;
  }
  return ev;
}

inline std::optional<CongestionEvent> annotate_event(std::span<const TrajectoryRow> rows,
                                                     int agent_id, uint64_t onset_tick,
                                                     const Geometry& geom, double tick_seconds,
                                                     const std::set<int>& policy_ids) {
  return annotate_event(LogIndex(rows), agent_id, onset_tick, geom, tick_seconds, policy_ids);
}

/// Detect and annotate congestion incidents for every policy-controlled
/// agent in one log.
inline AnalysisResult analyze_rows(std::span<const TrajectoryRow> rows, const Geometry& geom,
                                   double tick_seconds, const std::set<int>& policy_ids) {
  AnalysisResult res;
  LogIndex index(rows);
  for (int agent : policy_ids) {
    for (uint64_t onset : detect_events(index, agent)) {
      auto ev = annotate_event(index, agent, onset, geom, tick_seconds, policy_ids);
      if (ev)
        res.events.push_back(*ev);
      else
        ++res.dropped_truncated;
    }
  }
  return res;
}

inline constexpr int kHistogramBins = 16;  // 5 mph bins over [0, 80]

/// Counts of D in [0,5), [5,10), ..., [75,80]; 80 lands in the last bin.
inline std::array<uint64_t, kHistogramBins> decel_histogram(
    std::span<const CongestionEvent> events) {
  std::array<uint64_t, kHistogramBins> bins{};
  for (const CongestionEvent& e : events) {
    int bin = static_cast<int>(std::floor(e.deceleration / 5.0));
    bin = std::clamp(bin, 0, kHistogramBins - 1);
    bins[static_cast<size_t>(bin)]++;
  }
  return bins;
}

/// Ordinary least squares slope of y over x.
inline double regression_slope(std::span<const std::pair<double, double>> points) {
  if (points.size() < 2) throw std::invalid_argument("regression needs at least two points");
  double sx = 0, sy = 0;
  for (const auto& [x, y] : points) {
    sx += x;
    sy += y;
  }
  const double n = static_cast<double>(points.size());
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0;
  for (const auto& [x, y] : points) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("regression needs at least two distinct x values");
  return sxy / sxx;
}

inline double regression_intercept(std::span<const std::pair<double, double>> points,
                                   double slope) {
  double sx = 0, sy = 0;
  for (const auto& [x, y] : points) {
    sx += x;
    sy += y;
  }
  const double n = static_cast<double>(points.size());
  return sy / n - slope * sx / n;
}

/// Aggregated incidents for one (strategy, n_agents) arrangement.
struct ReportRow {
  std::string strategy;
  int n_agents = 0;
  uint64_t n_cp = 0;
  uint64_t n_full_block = 0;
  uint64_t n_coop = 0;
  std::array<uint64_t, kHistogramBins> bins{};
};

inline ReportRow summarize_row(std::string strategy, int n_agents,
                               std::span<const CongestionEvent> events) {
  ReportRow row;
  row.strategy = std::move(strategy);
  row.n_agents = n_agents;
  row.n_cp = events.size();
  for (const CongestionEvent& e : events) {
    if (e.fully_blocked) ++row.n_full_block;
    if (e.coop) ++row.n_coop;
  }
  row.bins = decel_histogram(events);
  uint64_t total = 0;
  for (uint64_t b : row.bins) total += b;
  if (total != row.n_cp) throw std::logic_error("histogram bins do not partition the events");
  return row;
}

// ---- CSV output ----

inline std::string events_csv(std::span<const CongestionEvent> events) {
  std::string out = "agent_id,start_tick,B,S,D,C\n";
  for (const CongestionEvent& e : events) {
    char buf[128];
    snprintf(buf, sizeof(buf), "%d,%llu,%d,%.4f,%.4f,%d\n", e.agent_id,
             static_cast<unsigned long long>(e.start_tick), e.fully_blocked ? 1 : 0, e.entry_speed,
             e.deceleration, e.coop ? 1 : 0);
    out += buf;
  }
  return out;
}

inline void write_events_csv(const std::string& path, std::span<const CongestionEvent> events) {
  write_file_atomic(path, events_csv(events));
}

inline std::string report_csv(std::span<const ReportRow> rows) {
  std::string out = "strategy,n_agents,n_cp,n_full_block,n_coop\n";
  for (const ReportRow& r : rows) {
    char buf[160];
    snprintf(buf, sizeof(buf), "%s,%d,%llu,%llu,%llu\n", r.strategy.c_str(), r.n_agents,
             static_cast<unsigned long long>(r.n_cp),
             static_cast<unsigned long long>(r.n_full_block),
             static_cast<unsigned long long>(r.n_coop));
    out += buf;
  }
  return out;
}

inline void write_report_csv(const std::string& path, std::span<const ReportRow> rows) {
  write_file_atomic(path, report_csv(rows));
}

inline std::string histogram_csv(const std::array<uint64_t, kHistogramBins>& bins) {
  std::string out = "bin_lo,bin_hi,count\n";
  for (int i = 0; i < kHistogramBins; ++i) {
    char buf[64];
    snprintf(buf, sizeof(buf), "%d,%d,%llu\n", i * 5, (i + 1) * 5,
             static_cast<unsigned long long>(bins[static_cast<size_t>(i)]));
    out += buf;
  }
  return out;
}

inline void write_histogram_csv(const std::string& path,
                                const std::array<uint64_t, kHistogramBins>& bins) {
  write_file_atomic(path, histogram_csv(bins));
}

}  // namespace traffic::patterns
