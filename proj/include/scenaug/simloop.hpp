#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scenaug/scenario.hpp"

namespace scenaug {

struct SimConfig {
  double dt = 0.1;
  double horizon_s = 8.0;
  double replan_s = 1.0;
  double duration_s = 15.0;

  // IDM
  double a_max = 1.5;
  double b = 2.0;
  double delta = 4.0;
  double time_headway = 1.5;
  double s_min = 2.0;

  std::vector<double> speed_fractions{0.2, 0.4, 0.6, 0.8, 1.0};
  std::vector<double> lateral_offsets{-4, -3, -2, -1, 0, 1, 2, 3, 4};
  double lateral_transition_s = 2.0;  ///< offset change spread over this many seconds at target speed
  double min_transition_m = 5.0;

  // score
  double ttc_threshold_s = 0.95;
  double max_abs_accel = 2.4;
  double max_abs_jerk = 4.13;
  double w_ttc = 5.0;
  double w_progress = 5.0;
  double w_comfort = 2.0;

  void validate() const;
};

/// Ego reference path: the start lane followed through connectors.
struct Route {
  std::vector<std::string> ids;
  Polyline path;
  std::vector<double> cumulative;  ///< arc length at each path vertex
  double speed_limit = 0.0;

  [[nodiscard]] double length() const { return cumulative.empty() ? 0.0 : cumulative.back(); }
  /// Point at arc length s with lateral offset d (positive = left). Extrapolates past either end.
  [[nodiscard]] Vec2 point(double s, double d = 0.0) const;
  [[nodiscard]] double heading(double s) const;
  /// Arc length and signed lateral offset of the closest path point.
  [[nodiscard]] std::pair<double, double> project(Vec2 p) const;
};

/// Throws RouteError when the ego has no usable lane.
Route build_route(const Scenario& s);

struct EgoPose {
  double t = 0.0;
  Vec2 position;
  double heading = 0.0;
  double velocity = 0.0;
  double acceleration = 0.0;
  double s = 0.0;  ///< route arc length
  double d = 0.0;  ///< lateral offset from the route
};

struct Proposal {
  double speed_fraction = 1.0;
  double lateral_offset = 0.0;
  std::vector<EgoPose> trajectory;  ///< starts at the planning state, spaced dt
  bool collision = false;
  bool offroad = false;
  bool blocked = false;  ///< comes to rest behind a stationary obstacle
  double final_gap = std::numeric_limits<double>::infinity();  ///< to the leader at the last step
  double comfort_margin = 0.0;

  [[nodiscard]] bool feasible() const { return !collision && !offroad && !blocked; }
  [[nodiscard]] double progress() const { return trajectory.back().s - trajectory.front().s; }
};

/// IDM acceleration. `gap` may be infinite (free road).
double idm_acceleration(double v, double v0, double gap, double dv, const SimConfig& cfg);

/// Proposals from `start` at simulation time `start.t` (agents are extrapolated from t = 0).
std::vector<Proposal> generate_proposals(const Scenario& s, const Route& route, const EgoPose& start,
                                         const SimConfig& cfg = {});
/// Proposals from the scenario's initial ego state.
std::vector<Proposal> generate_proposals(const Scenario& s, const Route& route, const SimConfig& cfg = {});

/// Index of the best feasible proposal, or nullopt when none is feasible.
std::optional<size_t> select_proposal(const std::vector<Proposal>& proposals);

enum class SimEventKind { Collision, Offroad };
std::string_view to_string(SimEventKind k);

struct SimEvent {
  double t = 0.0;
  SimEventKind kind = SimEventKind::Collision;
  std::string agent_id;  ///< empty for offroad
};

struct AgentTrack {
  std::string id;
  double length = 0.0;
  double width = 0.0;
  double heading = 0.0;
  double velocity = 0.0;
  std::vector<Vec2> positions;  ///< one per trace sample
};

struct SimTrace {
  std::string scenario_id;
  double dt = 0.1;
  double ego_length = 0.0;
  double ego_width = 0.0;
  std::vector<EgoPose> ego;  ///< steps + 1 samples
  std::vector<AgentTrack> agents;
  std::vector<SimEvent> events;
  std::vector<std::string> plans;  ///< selection at each replan, e.g. "0.8/+1" or "NONE"

  [[nodiscard]] size_t steps() const { return ego.empty() ? 0 : ego.size() - 1; }
};

/// Deterministic closed-loop rollout of the full duration. Throws RouteError.
SimTrace run_closed_loop(const Scenario& s, const SimConfig& cfg = {});

struct DrivingScore {
  bool ttc_pass = true;
  double min_ttc_s = std::numeric_limits<double>::infinity();
  double progress_m = 0.0;
  double attainable_m = 0.0;
  double progress_ratio = 0.0;
  bool comfort_pass = true;
  double max_abs_accel = 0.0;
  double max_abs_jerk = 0.0;
  bool collision = false;
  bool offroad = false;
  double score = 0.0;
};

/// Distance covered by a free-road IDM rollout at the speed limit over the trace duration.
double attainable_progress(double v_initial, double speed_limit, double duration_s, const SimConfig& cfg = {});

DrivingScore driving_score(const SimTrace& trace, const Route& route, const SimConfig& cfg = {});

nlohmann::json trace_to_json(const SimTrace& trace);
nlohmann::json score_to_json(const DrivingScore& score);

}  // namespace scenaug
