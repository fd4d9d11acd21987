#include "scenaug/simloop.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>

#include <fmt/format.h>

#include "scenaug/errors.hpp"

namespace scenaug {

void SimConfig::validate() const {
  if (!(dt > 0.0)) throw ValidationError("dt must be positive");
  if (!(replan_s >= dt) || !(horizon_s >= replan_s)) throw ValidationError("need dt <= replan period <= horizon");
  if (!(duration_s > 0.0)) throw ValidationError("duration must be positive");
  if (!(a_max > 0.0 && b > 0.0 && delta > 0.0 && time_headway >= 0.0 && s_min >= 0.0)) {
    throw ValidationError("IDM parameters must be positive");
  }
  if (speed_fractions.empty() || lateral_offsets.empty()) throw ValidationError("proposal grid is empty");
  for (double f : speed_fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw ValidationError("speed fractions must lie in (0, 1]");
  }
  for (double o : lateral_offsets) {
    if (!(std::abs(o) <= 4.0)) throw ValidationError("lateral offsets are limited to 4 m");
  }
  if (!(w_ttc >= 0.0 && w_progress >= 0.0 && w_comfort >= 0.0) || w_ttc + w_progress + w_comfort <= 0.0) {
    throw ValidationError("score weights must be nonnegative with a positive sum");
  }
}

// ---------------------------------------------------------------------------
// Route

namespace {

size_t segment_for(const Route& r, double s) {
  const size_t n = r.path.size();
  if (s <= 0.0) return 0;
  if (s >= r.length()) return n - 2;
  const auto it = std::upper_bound(r.cumulative.begin(), r.cumulative.end(), s);
  return std::min(static_cast<size_t>(it - r.cumulative.begin()) - 1, n - 2);
}

}  // namespace

Vec2 Route::point(double s, double d) const {
  const size_t i = segment_for(*this, s);
  const Vec2 a = path[i], b = path[i + 1];
  const double seg = cumulative[i + 1] - cumulative[i];
  const Vec2 t = (b - a) / seg;
  return a + t * (s - cumulative[i]) + Vec2{-t.y, t.x} * d;
}

double Route::heading(double s) const {
  const size_t i = segment_for(*this, s);
  const Vec2 d = path[i + 1] - path[i];
  return std::atan2(d.y, d.x);
}

std::pair<double, double> Route::project(Vec2 p) const {
  const size_t n = path.size();
  double best = std::numeric_limits<double>::infinity();
  std::pair<double, double> out{0.0, 0.0};
  for (size_t i = 0; i + 1 < n; ++i) {
    const Vec2 a = path[i];
    const double seg = cumulative[i + 1] - cumulative[i];
    const Vec2 t = (path[i + 1] - a) / seg;
    double u = (p - a).dot(t);
    if (i > 0) u = std::max(u, 0.0);
    if (i + 2 < n) u = std::min(u, seg);
    const Vec2 foot = a + t * u;
    const double dist = distance(p, foot);
    if (dist < best) {
      best = dist;
      out = {cumulative[i] + u, t.cross(p - foot)};
    }
  }
  return out;
}

Route build_route(const Scenario& s) {
  const AgentState& ego = s.ego();
  if (s.lanes.empty()) throw RouteError("scenario has no lanes");

  std::string start;
  if (ego.lane_id) {
    if (!s.find_lane(*ego.lane_id) && !s.find_connector(*ego.lane_id)) {
      throw RouteError(fmt::format("ego lane '{}' does not exist", *ego.lane_id));
    }
    start = *ego.lane_id;
  } else {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& l : s.lanes) {
      const Polyline pts = sample_geometry(l.geometry);
      for (size_t i = 1; i < pts.size(); ++i) {
        const Vec2 d = pts[i] - pts[i - 1];
        const double len2 = d.dot(d);
        if (len2 <= 0.0) continue;
        const double t = std::clamp((ego.center - pts[i - 1]).dot(d) / len2, 0.0, 1.0);
        const double dist = distance(ego.center, pts[i - 1] + d * t);
        if (dist < best) {
          best = dist;
          start = l.id;
        }
      }
    }
  }

  Route r;
  std::set<std::string> seen;
  std::string current = start;
  auto append = [&](const LaneGeometry& g) {
    for (const Vec2& p : sample_geometry(g)) {
      if (!r.path.empty() && distance(r.path.back(), p) < 1e-6) continue;
      r.path.push_back(p);
    }
  };
  while (!current.empty() && seen.insert(current).second) {
    r.ids.push_back(current);
    if (const LaneConnector* c = s.find_connector(current)) {
      append(c->geometry);
      if (r.speed_limit <= 0.0) r.speed_limit = c->speed_limit;
      current = c->to_lane;
      continue;
    }
    const Lane* lane = s.find_lane(current);
    append(lane->geometry);
    if (r.speed_limit <= 0.0) r.speed_limit = lane->speed_limit;
    const LaneConnector* next = nullptr;
    for (const auto& c : s.connectors) {
      if (c.from_lane != current || seen.contains(c.id)) continue;
      const bool better = !next || (c.turn_type == TurnType::Straight && next->turn_type != TurnType::Straight) ||
                          ((c.turn_type == TurnType::Straight) == (next->turn_type == TurnType::Straight) && c.id < next->id);
      if (better) next = &c;
    }
    current = next ? next->id : "";
  }
  if (r.path.size() < 2) throw RouteError(fmt::format("route from '{}' has no length", start));
  if (!(r.speed_limit > 0.0)) throw RouteError(fmt::format("lane '{}' has no positive speed limit", start));
  r.cumulative.assign(r.path.size(), 0.0);
  for (size_t i = 1; i < r.path.size(); ++i) r.cumulative[i] = r.cumulative[i - 1] + distance(r.path[i - 1], r.path[i]);
  return r;
}

// ---------------------------------------------------------------------------
// Planner

double idm_acceleration(double v, double v0, double gap, double dv, const SimConfig& cfg) {
  double a = 1.0 - std::pow(v / v0, cfg.delta);
  if (std::isfinite(gap)) {
    const double s_star = cfg.s_min + std::max(0.0, v * cfg.time_headway + v * dv / (2.0 * std::sqrt(cfg.a_max * cfg.b)));
    const double g = std::max(gap, 0.01);
    a -= (s_star / g) * (s_star / g);
  }
  return cfg.a_max * a;
}

namespace {

using Box = std::array<Vec2, 4>;

bool boxes_overlap(const Box& a, const Box& b) {
  auto separated_on = [](const Box& p, const Box& q) {
    for (size_t i = 0; i < 4; ++i) {
      const Vec2 e = p[(i + 1) % 4] - p[i];
      const Vec2 n{-e.y, e.x};
      double pmin = std::numeric_limits<double>::infinity(), pmax = -pmin, qmin = pmin, qmax = -pmin;
      for (const Vec2& v : p) {
        pmin = std::min(pmin, n.dot(v));
        pmax = std::max(pmax, n.dot(v));
      }
      for (const Vec2& v : q) {
        qmin = std::min(qmin, n.dot(v));
        qmax = std::max(qmax, n.dot(v));
      }
      if (pmax <= qmin || qmax <= pmin) return true;
    }
    return false;
  };
  return !separated_on(a, b) && !separated_on(b, a);
}

struct AgentSnapshot {
  const AgentState* agent = nullptr;
  Box box;
  double s_lo = 0.0, s_hi = 0.0, d_lo = 0.0, d_hi = 0.0;
  double s_center = 0.0;
  double v_along = 0.0;
};

Vec2 agent_position(const AgentState& a, double t) { return a.center + direction(a.heading) * (a.velocity * t); }

std::vector<AgentSnapshot> snapshot(const Scenario& s, const Route& route, double t) {
  std::vector<AgentSnapshot> out;
  for (const auto& a : s.agents) {
    if (a.type == AgentType::EgoVehicle) continue;
    AgentSnapshot snap;
    snap.agent = &a;
    const Vec2 c = agent_position(a, t);
    snap.box = oriented_box(c, a.heading, a.length, a.width);
    snap.s_lo = snap.d_lo = std::numeric_limits<double>::infinity();
    snap.s_hi = snap.d_hi = -std::numeric_limits<double>::infinity();
    for (const Vec2& p : snap.box) {
      const auto [ps, pd] = route.project(p);
      snap.s_lo = std::min(snap.s_lo, ps);
      snap.s_hi = std::max(snap.s_hi, ps);
      snap.d_lo = std::min(snap.d_lo, pd);
      snap.d_hi = std::max(snap.d_hi, pd);
    }
    snap.s_center = route.project(c).first;
    snap.v_along = a.velocity * std::cos(a.heading - route.heading(snap.s_center));
    out.push_back(snap);
  }
  return out;
}

struct Leader {
  double gap = std::numeric_limits<double>::infinity();
  double velocity = 0.0;
};

Leader find_leader(const std::vector<AgentSnapshot>& agents, double s, double d, double ego_length, double ego_width) {
  Leader best;
  for (const auto& a : agents) {
    if (a.d_hi <= d - 0.5 * ego_width || a.d_lo >= d + 0.5 * ego_width) continue;
    if (a.s_hi <= s) continue;
    const double gap = a.s_lo - (s + 0.5 * ego_length);
    if (gap < best.gap) best = {gap, a.v_along};
  }
  return best;
}

struct MapCheck {
  std::vector<const Area*> allowed;
  bool active = false;

  explicit MapCheck(const Scenario& s) {
    for (const auto& a : s.areas) {
      if (a.kind == AreaKind::Drivable) active = true;
      if (a.kind == AreaKind::Drivable || a.kind == AreaKind::Carpark) allowed.push_back(&a);
    }
  }

  [[nodiscard]] bool inside(const Box& box) const {
    if (!active) return true;
    return std::all_of(box.begin(), box.end(), [&](Vec2 p) {
      return std::any_of(allowed.begin(), allowed.end(), [&](const Area* a) { return point_in_polygon(p, a->boundary); });
    });
  }
};

int step_count(double span, double dt) { return static_cast<int>(std::lround(span / dt)); }

}  // namespace

std::vector<Proposal> generate_proposals(const Scenario& s, const Route& route, const EgoPose& start,
                                         const SimConfig& cfg) {
  cfg.validate();
  const AgentState& ego = s.ego();
  const int horizon = step_count(cfg.horizon_s, cfg.dt);
  std::vector<std::vector<AgentSnapshot>> agents;
  agents.reserve(static_cast<size_t>(horizon) + 1);
  for (int k = 0; k <= horizon; ++k) agents.push_back(snapshot(s, route, start.t + k * cfg.dt));
  const MapCheck map(s);

  std::vector<Proposal> out;
  for (double fraction : cfg.speed_fractions) {
    for (double offset : cfg.lateral_offsets) {
      Proposal p;
      p.speed_fraction = fraction;
      p.lateral_offset = offset;
      const double v0 = fraction * route.speed_limit;
      const double span = std::max(cfg.lateral_transition_s * v0, cfg.min_transition_m);
      auto lateral = [&](double s_now) {
        const double u = std::clamp((s_now - start.s) / span, 0.0, 1.0);
        const double d = start.d + (offset - start.d) * u * u * (3.0 - 2.0 * u);
        const double slope = (offset - start.d) * 6.0 * u * (1.0 - u) / span;
        return std::pair{d, slope};
      };

      p.trajectory.reserve(static_cast<size_t>(horizon) + 1);
      p.trajectory.push_back(start);
      double s_now = start.s, v = start.velocity, d = start.d;
      double max_a = 0.0, max_j = 0.0, prev_a = std::numeric_limits<double>::quiet_NaN();
      Leader last;
      for (int k = 1; k <= horizon; ++k) {
        const Leader lead = find_leader(agents[k - 1], s_now, offset, ego.length, ego.width);
        const double a = idm_acceleration(v, v0, lead.gap, v - lead.velocity, cfg);
        const double v_next = std::max(0.0, v + a * cfg.dt);
        s_now += 0.5 * (v + v_next) * cfg.dt;
        const double a_eff = (v_next - v) / cfg.dt;
        v = v_next;
        const auto [d_next, slope] = lateral(s_now);
        d = d_next;

        EgoPose pose;
        pose.t = start.t + k * cfg.dt;
        pose.s = s_now;
        pose.d = d;
        pose.velocity = v;
        pose.acceleration = a_eff;
        pose.heading = normalize_angle(route.heading(s_now) + std::atan(slope));
        pose.position = route.point(s_now, d);
        p.trajectory.push_back(pose);

        max_a = std::max(max_a, std::abs(a_eff));
        if (!std::isnan(prev_a)) max_j = std::max(max_j, std::abs(a_eff - prev_a) / cfg.dt);
        prev_a = a_eff;

        const Box box = oriented_box(pose.position, pose.heading, ego.length, ego.width);
        for (const auto& snap : agents[k]) {
          if (boxes_overlap(box, snap.box)) p.collision = true;
        }
        if (!map.inside(box)) p.offroad = true;
        if (k == horizon) last = find_leader(agents[k], s_now, offset, ego.length, ego.width);
      }
      p.final_gap = last.gap;
      p.blocked = v < 0.1 && std::isfinite(last.gap) && std::abs(last.velocity) < 0.1;
      p.comfort_margin = std::min(cfg.max_abs_accel - max_a, cfg.max_abs_jerk - max_j);
      out.push_back(std::move(p));
    }
  }
  return out;
}

std::vector<Proposal> generate_proposals(const Scenario& s, const Route& route, const SimConfig& cfg) {
  const AgentState& ego = s.ego();
  EgoPose start;
  std::tie(start.s, start.d) = route.project(ego.center);
  start.position = ego.center;
  start.heading = ego.heading;
  start.velocity = ego.velocity;
  return generate_proposals(s, route, start, cfg);
}

std::optional<size_t> select_proposal(const std::vector<Proposal>& proposals) {
  constexpr double progress_tol = 1e-6;
  std::optional<size_t> best;
  for (size_t i = 0; i < proposals.size(); ++i) {
    const Proposal& p = proposals[i];
    if (!p.feasible()) continue;
    if (!best) {
      best = i;
      continue;
    }
    const Proposal& q = proposals[*best];
    const double dp = p.progress() - q.progress();
    bool better = false;
    if (dp > progress_tol) {
      better = true;
    } else if (dp >= -progress_tol) {
      const double po = std::abs(p.lateral_offset), qo = std::abs(q.lateral_offset);
      if (po < qo - 1e-9) {
        better = true;
      } else if (po <= qo + 1e-9) {
        if (p.comfort_margin > q.comfort_margin + 1e-9) {
          better = true;
        } else if (p.comfort_margin >= q.comfort_margin - 1e-9) {
          better = p.lateral_offset > q.lateral_offset;
        }
      }
    }
    if (better) best = i;
  }
  return best;
}

// ---------------------------------------------------------------------------
// Closed loop

std::string_view to_string(SimEventKind k) { return k == SimEventKind::Collision ? "COLLISION" : "OFFROAD"; }

SimTrace run_closed_loop(const Scenario& s, const SimConfig& cfg) {
  cfg.validate();
  const Route route = build_route(s);
  const AgentState& ego = s.ego();
  const int steps = step_count(cfg.duration_s, cfg.dt);
  const int replan_every = std::max(1, step_count(cfg.replan_s, cfg.dt));
  const MapCheck map(s);

  SimTrace trace;
  trace.scenario_id = s.scenario_id;
  trace.dt = cfg.dt;
  trace.ego_length = ego.length;
  trace.ego_width = ego.width;
  for (const auto& a : s.agents) {
    if (a.type == AgentType::EgoVehicle) continue;
    AgentTrack track{a.id, a.length, a.width, a.heading, a.velocity, {}};
    for (int k = 0; k <= steps; ++k) track.positions.push_back(agent_position(a, k * cfg.dt));
    trace.agents.push_back(std::move(track));
  }

  EgoPose state;
  std::tie(state.s, state.d) = route.project(ego.center);
  state.position = ego.center;
  state.heading = ego.heading;
  state.velocity = ego.velocity;
  trace.ego.push_back(state);

  std::set<std::string> in_contact;
  bool was_offroad = false;
  auto check_events = [&](int k) {
    const EgoPose& e = trace.ego.back();
    const Box box = oriented_box(e.position, e.heading, ego.length, ego.width);
    for (const auto& track : trace.agents) {
      const Box other = oriented_box(track.positions[static_cast<size_t>(k)], track.heading, track.length, track.width);
      const bool touching = boxes_overlap(box, other);
      if (touching && !in_contact.contains(track.id)) trace.events.push_back({e.t, SimEventKind::Collision, track.id});
      if (touching) {
        in_contact.insert(track.id);
      } else {
        in_contact.erase(track.id);
      }
    }
    const bool off = !map.inside(box);
    if (off && !was_offroad) trace.events.push_back({e.t, SimEventKind::Offroad, ""});
    was_offroad = off;
  };
  check_events(0);

  std::vector<EgoPose> plan;
  int plan_start = 0;
  for (int k = 0; k < steps; ++k) {
    if (k % replan_every == 0) {
      const auto proposals = generate_proposals(s, route, trace.ego.back(), cfg);
      const auto pick = select_proposal(proposals);
      if (pick) {
        plan = proposals[*pick].trajectory;
        trace.plans.push_back(fmt::format("{:.1f}/{:+.0f}", proposals[*pick].speed_fraction,
                                          proposals[*pick].lateral_offset));
      } else {
        plan.clear();
        trace.plans.push_back("NONE");
      }
      plan_start = k;
    }
    const EgoPose& cur = trace.ego.back();
    EgoPose next;
    if (!plan.empty()) {
      next = plan[static_cast<size_t>(k - plan_start + 1)];
    } else {
      next = cur;
      next.velocity = std::max(0.0, cur.velocity - cfg.b * cfg.dt);
      next.s = cur.s + 0.5 * (cur.velocity + next.velocity) * cfg.dt;
      next.acceleration = (next.velocity - cur.velocity) / cfg.dt;
      next.heading = route.heading(next.s);
      next.position = route.point(next.s, next.d);
    }
    next.t = (k + 1) * cfg.dt;
    trace.ego.push_back(next);
    check_events(k + 1);
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Score

double attainable_progress(double v_initial, double speed_limit, double duration_s, const SimConfig& cfg) {
  double s = 0.0, v = v_initial;
  const int steps = step_count(duration_s, cfg.dt);
  for (int k = 0; k < steps; ++k) {
    const double a = idm_acceleration(v, speed_limit, std::numeric_limits<double>::infinity(), 0.0, cfg);
    const double v_next = std::max(0.0, v + a * cfg.dt);
    s += 0.5 * (v + v_next) * cfg.dt;
    v = v_next;
  }
  return s;
}

DrivingScore driving_score(const SimTrace& trace, const Route& route, const SimConfig& cfg) {
  DrivingScore out;
  if (trace.ego.size() < 2) return out;
  const double dt = trace.dt;

  for (const auto& e : trace.events) {
    if (e.kind == SimEventKind::Collision) out.collision = true;
    if (e.kind == SimEventKind::Offroad) out.offroad = true;
  }

  // Constant-velocity look-ahead from every sample at which the ego moves.
  constexpr double probe = 0.05;
  const int probes = static_cast<int>(std::ceil(cfg.ttc_threshold_s / probe - 1e-9));
  for (size_t k = 0; k < trace.ego.size(); ++k) {
    const EgoPose& e = trace.ego[k];
    if (e.velocity < 0.05) continue;
    for (const auto& track : trace.agents) {
      for (int j = 0; j < probes; ++j) {
        const double tau = j * probe;
        if (tau >= out.min_ttc_s) break;
        const Box ego_box = oriented_box(e.position + direction(e.heading) * (e.velocity * tau), e.heading,
                                         trace.ego_length, trace.ego_width);
        const Box other = oriented_box(track.positions[k] + direction(track.heading) * (track.velocity * tau),
                                       track.heading, track.length, track.width);
        if (boxes_overlap(ego_box, other)) {
          out.min_ttc_s = tau;
          break;
        }
      }
    }
  }
  out.ttc_pass = out.min_ttc_s >= cfg.ttc_threshold_s;

  const double duration = dt * static_cast<double>(trace.steps());
  out.progress_m = trace.ego.back().s - trace.ego.front().s;
  out.attainable_m = attainable_progress(trace.ego.front().velocity, route.speed_limit, duration, cfg);
  if (out.attainable_m <= 0.0 || out.progress_m >= out.attainable_m * (1.0 - 1e-9)) {
    out.progress_ratio = 1.0;
  } else {
    out.progress_ratio = std::clamp(out.progress_m / out.attainable_m, 0.0, 1.0);
  }

  std::vector<double> acc;
  for (size_t k = 1; k < trace.ego.size(); ++k) acc.push_back((trace.ego[k].velocity - trace.ego[k - 1].velocity) / dt);
  for (size_t k = 0; k < acc.size(); ++k) {
    out.max_abs_accel = std::max(out.max_abs_accel, std::abs(acc[k]));
    if (k > 0) out.max_abs_jerk = std::max(out.max_abs_jerk, std::abs(acc[k] - acc[k - 1]) / dt);
  }
  out.comfort_pass = out.max_abs_accel <= cfg.max_abs_accel + 1e-9 && out.max_abs_jerk <= cfg.max_abs_jerk + 1e-9;

  const double weighted = cfg.w_ttc * (out.ttc_pass ? 1.0 : 0.0) + cfg.w_progress * out.progress_ratio +
                          cfg.w_comfort * (out.comfort_pass ? 1.0 : 0.0);
  const double penalty = (out.collision ? 0.0 : 1.0) * (out.offroad ? 0.0 : 1.0);
  out.score = penalty * weighted / (cfg.w_ttc + cfg.w_progress + cfg.w_comfort);
  return out;
}

nlohmann::json trace_to_json(const SimTrace& trace) {
  nlohmann::json ego = nlohmann::json::array();
  for (const auto& e : trace.ego) {
    ego.push_back({{"t", e.t},
                   {"x", e.position.x},
                   {"y", e.position.y},
                   {"heading", e.heading},
                   {"velocity", e.velocity},
                   {"acceleration", e.acceleration},
                   {"s", e.s},
                   {"d", e.d}});
  }
  nlohmann::json agents = nlohmann::json::array();
  for (const auto& a : trace.agents) {
    nlohmann::json pts = nlohmann::json::array();
    for (const Vec2& p : a.positions) pts.push_back({p.x, p.y});
    agents.push_back({{"id", a.id}, {"heading", a.heading}, {"positions", pts}});
  }
  nlohmann::json events = nlohmann::json::array();
  for (const auto& e : trace.events) {
    events.push_back({{"t", e.t}, {"kind", std::string(to_string(e.kind))}, {"agent_id", e.agent_id}});
  }
  return {{"scenario_id", trace.scenario_id}, {"dt", trace.dt}, {"ego", ego},
          {"agents", agents},                 {"events", events}, {"plans", trace.plans}};
}

nlohmann::json score_to_json(const DrivingScore& score) {
  return {{"score", score.score},
          {"ttc_pass", score.ttc_pass},
          {"min_ttc_s", std::isfinite(score.min_ttc_s) ? nlohmann::json(score.min_ttc_s) : nlohmann::json(nullptr)},
          {"progress_ratio", score.progress_ratio},
          {"progress_m", score.progress_m},
          {"attainable_m", score.attainable_m},
          {"comfort_pass", score.comfort_pass},
          {"max_abs_accel", score.max_abs_accel},
          {"max_abs_jerk", score.max_abs_jerk},
          {"collision", score.collision},
          {"offroad", score.offroad}};
}

}  // namespace scenaug
