#include "scenaug/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <thread>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "scenaug/errors.hpp"
#include "text_util.hpp"

namespace scenaug {

namespace {

using Matrix = std::vector<std::vector<double>>;

// Classic O(n^3) potentials method on a square matrix; returns column of each row.
std::vector<int> solve_square(const Matrix& a) {
  const int n = static_cast<int>(a.size());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = a[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> col(n, -1);
  for (int j = 1; j <= n; ++j) col[p[j] - 1] = j - 1;
  return col;
}

double sub_optimum(const Matrix& a, const std::vector<int>& rows, const std::vector<int>& cols) {
  if (rows.empty()) return 0.0;
  Matrix sub(rows.size(), std::vector<double>(cols.size()));
  for (size_t r = 0; r < rows.size(); ++r) {
    for (size_t c = 0; c < cols.size(); ++c) sub[r][c] = a[rows[r]][cols[c]];
  }
  const auto col = solve_square(sub);
  double total = 0.0;
  for (size_t r = 0; r < rows.size(); ++r) total += sub[r][col[r]];
  return total;
}

}  // namespace

Assignment hungarian(const Matrix& cost, double pad) {
  if (cost.empty() || cost.front().empty()) throw ShapeError("cost matrix is empty");
  const size_t rows = cost.size(), cols = cost.front().size();
  double real_scale = 0.0;
  for (const auto& row : cost) {
    if (row.size() != cols) throw ShapeError("cost matrix rows differ in length");
    double row_max = 0.0;
    for (double c : row) {
      if (!std::isfinite(c) || c < 0.0) throw DomainError("costs must be finite and nonnegative");
      row_max = std::max(row_max, c);
    }
    real_scale += row_max;
  }
  const size_t n = std::max(rows, cols);
  Matrix a(n, std::vector<double>(n, pad));
  for (size_t r = 0; r < rows; ++r) std::copy(cost[r].begin(), cost[r].end(), a[r].begin());

  const auto first = solve_square(a);
  double optimum = 0.0;
  for (size_t r = 0; r < n; ++r) optimum += a[r][first[r]];
  const double tol = 1e-9 * (1.0 + real_scale) + 1e-12 * pad * static_cast<double>(n);

  // Fix rows one by one to the smallest column that still admits an optimum.
  std::vector<int> chosen(n, -1);
  std::vector<char> taken(n, 0);
  double fixed = 0.0;
  for (size_t r = 0; r < n; ++r) {
    std::vector<int> rest_rows;
    for (size_t k = r + 1; k < n; ++k) rest_rows.push_back(static_cast<int>(k));
    for (size_t c = 0; c < n; ++c) {
      if (taken[c]) continue;
      std::vector<int> rest_cols;
      for (size_t k = 0; k < n; ++k) {
        if (!taken[k] && k != c) rest_cols.push_back(static_cast<int>(k));
      }
      const double total = fixed + a[r][c] + sub_optimum(a, rest_rows, rest_cols);
      if (total <= optimum + tol) {
        chosen[r] = static_cast<int>(c);
        taken[c] = 1;
        fixed += a[r][c];
        break;
      }
    }
    if (chosen[r] < 0) {
      // Only reachable through rounding; fall back to the first solution's choice.
      chosen[r] = first[r];
      taken[first[r]] = 1;
      fixed += a[r][first[r]];
    }
  }

  Assignment out;
  for (size_t r = 0; r < rows; ++r) {
    if (static_cast<size_t>(chosen[r]) < cols) {
      out.pairs.emplace_back(static_cast<int>(r), chosen[r]);
      out.cost += cost[r][chosen[r]];
    }
  }
  return out;
}

DisplacementReport displacement_error(std::span<const AgentState> generated, std::span<const AgentState> reference) {
  std::vector<const AgentState*> gen, ref;
  for (const auto& a : generated) {
    if (a.type != AgentType::EgoVehicle) gen.push_back(&a);
  }
  for (const auto& a : reference) {
    if (a.type != AgentType::EgoVehicle) ref.push_back(&a);
  }
  DisplacementReport report;
  if (gen.empty() || ref.empty()) {
    report.unmatched_generated = static_cast<int>(gen.size());
    report.unmatched_reference = static_cast<int>(ref.size());
    return report;
  }
  Matrix cost(gen.size(), std::vector<double>(ref.size()));
  for (size_t i = 0; i < gen.size(); ++i) {
    for (size_t j = 0; j < ref.size(); ++j) cost[i][j] = distance(gen[i]->center, ref[j]->center);
  }
  const Assignment as = hungarian(cost, kUnmatchedCost);
  double sum = 0.0;
  for (auto [i, j] : as.pairs) {
    const double d = cost[i][j];
    report.pairs.push_back({gen[i]->id, ref[j]->id, d});
    sum += d;
    report.max_m = std::max(report.max_m, d);
  }
  report.mean_m = sum / static_cast<double>(report.pairs.size());
  report.unmatched_generated = static_cast<int>(gen.size() - report.pairs.size());
  report.unmatched_reference = static_cast<int>(ref.size() - report.pairs.size());
  return report;
}

// ---------------------------------------------------------------------------

std::string_view to_string(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::Position: return "POSITION";
    case ErrorCategory::Heading: return "HEADING";
    case ErrorCategory::Logic: return "LOGIC";
    case ErrorCategory::None: return "NONE";
  }
  return "NONE";
}

double convex_overlap_area(std::span<const Vec2> a, std::span<const Vec2> b) {
  std::vector<Vec2> poly(a.begin(), a.end());
  for (size_t i = 0; i < b.size() && !poly.empty(); ++i) {
    const Vec2 e0 = b[i], e1 = b[(i + 1) % b.size()];
    const Vec2 edge = e1 - e0;
    auto side = [&](Vec2 p) { return edge.cross(p - e0); };
    std::vector<Vec2> next;
    for (size_t k = 0; k < poly.size(); ++k) {
      const Vec2 cur = poly[k], prev = poly[(k + poly.size() - 1) % poly.size()];
      const double sc = side(cur), sp = side(prev);
      if (sc >= 0.0) {
        if (sp < 0.0) next.push_back(prev + (cur - prev) * (sp / (sp - sc)));
        next.push_back(cur);
      } else if (sp >= 0.0) {
        next.push_back(prev + (cur - prev) * (sp / (sp - sc)));
      }
    }
    poly = std::move(next);
  }
  return poly.size() < 3 ? 0.0 : polygon_area(poly);
}

namespace {

std::optional<double> nearest_lane_heading(const Scenario& s, Vec2 p) {
  double best = std::numeric_limits<double>::infinity();
  std::optional<double> heading;
  auto scan = [&](const LaneGeometry& g) {
    const Polyline pts = sample_geometry(g);
    for (size_t i = 1; i < pts.size(); ++i) {
      const Vec2 a = pts[i - 1], d = pts[i] - a;
      const double len2 = d.dot(d);
      if (len2 <= 0.0) continue;
      const double t = std::clamp((p - a).dot(d) / len2, 0.0, 1.0);
      const double dist = distance(p, a + d * t);
      if (dist < best) {
        best = dist;
        heading = std::atan2(d.y, d.x);
      }
    }
  };
  for (const auto& l : s.lanes) scan(l.geometry);
  for (const auto& c : s.connectors) scan(c.geometry);
  return heading;
}

bool placed_on_map(const Scenario& s, const AgentState& a) {
  const bool has_drivable = std::any_of(s.areas.begin(), s.areas.end(),
                                        [](const Area& ar) { return ar.kind == AreaKind::Drivable; });
  if (!has_drivable) return true;
  for (const auto& ar : s.areas) {
    const bool allowed = !is_vehicle_like(a.type) || ar.kind == AreaKind::Drivable || ar.kind == AreaKind::Carpark;
    if (allowed && point_in_polygon(a.center, ar.boundary)) return true;
  }
  return false;
}

}  // namespace

std::vector<ErrorLabel> classify_errors(std::span<const AgentState> generated, std::span<const AgentState> reference,
                                        const Scenario& s, const ErrorThresholds& t) {
  const DisplacementReport rep = displacement_error(generated, reference);
  std::map<std::string, double> matched;
  for (const auto& p : rep.pairs) matched[p.generated_id] = p.distance_m;

  std::vector<const AgentState*> pool;
  for (const auto& a : generated) pool.push_back(&a);
  for (const auto& a : s.agents) {
    const bool shadowed =
        std::any_of(generated.begin(), generated.end(), [&](const AgentState& g) { return g.id == a.id; });
    if (!shadowed) pool.push_back(&a);
  }

  std::vector<ErrorLabel> labels;
  for (const auto& a : generated) {
    if (a.type == AgentType::EgoVehicle) continue;
    ErrorLabel label{a.id, ErrorCategory::None, ""};
    auto it = matched.find(a.id);
    if (it == matched.end()) {
      label.category = ErrorCategory::Logic;
      label.detail = "no matching reference agent";
      labels.push_back(std::move(label));
      continue;
    }
    if (it->second > t.position_m) {
      label.category = ErrorCategory::Position;
      label.detail = fmt::format("{:.2f} m from its reference", it->second);
    } else if (!placed_on_map(s, a)) {
      label.category = ErrorCategory::Position;
      label.detail = "center outside the permitted map areas";
    }
    if (label.category == ErrorCategory::None && is_vehicle_like(a.type)) {
      if (const auto lane_heading = nearest_lane_heading(s, a.center)) {
        const double off = angle_between(a.heading, *lane_heading);
        if (off > t.heading_rad) {
          label.category = ErrorCategory::Heading;
          label.detail = fmt::format("{:.1f} deg from the nearest lane", off * 180.0 / std::numbers::pi);
        }
      }
    }
    if (label.category == ErrorCategory::None) {
      const auto box = oriented_box(a.center, a.heading, a.length, a.width);
      for (const AgentState* o : pool) {
        if (o->id == a.id) continue;
        const auto other = oriented_box(o->center, o->heading, o->length, o->width);
        const double smaller = std::min(a.length * a.width, o->length * o->width);
        const double frac = convex_overlap_area(box, other) / smaller;
        if (frac > t.overlap_fraction) {
          label.category = ErrorCategory::Logic;
          label.detail = fmt::format("overlaps {} by {:.0f}%", o->id, 100.0 * frac);
          break;
        }
      }
    }
    labels.push_back(std::move(label));
  }
  return labels;
}

// ---------------------------------------------------------------------------

std::string_view to_string(VoteOutcome o) {
  switch (o) {
    case VoteOutcome::AWins: return "A_WINS";
    case VoteOutcome::BWins: return "B_WINS";
    case VoteOutcome::Tie: return "TIE";
  }
  return "TIE";
}

std::optional<VoteOutcome> parse_vote_outcome(std::string_view s) {
  const std::string u = detail::to_upper(detail::trim(s));
  if (u == "A_WINS") return VoteOutcome::AWins;
  if (u == "B_WINS") return VoteOutcome::BWins;
  if (u == "TIE") return VoteOutcome::Tie;
  return std::nullopt;
}

std::string vote_to_line(const VoteRecord& v) {
  using detail::quote;
  return fmt::format(
      "{{\"matchup_id\": {}, \"model_a\": {}, \"model_b\": {}, \"scenario_id\": {}, \"outcome\": \"{}\", "
      "\"rater_id\": {}, \"timestamp\": {}}}",
      quote(v.matchup_id), quote(v.model_a), quote(v.model_b), quote(v.scenario_id), to_string(v.outcome),
      quote(v.rater_id), quote(v.timestamp));
}

VoteRecord parse_vote_line(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(fmt::format("vote record is not valid JSON: {}", e.what()));
  }
  if (!j.is_object()) throw SchemaError("vote record must be an object");
  auto field = [&](const char* key) -> std::string {
    if (!j.contains(key) || !j[key].is_string()) throw SchemaError(fmt::format("vote record lacks string '{}'", key));
    return j[key].get<std::string>();
  };
  VoteRecord v;
  v.matchup_id = field("matchup_id");
  v.model_a = field("model_a");
  v.model_b = field("model_b");
  v.scenario_id = field("scenario_id");
  const auto outcome = parse_vote_outcome(field("outcome"));
  if (!outcome) throw SchemaError("vote outcome must be A_WINS, B_WINS or TIE");
  v.outcome = *outcome;
  v.rater_id = field("rater_id");
  v.timestamp = j.contains("timestamp") ? field("timestamp") : "";
  if (v.model_a == v.model_b) throw SchemaError(fmt::format("vote compares '{}' with itself", v.model_a));
  return v;
}

std::vector<VoteRecord> load_vote_log(const std::filesystem::path& path) {
  std::vector<VoteRecord> out;
  std::ifstream in(path);
  if (!in) {
    if (!std::filesystem::exists(path)) return out;
    throw std::filesystem::filesystem_error("cannot open vote log", path, std::make_error_code(std::errc::io_error));
  }
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    try {
      out.push_back(parse_vote_line(line));
    } catch (const SchemaError& e) {
      throw SchemaError(fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

constexpr double kFixedScale = 1048576.0;  // 2^20

std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::vector<std::string> models_of(std::span<const VoteRecord> votes) {
  std::vector<std::string> names;
  for (const auto& v : votes) {
    names.push_back(v.model_a);
    names.push_back(v.model_b);
  }
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  return names;
}

// Ratings indexed like `names`, in fixed point.
std::vector<std::int64_t> elo_fixed(std::span<const VoteRecord* const> votes, const std::vector<std::string>& names,
                                    std::uint64_t seed, const EloConfig& cfg) {
  std::vector<std::int64_t> r(names.size(), std::llround(cfg.initial * kFixedScale));
  auto index = [&](const std::string& m) {
    return static_cast<size_t>(std::lower_bound(names.begin(), names.end(), m) - names.begin());
  };
  std::vector<size_t> order(votes.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::mt19937_64 rng(seed);
  for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[bounded(rng, i)]);
  for (size_t k : order) {
    const VoteRecord& v = *votes[k];
    const size_t a = index(v.model_a), b = index(v.model_b);
    const double diff = static_cast<double>(r[b] - r[a]) / kFixedScale;
    const double expected = 1.0 / (1.0 + std::pow(10.0, diff / 400.0));
    const double score = v.outcome == VoteOutcome::AWins ? 1.0 : v.outcome == VoteOutcome::BWins ? 0.0 : 0.5;
    const std::int64_t delta = std::llround(cfg.k * (score - expected) * kFixedScale);
    r[a] += delta;
    r[b] -= delta;
  }
  return r;
}

double percentile(std::vector<double> xs, double p) {
  std::sort(xs.begin(), xs.end());
  const double pos = p * static_cast<double>(xs.size() - 1);
  const size_t lo = static_cast<size_t>(std::floor(pos));
  const size_t hi = std::min(lo + 1, xs.size() - 1);
  return xs[lo] + (xs[hi] - xs[lo]) * (pos - static_cast<double>(lo));
}

}  // namespace

double expected_score(double ra, double rb) { return 1.0 / (1.0 + std::pow(10.0, (rb - ra) / 400.0)); }

std::map<std::string, double> compute_elo(std::span<const VoteRecord> votes, std::uint64_t seed, const EloConfig& cfg) {
  const auto names = models_of(votes);
  std::vector<const VoteRecord*> ptrs;
  for (const auto& v : votes) ptrs.push_back(&v);
  const auto r = elo_fixed(ptrs, names, seed, cfg);
  std::map<std::string, double> out;
  for (size_t i = 0; i < names.size(); ++i) out[names[i]] = static_cast<double>(r[i]) / kFixedScale;
  return out;
}

std::map<std::string, ConfidenceInterval> bootstrap_ci(std::span<const VoteRecord> votes, int rounds,
                                                       std::uint64_t seed, const EloConfig& cfg) {
  if (rounds < 100) throw DomainError("bootstrap needs at least 100 rounds");
  std::map<std::string, ConfidenceInterval> out;
  if (votes.empty()) return out;
  const auto names = models_of(votes);
  std::vector<std::vector<double>> samples(names.size(), std::vector<double>(static_cast<size_t>(rounds)));

  auto run_round = [&](int round) {
    const std::uint64_t round_seed = seed + static_cast<std::uint64_t>(round);
    std::mt19937_64 rng(round_seed);
    std::vector<const VoteRecord*> pick(votes.size());
    for (auto& p : pick) p = &votes[bounded(rng, votes.size())];
    const auto r = elo_fixed(pick, names, splitmix64(round_seed), cfg);
    for (size_t i = 0; i < names.size(); ++i) samples[i][static_cast<size_t>(round)] = static_cast<double>(r[i]) / kFixedScale;
  };
  const int workers = std::clamp(static_cast<int>(std::thread::hardware_concurrency()), 1, 8);
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (int round = w; round < rounds; round += workers) run_round(round);
    });
  }
  for (auto& t : pool) t.join();

  const auto point = compute_elo(votes, seed, cfg);
  for (size_t i = 0; i < names.size(); ++i) {
    const double median = percentile(samples[i], 0.5);
    const double rating = point.at(names[i]);
    out[names[i]] = {rating + percentile(samples[i], 0.025) - median, rating + percentile(samples[i], 0.975) - median};
  }
  return out;
}

std::vector<EloEntry> compute_rank(std::vector<EloEntry> entries) {
  for (auto& e : entries) {
    e.rank = 1 + static_cast<int>(std::count_if(entries.begin(), entries.end(), [&](const EloEntry& o) {
               return &o != &e && o.ci_low > e.ci_high;
             }));
  }
  return entries;
}

std::vector<EloEntry> leaderboard(std::span<const VoteRecord> votes, std::span<const std::string> models,
                                  const LeaderboardConfig& cfg) {
  std::map<std::string, EloEntry> table;
  for (const auto& m : models) table[m] = {m, cfg.elo.initial, cfg.elo.initial, cfg.elo.initial, 0, 0};
  for (const auto& m : models_of(votes)) table[m] = {m, cfg.elo.initial, cfg.elo.initial, cfg.elo.initial, 0, 0};
  for (const auto& v : votes) {
    ++table[v.model_a].votes;
    ++table[v.model_b].votes;
  }
  if (!votes.empty()) {
    const auto ratings = compute_elo(votes, cfg.seed, cfg.elo);
    const auto cis = bootstrap_ci(votes, cfg.rounds, cfg.seed, cfg.elo);
    for (const auto& [m, r] : ratings) {
      table[m].rating = r;
      table[m].ci_low = cis.at(m).low;
      table[m].ci_high = cis.at(m).high;
    }
  }
  std::vector<EloEntry> entries;
  for (auto& [m, e] : table) entries.push_back(std::move(e));
  std::stable_sort(entries.begin(), entries.end(),
                   [](const EloEntry& a, const EloEntry& b) { return a.rating > b.rating; });
  return compute_rank(std::move(entries));
}

}  // namespace scenaug
