#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "scenaug/scenario.hpp"

namespace scenaug {

// ---------------------------------------------------------------------------
// Assignment

struct Assignment {
  std::vector<std::pair<int, int>> pairs;  ///< (row, column), sorted by row
  double cost = 0.0;
};

/// Minimum-cost matching of size min(rows, cols) on a rectangular matrix.
/// Among optimal matchings the one whose row-to-column sequence is
/// lexicographically smallest is returned. Throws ShapeError for empty or
/// ragged input and DomainError for negative or non-finite costs.
/// `pad` fills the missing rows or columns while squaring the matrix.
Assignment hungarian(const std::vector<std::vector<double>>& cost, double pad = 0.0);

// ---------------------------------------------------------------------------
// Displacement

struct DisplacementPair {
  std::string generated_id;
  std::string reference_id;
  double distance_m = 0.0;
};

struct DisplacementReport {
  std::vector<DisplacementPair> pairs;
  double mean_m = std::numeric_limits<double>::quiet_NaN();  ///< NaN when nothing matched
  double max_m = 0.0;
  int unmatched_generated = 0;
  int unmatched_reference = 0;

  [[nodiscard]] bool has_mean() const { return !pairs.empty(); }
};

inline constexpr double kUnmatchedCost = 1e6;

/// Center-distance matching of two agent sets. Ego agents are ignored.
DisplacementReport displacement_error(std::span<const AgentState> generated, std::span<const AgentState> reference);

// ---------------------------------------------------------------------------
// Error taxonomy

enum class ErrorCategory { Position, Heading, Logic, None };
std::string_view to_string(ErrorCategory c);

struct ErrorThresholds {
  double position_m = 5.0;
  double heading_rad = 30.0 * 3.14159265358979323846 / 180.0;
  double overlap_fraction = 0.2;  ///< of the smaller rectangle
};

struct ErrorLabel {
  std::string agent_id;
  ErrorCategory category = ErrorCategory::None;
  std::string detail;
};

/// One label per non-ego generated agent. `s` supplies the map and any
/// agents not present in `generated`.
std::vector<ErrorLabel> classify_errors(std::span<const AgentState> generated, std::span<const AgentState> reference,
                                        const Scenario& s, const ErrorThresholds& t = {});

/// Area of the intersection of two convex counter-clockwise polygons.
double convex_overlap_area(std::span<const Vec2> a, std::span<const Vec2> b);

// ---------------------------------------------------------------------------
// Pairwise votes and Elo

enum class VoteOutcome { AWins, BWins, Tie };
std::string_view to_string(VoteOutcome o);
std::optional<VoteOutcome> parse_vote_outcome(std::string_view s);

struct VoteRecord {
  std::string matchup_id;
  std::string model_a;
  std::string model_b;
  std::string scenario_id;
  VoteOutcome outcome = VoteOutcome::Tie;
  std::string rater_id;
  std::string timestamp;  ///< ISO-8601 UTC

  bool operator==(const VoteRecord&) const = default;
};

/// One line of the vote log (no trailing newline).
std::string vote_to_line(const VoteRecord& v);
/// Throws SchemaError for malformed lines or model_a == model_b.
VoteRecord parse_vote_line(std::string_view line);
/// Blank lines are skipped; a missing file reads as an empty log.
std::vector<VoteRecord> load_vote_log(const std::filesystem::path& path);

struct EloConfig {
  double k = 32.0;
  double initial = 1000.0;
};

/// Expected score of a player rated `ra` against one rated `rb`.
double expected_score(double ra, double rb);

/// Online Elo over the votes in a seed-determined order. Ratings are kept
/// in fixed point (2^-20 points), so totals are conserved exactly.
std::map<std::string, double> compute_elo(std::span<const VoteRecord> votes, std::uint64_t seed,
                                          const EloConfig& cfg = {});

struct ConfidenceInterval {
  double low = 0.0;
  double high = 0.0;
};

/// 95% intervals from `rounds` resamples; round r uses seed + r, so the
/// result does not depend on how rounds are scheduled. The percentile
/// interval is recentered on the full-data rating by the bootstrap median.
std::map<std::string, ConfidenceInterval> bootstrap_ci(std::span<const VoteRecord> votes, int rounds,
                                                       std::uint64_t seed, const EloConfig& cfg = {});

struct EloEntry {
  std::string model;
  double rating = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  int votes = 0;
  int rank = 0;
};

/// rank = 1 + number of other entries whose ci_low exceeds this ci_high.
std::vector<EloEntry> compute_rank(std::vector<EloEntry> entries);

struct LeaderboardConfig {
  EloConfig elo;
  int rounds = 1000;
  std::uint64_t seed = 0;
};

/// Ratings, intervals, vote counts and ranks for `models` plus every model
/// named in the log, ordered by rating (descending) then name.
std::vector<EloEntry> leaderboard(std::span<const VoteRecord> votes, std::span<const std::string> models,
                                  const LeaderboardConfig& cfg = {});

}  // namespace scenaug
