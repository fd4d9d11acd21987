#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scenaug/eval.hpp"

namespace scenaug {

struct ArenaModel {
  std::string name;
  std::filesystem::path render_dir;  ///< holds <scenario_id>.png
};

struct ArenaConfig {
  std::vector<ArenaModel> models;
  std::filesystem::path vote_log;
  std::map<std::string, std::string> instructions;  ///< scenario id -> instruction text
  std::uint64_t seed = 0;
  LeaderboardConfig leaderboard;

  /// Reads {"models": [{"name", "renders"}], "instructions": {...}, "vote_log", "seed"};
  /// relative paths resolve against `base`.
  static ArenaConfig from_json(const nlohmann::json& j, const std::filesystem::path& base);
};

/// What a rater sees: no model identities.
struct MatchupPayload {
  std::string matchup_id;
  std::string scenario_id;
  std::string left_image_url;
  std::string right_image_url;
  std::string instruction_text;

  [[nodiscard]] nlohmann::json to_json() const;
};

enum class VoteChoice { Left, Right, Tie };
std::optional<VoteChoice> parse_vote_choice(std::string_view s);

class Arena {
 public:
  /// Scans render directories and replays the vote log.
  explicit Arena(ArenaConfig cfg);

  /// Throws NoContent when fewer than two models share a scenario.
  MatchupPayload next_matchup(const std::string& rater_id);
  /// Throws UnknownMatchup or DuplicateVote. Appends to the vote log.
  VoteRecord record_vote(const std::string& matchup_id, VoteChoice choice, const std::string& rater_id);

  [[nodiscard]] std::vector<EloEntry> leaderboard() const;
  [[nodiscard]] std::vector<VoteRecord> votes() const;
  /// PNG bytes behind an opaque image id, if known.
  [[nodiscard]] std::optional<std::vector<std::uint8_t>> image(const std::string& image_id) const;
  [[nodiscard]] std::vector<std::string> model_names() const;

 private:
  struct Pending {
    std::string rater;
    std::string scenario;
    std::string left;
    std::string right;
  };
  struct Triple {
    size_t a, b;  ///< model indices, a < b
    std::string scenario;
  };

  std::string fresh_id();

  ArenaConfig cfg_;
  std::vector<Triple> triples_;
  std::map<std::pair<std::string, std::string>, std::string> image_ids_;  ///< (model, scenario) -> id
  std::map<std::string, std::filesystem::path> image_paths_;
  mutable std::mutex mutex_;
  std::mt19937_64 rng_;
  std::map<std::string, Pending> pending_;
  std::set<std::string> resolved_;
  std::map<std::string, std::map<size_t, int>> rater_counts_;  ///< rater -> triple index -> votes
  std::vector<VoteRecord> votes_;
};

/// HTTP front end: /api/matchup, /api/vote, /api/leaderboard, /images/<id>.png
/// and optional static files at /.
class ArenaServer {
 public:
  ArenaServer(Arena& arena, std::optional<std::filesystem::path> static_dir = std::nullopt);
  ~ArenaServer();

  /// Binds to `port` (0 picks a free port) and returns the bound port, or -1.
  int bind(const std::string& host, int port);
  /// Serves until stop(); call after bind().
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace scenaug
