#include <doctest.h>

#include <fstream>
#include <thread>

#include <httplib.h>

#include "scenaug/arena.hpp"
#include "scenaug/errors.hpp"
#include "scenaug/render.hpp"
#include "support.hpp"

using namespace scenaug;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

/// Writes one solid-color PNG per (model, scenario); the color identifies the model.
ArenaConfig make_arena(const std::string& tag, const std::vector<std::string>& models,
                       const std::vector<std::string>& scenarios) {
  const fs::path root = test::temp_dir(tag);
  ArenaConfig cfg;
  for (size_t m = 0; m < models.size(); ++m) {
    const fs::path dir = root / ("renders_" + std::to_string(m));
    fs::create_directories(dir);
    RgbImage img{4, 4, std::vector<std::uint8_t>(48, static_cast<std::uint8_t>(40 * (m + 1)))};
    const auto png = encode_png(img);
    for (const auto& sc : scenarios) {
      std::ofstream(dir / (sc + ".png"), std::ios::binary).write(reinterpret_cast<const char*>(png.data()),
                                                                  static_cast<std::streamsize>(png.size()));
    }
    cfg.models.push_back({models[m], dir});
  }
  for (const auto& sc : scenarios) cfg.instructions[sc] = "add a parked vehicle ahead in " + sc;
  cfg.vote_log = root / "votes.ndjson";
  cfg.seed = 42;
  cfg.leaderboard.rounds = 200;
  return cfg;
}

/// Model behind an image URL, identified by pixel value.
std::string model_of(const Arena& arena, const ArenaConfig& cfg, const std::string& url) {
  const std::string id = url.substr(8, url.size() - 12);  // "/images/" ... ".png"
  const auto bytes = arena.image(id);
  REQUIRE(bytes);
  const RgbImage img = decode_png(*bytes);
  return cfg.models.at(img.rgb[0] / 40 - 1).name;
}

bool mentions_any(const std::string& body, const std::vector<std::string>& names) {
  return std::any_of(names.begin(), names.end(), [&](const std::string& n) { return body.find(n) != std::string::npos; });
}

size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  size_t n = 0;
  for (std::string line; std::getline(in, line);) n += !line.empty();
  return n;
}

struct Running {
  explicit Running(Arena& arena, std::optional<fs::path> static_dir = std::nullopt) : server(arena, static_dir) {
    port = server.bind("127.0.0.1", 0);
    REQUIRE(port > 0);
    thread = std::thread([this] { server.listen(); });
  }
  ~Running() {
    server.stop();
    thread.join();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_connection_timeout(5);
    c.set_read_timeout(5);
    return c;
  }
  ArenaServer server;
  int port = 0;
  std::thread thread;
};

const std::vector<std::string> kModels{"alpha-model", "beta-model", "gamma-model"};

}  // namespace

TEST_CASE("matchups are blinded") {
  const auto cfg = make_arena("blind", {kModels[0], kModels[1]}, {"scen_1"});
  Arena arena(cfg);
  const MatchupPayload p = arena.next_matchup("r1");
  CHECK(p.left_image_url != p.right_image_url);
  CHECK(p.scenario_id == "scen_1");
  CHECK(p.instruction_text == "add a parked vehicle ahead in scen_1");
  CHECK_FALSE(mentions_any(p.to_json().dump(), kModels));
  const std::set<std::string> shown{model_of(arena, cfg, p.left_image_url), model_of(arena, cfg, p.right_image_url)};
  CHECK(shown == std::set<std::string>{kModels[0], kModels[1]});
}

TEST_CASE("a single model has nothing to compare") {
  Arena arena(make_arena("single", {kModels[0]}, {"scen_1"}));
  CHECK_THROWS_AS(arena.next_matchup("r1"), NoContent);
  // Two models without a shared scenario likewise.
  auto cfg = make_arena("disjoint", {kModels[0], kModels[1]}, {"scen_1"});
  fs::rename(cfg.models[1].render_dir / "scen_1.png", cfg.models[1].render_dir / "scen_2.png");
  Arena disjoint(cfg);
  CHECK_THROWS_AS(disjoint.next_matchup("r1"), NoContent);
}

TEST_CASE("votes resolve through the hidden mapping") {
  const auto cfg = make_arena("mapping", {kModels[0], kModels[1]}, {"scen_1"});
  Arena arena(cfg);
  for (int i = 0; i < 20; ++i) {
    const MatchupPayload p = arena.next_matchup("r1");
    const std::string left = model_of(arena, cfg, p.left_image_url);
    const VoteRecord v = arena.record_vote(p.matchup_id, VoteChoice::Left, "r1");
    CHECK(v.model_a == kModels[0]);
    CHECK(v.model_b == kModels[1]);
    CHECK(v.outcome == (left == kModels[0] ? VoteOutcome::AWins : VoteOutcome::BWins));
    CHECK(v.matchup_id == p.matchup_id);
    CHECK(v.timestamp.ends_with("Z"));
  }
  const MatchupPayload t = arena.next_matchup("r1");
  CHECK(arena.record_vote(t.matchup_id, VoteChoice::Tie, "r1").outcome == VoteOutcome::Tie);
  CHECK_THROWS_AS(arena.record_vote(t.matchup_id, VoteChoice::Left, "r1"), DuplicateVote);
  CHECK_THROWS_AS(arena.record_vote("ffffffffffffffff", VoteChoice::Left, "r1"), UnknownMatchup);
  const MatchupPayload other = arena.next_matchup("r1");
  CHECK_THROWS_AS(arena.record_vote(other.matchup_id, VoteChoice::Left, "r2"), UnknownMatchup);
  CHECK(line_count(cfg.vote_log) == 21);
  CHECK(arena.votes().size() == 21);
}

TEST_CASE("left/right assignment is balanced") {
  const auto cfg = make_arena("balance", {kModels[0], kModels[1]}, {"scen_1"});
  Arena arena(cfg);
  std::map<std::string, std::string> url_model;
  int alpha_left = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const MatchupPayload p = arena.next_matchup("r" + std::to_string(i % 5));
    auto it = url_model.find(p.left_image_url);
    if (it == url_model.end()) it = url_model.emplace(p.left_image_url, model_of(arena, cfg, p.left_image_url)).first;
    alpha_left += it->second == kModels[0];
  }
  const double share = static_cast<double>(alpha_left) / n;
  CHECK(share >= 0.49);
  CHECK(share <= 0.51);
}

TEST_CASE("least-voted pairs are served first") {
  const auto cfg = make_arena("schedule", kModels, {"s1", "s2"});
  Arena arena(cfg);
  std::set<std::tuple<std::string, std::string, std::string>> seen;
  for (int i = 0; i < 6; ++i) {
    const MatchupPayload p = arena.next_matchup("r1");
    const VoteRecord v = arena.record_vote(p.matchup_id, VoteChoice::Tie, "r1");
    CHECK(seen.insert({v.model_a, v.model_b, v.scenario_id}).second);
  }
  CHECK(seen.size() == 6);
}

TEST_CASE("leaderboard") {
  SUBCASE("empty log") {
    Arena arena(make_arena("lb_empty", kModels, {"s1"}));
    const auto board = arena.leaderboard();
    REQUIRE(board.size() == 3);
    for (const auto& e : board) {
      CHECK(e.rating == 1000.0);
      CHECK(e.rank == 1);
      CHECK(e.votes == 0);
    }
  }
  SUBCASE("a dominant model") {
    const auto cfg = make_arena("lb_dominant", {kModels[0], kModels[1]}, {"s1", "s2", "s3"});
    Arena arena(cfg);
    for (int i = 0; i < 60; ++i) {
      const MatchupPayload p = arena.next_matchup("r" + std::to_string(i % 3));
      const bool alpha_left = model_of(arena, cfg, p.left_image_url) == kModels[0];
      arena.record_vote(p.matchup_id, alpha_left ? VoteChoice::Left : VoteChoice::Right, "r" + std::to_string(i % 3));
    }
    const auto board = arena.leaderboard();
    REQUIRE(board.size() == 2);
    CHECK(board[0].model == kModels[0]);
    CHECK(board[0].rank == 1);
    CHECK(board[1].rank == 2);
    CHECK(board[0].ci_low > board[1].ci_high);
    CHECK(board[0].votes == 60);
    CHECK(board[1].votes == 60);
  }
}

TEST_CASE("votes survive a restart") {
  const auto cfg = make_arena("restart", kModels, {"s1", "s2"});
  std::vector<EloEntry> before;
  std::string old_id;
  {
    Arena arena(cfg);
    for (int i = 0; i < 25; ++i) {
      const MatchupPayload p = arena.next_matchup("r1");
      arena.record_vote(p.matchup_id, static_cast<VoteChoice>(i % 3), "r1");
      old_id = p.matchup_id;
    }
    before = arena.leaderboard();
  }
  Arena again(cfg);
  CHECK(again.votes().size() == 25);
  const auto after = again.leaderboard();
  REQUIRE(after.size() == before.size());
  for (size_t i = 0; i < after.size(); ++i) {
    CHECK(after[i].model == before[i].model);
    CHECK(after[i].rating == before[i].rating);
    CHECK(after[i].ci_low == before[i].ci_low);
    CHECK(after[i].votes == before[i].votes);
  }
  CHECK_THROWS_AS(again.record_vote(old_id, VoteChoice::Left, "r1"), DuplicateVote);
  // Fresh matchup ids never collide with logged ones.
  for (int i = 0; i < 30; ++i) {
    const MatchupPayload p = again.next_matchup("r1");
    CHECK_NOTHROW(again.record_vote(p.matchup_id, VoteChoice::Tie, "r1"));
  }
}

TEST_CASE("concurrent voters each append one intact line") {
  const auto cfg = make_arena("concurrent", kModels, {"s1", "s2", "s3"});
  Arena arena(cfg);
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&, t] {
      const std::string rater = "rater" + std::to_string(t);
      for (int i = 0; i < 25; ++i) {
        const MatchupPayload p = arena.next_matchup(rater);
        arena.record_vote(p.matchup_id, static_cast<VoteChoice>((t + i) % 3), rater);
      }
    });
  }
  for (auto& th : threads) th.join();
  CHECK(line_count(cfg.vote_log) == 200);
  const auto log = load_vote_log(cfg.vote_log);
  CHECK(log.size() == 200);
  std::set<std::string> ids;
  for (const auto& v : log) ids.insert(v.matchup_id);
  CHECK(ids.size() == 200);
}

TEST_CASE("manifest parsing") {
  const json j = {{"models", {{{"name", "a"}, {"renders", "ra"}}, {{"name", "b"}, {"renders", "/abs/rb"}}}},
                  {"instructions", {{"s1", "do it"}}},
                  {"seed", 9}};
  const ArenaConfig cfg = ArenaConfig::from_json(j, "/base");
  REQUIRE(cfg.models.size() == 2);
  CHECK(cfg.models[0].render_dir == fs::path("/base/ra"));
  CHECK(cfg.models[1].render_dir == fs::path("/abs/rb"));
  CHECK(cfg.vote_log == fs::path("/base/votes.ndjson"));
  CHECK(cfg.seed == 9);
  CHECK(cfg.instructions.at("s1") == "do it");
  CHECK_THROWS_AS(ArenaConfig::from_json(json{{"models", 3}}, "/"), SchemaError);
  CHECK(parse_vote_choice("left") == VoteChoice::Left);
  CHECK_FALSE(parse_vote_choice("up"));
}

TEST_CASE("HTTP endpoints") {
  const auto cfg = make_arena("http", {kModels[0], kModels[1]}, {"scen_1"});
  const fs::path web = test::temp_dir("http_static");
  std::ofstream(web / "index.html") << "<html>arena</html>";
  Arena arena(cfg);
  Running run(arena, web);
  auto c = run.client();
  std::vector<std::string> bodies;

  auto res = c.Get("/api/matchup");
  REQUIRE(res);
  CHECK(res->status == 400);

  res = c.Get("/api/matchup?rater=r1");
  REQUIRE(res);
  CHECK(res->status == 200);
  bodies.push_back(res->body);
  const json m = json::parse(res->body);
  for (const char* key : {"matchup_id", "scenario_id", "left_image_url", "right_image_url", "instruction_text"}) {
    CHECK(m.contains(key));
  }

  res = c.Get(m["left_image_url"].get<std::string>());
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->get_header_value("Content-Type") == "image/png");
  CHECK(res->body.substr(1, 3) == "PNG");
  bodies.push_back(res->body);
  res = c.Get("/images/0123456789abcdef.png");
  REQUIRE(res);
  CHECK(res->status == 404);

  const std::string id = m["matchup_id"];
  res = c.Post("/api/vote", "not json", "application/json");
  REQUIRE(res);
  CHECK(res->status == 400);
  bodies.push_back(res->body);
  res = c.Post("/api/vote", json{{"matchup_id", id}, {"rater", "r1"}}.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 400);
  res = c.Post("/api/vote", json{{"matchup_id", id}, {"outcome", "SIDEWAYS"}, {"rater", "r1"}}.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 400);
  res = c.Post("/api/vote", json{{"matchup_id", "feedfeedfeedfeed"}, {"outcome", "LEFT"}, {"rater", "r1"}}.dump(),
               "application/json");
  REQUIRE(res);
  CHECK(res->status == 404);
  bodies.push_back(res->body);
  const std::string ok = json{{"matchup_id", id}, {"outcome", "LEFT"}, {"rater", "r1"}}.dump();
  res = c.Post("/api/vote", ok, "application/json");
  REQUIRE(res);
  CHECK(res->status == 204);
  res = c.Post("/api/vote", ok, "application/json");
  REQUIRE(res);
  CHECK(res->status == 409);
  bodies.push_back(res->body);

  res = c.Get("/api/leaderboard");
  REQUIRE(res);
  CHECK(res->status == 200);
  const json board = json::parse(res->body);
  REQUIRE(board.size() == 2);
  CHECK(board[0]["votes"] == 1);
  CHECK(mentions_any(res->body, kModels));

  res = c.Get("/index.html");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->body == "<html>arena</html>");

  for (const auto& b : bodies) CHECK_FALSE(mentions_any(b, kModels));
}

TEST_CASE("HTTP matchup with nothing to compare is 204") {
  Arena arena(make_arena("http_empty", {kModels[0]}, {"scen_1"}));
  Running run(arena);
  auto c = run.client();
  const auto res = c.Get("/api/matchup?rater=r1");
  REQUIRE(res);
  CHECK(res->status == 204);
}

TEST_CASE("end to end: 30 votes over HTTP rank the dominant model first") {
  const auto cfg = make_arena("e2e", kModels, {"s1", "s2", "s3", "s4"});
  Arena arena(cfg);
  Running run(arena);
  auto c = run.client();
  std::mt19937_64 rng(5);
  for (int i = 0; i < 30; ++i) {
    const std::string rater = "expert" + std::to_string(i % 3);
    auto res = c.Get(("/api/matchup?rater=" + rater).c_str());
    REQUIRE(res);
    REQUIRE(res->status == 200);
    CHECK_FALSE(mentions_any(res->body, kModels));
    const json m = json::parse(res->body);
    // The rater looks at the pictures, not at any identity.
    auto shown = [&](const std::string& url) {
      const auto img = c.Get(url);
      REQUIRE(img);
      return cfg.models.at(decode_png(std::vector<std::uint8_t>(img->body.begin(), img->body.end())).rgb[0] / 40 - 1).name;
    };
    const std::string left = shown(m["left_image_url"]), right = shown(m["right_image_url"]);
    std::string outcome;
    if (left == kModels[0]) {
      outcome = "LEFT";
    } else if (right == kModels[0]) {
      outcome = "RIGHT";
    } else {
      outcome = std::array{"LEFT", "RIGHT", "TIE"}[rng() % 3];
    }
    res = c.Post("/api/vote", json{{"matchup_id", m["matchup_id"]}, {"outcome", outcome}, {"rater", rater}}.dump(),
                 "application/json");
    REQUIRE(res);
    CHECK(res->status == 204);
  }
  CHECK(load_vote_log(cfg.vote_log).size() == 30);
  const auto res = c.Get("/api/leaderboard");
  REQUIRE(res);
  const json board = json::parse(res->body);
  REQUIRE(board.size() == 3);
  CHECK(board[0]["model"] == kModels[0]);
  CHECK(board[0]["rank"] == 1);
  CHECK(board[0]["ci_low"].get<double>() > board[1]["ci_high"].get<double>());
  CHECK(board[0]["ci_low"].get<double>() > board[2]["ci_high"].get<double>());
  int total = 0;
  for (const auto& e : board) total += e["votes"].get<int>();
  CHECK(total == 60);
}
