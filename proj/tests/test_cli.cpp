#include <doctest.h>

#include <array>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <thread>

#include <httplib.h>
#include <spawn.h>
#include <sys/wait.h>

#include "scenaug/eval.hpp"
#include "scenaug/render.hpp"
#include "support.hpp"

extern char** environ;

using namespace scenaug;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

Run cli(const std::string& args) {
  const std::string cmd = std::string("'") + SCENAUG_CLI + "' " + args + " 2>&1";
  Run r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe);
  std::array<char, 4096> buf{};
  size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

const fs::path kSingleLane = test::fixture("scenarios/single_lane.json");
const fs::path kScripts = test::fixture("scripts");
const std::string kInstruction = std::string("-i '") + "add a parked vehicle ahead" + "'";

json read_json(const fs::path& p) { return json::parse(test::read_text(p)); }

}  // namespace

TEST_CASE("modify reproduces the parked vehicle") {
  const auto out = test::temp_dir("cli_modify");
  const Run r = cli("modify " + q(kSingleLane) + " " + kInstruction + " -b scripted:" + q(kScripts / "single_lane_otm") + " -o " + q(out));
  CAPTURE(r.out);
  CHECK(r.code == 0);
  const Scenario s = load_scenario_file(out / "single_lane.json");
  const AgentState* a = s.find_agent("Agent2");
  REQUIRE(a);
  CHECK(a->center == Vec2{21.4, 2.6});
  const json t = read_json(out / "single_lane.transcript.json");
  CHECK(t["status"] == "ACCEPTED");
}

TEST_CASE("modify exit codes follow the pipeline status") {
  const auto out = test::temp_dir("cli_status");
  const std::string base = "modify " + q(kSingleLane) + " " + kInstruction + " -s TQA -b scripted:" + q(kScripts / "single_lane_tqa") + " -o " + q(out);
  CHECK(cli(base).code == 0);
  CHECK(read_json(out / "single_lane.transcript.json")["iterations"] == 2);
  CHECK(cli(base + " --max-qa-iters 1").code == 2);

  const auto empty = test::temp_dir("cli_empty_script");
  const Run failed = cli("modify " + q(kSingleLane) + " " + kInstruction + " -b scripted:" + q(empty) + " -o " + q(out));
  CHECK(failed.code == 1);
  CHECK(failed.out.find("FAILED") != std::string::npos);
}

TEST_CASE("usage, I/O and document errors") {
  CHECK(cli("").code == 64);
  CHECK(cli("frobnicate").code == 64);
  CHECK(cli("modify " + q(kSingleLane) + " " + kInstruction + " -s XYZ -b scripted:" + q(kScripts / "single_lane_otm")).code == 64);
  CHECK(cli("modify " + q(kSingleLane) + " -b scripted:" + q(kScripts / "single_lane_otm")).code == 64);
  CHECK(cli("render " + q(kSingleLane) + " --png -5").code == 64);
  CHECK(cli("--help").code == 0);

  CHECK(cli("render /nonexistent/scenario.json").code == 74);
  CHECK(cli("modify " + q(kSingleLane) + " " + kInstruction + " -b scripted:/nonexistent").code == 74);
  CHECK(cli("eval elo /nonexistent/votes.ndjson").code == 74);

  int count = 0;
  for (const auto& entry : fs::directory_iterator(test::fixture("invalid"))) {
    CAPTURE(entry.path().filename().string());
    CHECK(cli("render " + q(entry.path()) + " -o " + q(test::temp_dir("cli_invalid"))).code == 65);
    ++count;
  }
  CHECK(count >= 10);
}

TEST_CASE("render writes vector and raster output") {
  const auto out = test::temp_dir("cli_render");
  const Run r = cli("render " + q(kSingleLane) + " --png 256 -o " + q(out));
  CHECK(r.code == 0);
  const std::string svg = test::read_text(out / "single_lane.svg");
  CHECK(svg == render_bev(load_scenario_file(kSingleLane), {}).svg);
  const std::string png = test::read_text(out / "single_lane.png");
  const RgbImage img = decode_png(std::vector<std::uint8_t>(png.begin(), png.end()));
  CHECK(img.width == 256);
}

TEST_CASE("eval displacement of a corpus against itself") {
  const auto out = test::temp_dir("cli_disp");
  const fs::path corpus = test::fixture("scenarios");
  const Run r = cli("eval displacement " + q(corpus) + " " + q(corpus) + " --report " + q(out / "report.json"));
  CAPTURE(r.out);
  CHECK(r.code == 0);
  const json rep = read_json(out / "report.json");
  CHECK(rep["aggregate_mean_m"] == 0.0);
  CHECK(rep["scenarios"].size() == 3);
}

TEST_CASE("eval elo matches the library leaderboard") {
  const auto dir = test::temp_dir("cli_elo");
  std::vector<VoteRecord> votes;
  for (int i = 0; i < 30; ++i) {
    votes.push_back({"a" + std::to_string(i), "A", i % 2 ? "B" : "C", "s", VoteOutcome::AWins, "r", "t"});
    votes.push_back({"b" + std::to_string(i), "B", "C", "s", i % 3 ? VoteOutcome::Tie : VoteOutcome::BWins, "r", "t"});
  }
  {
    std::ofstream log(dir / "votes.ndjson");
    for (const auto& v : votes) log << vote_to_line(v) << "\n";
  }
  const Run r = cli("eval elo " + q(dir / "votes.ndjson") + " --rounds 200 --seed 4 --json " + q(dir / "board.json"));
  CAPTURE(r.out);
  CHECK(r.code == 0);
  CHECK(r.out.find("Rank") != std::string::npos);
  LeaderboardConfig cfg;
  cfg.rounds = 200;
  cfg.seed = 4;
  const auto expected = leaderboard(votes, {}, cfg);
  const json board = read_json(dir / "board.json");
  REQUIRE(board.size() == expected.size());
  for (size_t i = 0; i < expected.size(); ++i) {
    CHECK(board[i]["model"] == expected[i].model);
    CHECK(board[i]["rank"] == expected[i].rank);
    CHECK(board[i]["rating"].get<double>() == expected[i].rating);
  }
}

TEST_CASE("simulate scores a directory deterministically") {
  const auto a = test::temp_dir("cli_sim_a"), b = test::temp_dir("cli_sim_b");
  const fs::path corpus = test::fixture("scenarios");
  CHECK(cli("simulate " + q(corpus) + " -o " + q(a)).code == 0);
  CHECK(cli("simulate " + q(corpus) + " -o " + q(b)).code == 0);
  const json scores = read_json(a / "scores.json");
  CHECK(scores["scenarios"].size() == 3);
  CHECK(scores["mean_score"].get<double>() >= 0.0);
  CHECK(scores["mean_score"].get<double>() <= 1.0);
  CHECK(test::read_text(a / "scores.json") == test::read_text(b / "scores.json"));
  CHECK(test::read_text(a / "single_lane.trace.json") == test::read_text(b / "single_lane.trace.json"));
}

TEST_CASE("batch runs a manifest with per-scenario scripts") {
  const auto dir = test::temp_dir("cli_batch");
  json items = json::array();
  Scenario s = load_scenario_file(kSingleLane);
  for (int i = 0; i < 4; ++i) {
    s.scenario_id = "single_lane_copy_" + std::to_string(i);
    save_scenario_file(s, dir / (s.scenario_id + ".json"));
    fs::create_directories(dir / "scripts" / s.scenario_id / "sma");
    fs::copy_file(kScripts / "single_lane_otm" / "sma" / "001_response.txt", dir / "scripts" / s.scenario_id / "sma" / "001.txt");
    items.push_back({{"scenario", s.scenario_id + ".json"}, {"instruction", "add a parked vehicle ahead"}});
  }
  std::ofstream(dir / "run.json") << json{{"strategy", "OTM"}, {"backend", "scripted:scripts"}, {"output_dir", "out"}, {"items", items}}.dump(2);

  const Run r = cli("batch " + q(dir / "run.json") + " -j 3");
  CAPTURE(r.out);
  CHECK(r.code == 0);
  const json summary = read_json(dir / "out" / "summary.json");
  CHECK(summary["counts"]["ACCEPTED"] == 4);
  for (int i = 0; i < 4; ++i) CHECK(fs::exists(dir / "out" / ("single_lane_copy_" + std::to_string(i) + ".json")));

  fs::remove_all(dir / "scripts" / "single_lane_copy_2");
  fs::create_directories(dir / "scripts" / "single_lane_copy_2" / "sma");
  const Run partial = cli("batch " + q(dir / "run.json") + " -j 2");
  CHECK(partial.code == 1);
  const json s2 = read_json(dir / "out" / "summary.json");
  CHECK(s2["items"][2]["status"] == "FAILED");
  CHECK(s2["items"][3]["status"] == "ACCEPTED");
}

TEST_CASE("arena serve answers over HTTP and stops on SIGTERM") {
  const auto dir = test::temp_dir("cli_arena");
  const auto png = encode_png(RgbImage{2, 2, std::vector<std::uint8_t>(12, 7)});
  for (const char* m : {"ra", "rb"}) {
    fs::create_directories(dir / m);
    std::ofstream(dir / m / "s1.png", std::ios::binary).write(reinterpret_cast<const char*>(png.data()),
                                                              static_cast<std::streamsize>(png.size()));
  }
  std::ofstream(dir / "arena.json") << json{{"models", {{{"name", "model-a"}, {"renders", "ra"}}, {{"name", "model-b"}, {"renders", "rb"}}}}}.dump();

  const std::string manifest = (dir / "arena.json").string(), port_file = (dir / "port").string();
  std::vector<std::string> args{SCENAUG_CLI, "arena", "serve", manifest, "--port", "0", "--port-file", port_file};
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);
  pid_t pid = 0;
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_addopen(&actions, 1, "/dev/null", O_WRONLY, 0);
  REQUIRE(posix_spawn(&pid, SCENAUG_CLI, &actions, nullptr, argv.data(), environ) == 0);
  posix_spawn_file_actions_destroy(&actions);

  int port = 0;
  for (int i = 0; i < 200 && port == 0; ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(25));
    const std::string text = test::read_text(port_file);
    if (!text.empty() && text.back() == '\n') port = std::stoi(text);
  }
  REQUIRE(port > 0);
  httplib::Client c("127.0.0.1", port);
  auto res = c.Get("/api/matchup?rater=x");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->body.find("model-a") == std::string::npos);
  res = c.Get("/api/leaderboard");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(json::parse(res->body).size() == 2);

  ::kill(pid, SIGTERM);
  int status = 0;
  ::waitpid(pid, &status, 0);
  CHECK(WIFEXITED(status));
  CHECK(WEXITSTATUS(status) == 0);
}
