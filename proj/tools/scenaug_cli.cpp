// scenaug: command-line front end for scenario modification, rendering,
// evaluation, closed-loop simulation and the comparison arena.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <pthread.h>

#include "scenaug/arena.hpp"
#include "scenaug/errors.hpp"
#include "scenaug/eval.hpp"
#include "scenaug/orchestrator.hpp"
#include "scenaug/render.hpp"
#include "scenaug/scenario_io.hpp"
#include "scenaug/simloop.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace scenaug;

namespace {

enum Exit : int { kAccepted = 0, kFailed = 1, kMaxIterations = 2, kUsage = 64, kBadDocument = 65, kIo = 74 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw fs::filesystem_error("cannot read", p, std::make_error_code(std::errc::no_such_file_or_directory));
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, std::string_view content) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw fs::filesystem_error("cannot write", p, std::make_error_code(std::errc::io_error));
}

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
  write_file(p, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

json read_json(const fs::path& p) {
  try {
    return json::parse(read_file(p));
  } catch (const json::parse_error& e) {
    throw SchemaError(fmt::format("{}: {}", p.string(), e.what()));
  }
}

/// Scenario files of a directory (sorted) or a single file.
std::vector<fs::path> scenario_files(const fs::path& p) {
  if (!fs::exists(p)) throw fs::filesystem_error("no such path", p, std::make_error_code(std::errc::no_such_file_or_directory));
  if (!fs::is_directory(p)) return {p};
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(p)) {
    if (e.is_regular_file() && e.path().extension() == ".json") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

Strategy strategy_from(const std::string& name) {
  const auto s = parse_strategy(name);
  if (!s) throw UsageError(fmt::format("unknown strategy '{}' (expected OTM, FC, TQA or VQA)", name));
  return *s;
}

// ---------------------------------------------------------------------------
// Backends

struct Backends {
  std::shared_ptr<ChatBackend> sma, qa, vlm;
};

std::shared_ptr<ChatBackend> scripted_role(const fs::path& dir, const char* role, bool fallback_to_dir) {
  if (fs::is_directory(dir / role)) return ScriptedBackend::from_directory(dir / role);
  if (fallback_to_dir) return ScriptedBackend::from_directory(dir);
  return nullptr;
}

/// `scripted:<dir>` reads sma/, qa/ and vlm/ subdirectories (a bare directory
/// of numbered files serves as the modifier script). Anything else is a JSON
/// file with one backend config, or one per role under "sma", "qa", "vlm".
Backends make_backends(const std::string& spec, const std::string& scenario_id = "") {
  Backends b;
  if (spec.starts_with("scripted:")) {
    fs::path dir = spec.substr(9);
    if (!fs::is_directory(dir)) throw fs::filesystem_error("no script directory", dir, std::make_error_code(std::errc::no_such_file_or_directory));
    if (!scenario_id.empty() && fs::is_directory(dir / scenario_id)) dir /= scenario_id;
    b.sma = scripted_role(dir, "sma", true);
    b.qa = scripted_role(dir, "qa", false);
    b.vlm = scripted_role(dir, "vlm", false);
    return b;
  }
  const json j = read_json(spec);
  auto http = [](const json& c) { return std::make_shared<HttpBackend>(BackendConfig::from_json(c)); };
  if (j.contains("model_name")) {
    b.sma = b.qa = b.vlm = http(j);
    return b;
  }
  if (!j.contains("sma")) throw SchemaError("backend config needs 'model_name' or a 'sma' section");
  b.sma = http(j["sma"]);
  b.qa = j.contains("qa") ? http(j["qa"]) : b.sma;
  b.vlm = j.contains("vlm") ? http(j["vlm"]) : b.qa;
  return b;
}

PipelineConfig pipeline_config(Strategy strategy, const Backends& b, int max_qa, const fs::path& problems) {
  PipelineConfig cfg;
  cfg.strategy = strategy;
  cfg.max_qa_iterations = max_qa;
  cfg.sma_backend = b.sma;
  cfg.qa_backend = b.qa;
  cfg.vlm_backend = b.vlm;
  if (strategy == Strategy::TextQa) cfg.common_problems = load_common_problems(problems);
  return cfg;
}

int exit_for(PipelineStatus s) {
  switch (s) {
    case PipelineStatus::Accepted: return kAccepted;
    case PipelineStatus::MaxIterations: return kMaxIterations;
    case PipelineStatus::Failed: return kFailed;
  }
  return kFailed;
}

void write_outcome(const fs::path& out, const std::string& id, const PipelineOutcome& o, Strategy strategy) {
  fs::create_directories(out);
  if (o.modified) save_scenario_file(*o.modified, out / (id + ".json"));
  write_file(out / (id + ".transcript.json"), outcome_to_json(o, id, strategy).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Subcommands

struct ModifyArgs {
  fs::path scenario;
  std::string instruction;
  fs::path instruction_file;
  std::string strategy = "OTM";
  std::string backend;
  int max_qa = 3;
  fs::path out = "out";
  fs::path problems = fs::path(SCENAUG_DATA_DIR) / "common_problems.txt";
};

int run_modify(const ModifyArgs& a) {
  const Scenario s = load_scenario_file(a.scenario);
  std::string instruction = a.instruction;
  if (!a.instruction_file.empty()) instruction = read_file(a.instruction_file);
  if (instruction.empty()) throw UsageError("an instruction is required (--instruction or --instruction-file)");
  const Strategy strategy = strategy_from(a.strategy);
  const PipelineConfig cfg = pipeline_config(strategy, make_backends(a.backend), a.max_qa, a.problems);
  const PipelineOutcome o = try_run_pipeline(s, instruction, cfg);
  write_outcome(a.out, s.scenario_id, o, strategy);
  fmt::print("{} {} generations={} tool_calls={}{}\n", s.scenario_id, to_string(o.status), o.sma_calls, o.tool_calls,
             o.error.empty() ? "" : " error=" + o.error);
  return exit_for(o.status);
}

struct RenderArgs {
  fs::path scenario;
  std::vector<std::string> modified;
  int png = 0;
  fs::path out = "out";
};

int run_render(const RenderArgs& a) {
  const Scenario s = load_scenario_file(a.scenario);
  const std::set<std::string> ids(a.modified.begin(), a.modified.end());
  const RenderResult r = render_bev(s, ids);
  write_file(a.out / (s.scenario_id + ".svg"), r.svg);
  if (a.png > 0) write_bytes(a.out / (s.scenario_id + ".png"), rasterize(r.svg, a.png));
  fmt::print("{}: extent {:.1f} m, {} agent(s) outside the view\n", s.scenario_id, r.view.extent, r.clipped_agents);
  return 0;
}

struct DisplacementArgs {
  fs::path generated, reference;
  fs::path report;
};

int run_displacement(const DisplacementArgs& a) {
  json per = json::array();
  double sum = 0.0;
  int pairs = 0;
  std::map<std::string, int> categories;
  fmt::print("{:<32} {:>6} {:>9} {:>9} {:>7}\n", "scenario", "pairs", "mean_m", "max_m", "unmatch");
  for (const fs::path& gen_path : scenario_files(a.generated)) {
    const fs::path ref_path = a.reference / gen_path.filename();
    if (!fs::exists(ref_path)) {
      fmt::print(stderr, "skipping {}: no reference\n", gen_path.filename().string());
      continue;
    }
    const Scenario g = load_scenario_file(gen_path), r = load_scenario_file(ref_path);
    const DisplacementReport rep = displacement_error(g.agents, r.agents);
    json labels = json::array();
    for (const auto& l : classify_errors(g.agents, r.agents, g)) {
      ++categories[std::string(to_string(l.category))];
      labels.push_back({{"agent_id", l.agent_id}, {"category", to_string(l.category)}, {"detail", l.detail}});
    }
    json jp = json::array();
    for (const auto& p : rep.pairs) {
      jp.push_back({{"generated", p.generated_id}, {"reference", p.reference_id}, {"distance_m", p.distance_m}});
      sum += p.distance_m;
      ++pairs;
    }
    per.push_back({{"scenario", gen_path.stem().string()},
                   {"pairs", jp},
                   {"mean_m", rep.has_mean() ? json(rep.mean_m) : json(nullptr)},
                   {"max_m", rep.max_m},
                   {"unmatched_generated", rep.unmatched_generated},
                   {"unmatched_reference", rep.unmatched_reference},
                   {"errors", labels}});
    fmt::print("{:<32} {:>6} {:>9} {:>9.3f} {:>7}\n", gen_path.stem().string(), rep.pairs.size(),
               rep.has_mean() ? fmt::format("{:.3f}", rep.mean_m) : "-", rep.max_m,
               rep.unmatched_generated + rep.unmatched_reference);
  }
  const json mean = pairs ? json(sum / pairs) : json(nullptr);
  fmt::print("aggregate mean over {} pair(s): {}\n", pairs, pairs ? fmt::format("{:.3f} m", sum / pairs) : "-");
  if (!a.report.empty()) {
    write_file(a.report, json{{"scenarios", per}, {"aggregate_mean_m", mean}, {"pairs", pairs}, {"categories", categories}}.dump(2) + "\n");
  }
  return 0;
}

struct EloArgs {
  fs::path votes;
  std::vector<std::string> models;
  int rounds = 1000;
  std::uint64_t seed = 0;
  fs::path json_out;
};

int run_elo(const EloArgs& a) {
  if (!fs::exists(a.votes)) throw fs::filesystem_error("no vote log", a.votes, std::make_error_code(std::errc::no_such_file_or_directory));
  const auto votes = load_vote_log(a.votes);
  LeaderboardConfig cfg;
  cfg.rounds = a.rounds;
  cfg.seed = a.seed;
  const auto board = leaderboard(votes, a.models, cfg);
  fmt::print("{:<5} {:<32} {:>6} {:>11} {:>6}\n", "Rank", "Model", "Elo", "95% CI", "Votes");
  json rows = json::array();
  for (const auto& e : board) {
    const std::string ci = fmt::format("-{:.0f}/+{:.0f}", e.rating - e.ci_low, e.ci_high - e.rating);
    fmt::print("{:<5} {:<32} {:>6.0f} {:>11} {:>6}\n", e.rank, e.model, e.rating, ci, e.votes);
    rows.push_back({{"rank", e.rank}, {"model", e.model}, {"rating", e.rating}, {"ci_low", e.ci_low},
                    {"ci_high", e.ci_high}, {"votes", e.votes}});
  }
  if (!a.json_out.empty()) write_file(a.json_out, rows.dump(2) + "\n");
  return 0;
}

struct SimulateArgs {
  fs::path scenarios;
  fs::path out;
};

int run_simulate(const SimulateArgs& a) {
  const SimConfig cfg;
  json per = json::array();
  double total = 0.0;
  int n = 0;
  fmt::print("{:<32} {:>7} {:>5} {:>8} {:>7} {:>6}\n", "scenario", "score", "ttc", "progress", "comfort", "events");
  for (const fs::path& p : scenario_files(a.scenarios)) {
    const Scenario s = load_scenario_file(p);
    json entry{{"scenario", s.scenario_id}};
    try {
      const Route route = build_route(s);
      const SimTrace trace = run_closed_loop(s, cfg);
      const DrivingScore score = driving_score(trace, route, cfg);
      entry["score"] = score_to_json(score);
      if (!a.out.empty()) write_file(a.out / (s.scenario_id + ".trace.json"), trace_to_json(trace).dump() + "\n");
      fmt::print("{:<32} {:>7.3f} {:>5} {:>8.3f} {:>7} {:>6}\n", s.scenario_id, score.score, score.ttc_pass ? "ok" : "FAIL",
                 score.progress_ratio, score.comfort_pass ? "ok" : "FAIL", trace.events.size());
      total += score.score;
    } catch (const RouteError& e) {
      entry["error"] = e.what();
      fmt::print("{:<32} {:>7.3f}  no route: {}\n", s.scenario_id, 0.0, e.what());
    }
    ++n;
    per.push_back(entry);
  }
  const double mean = n ? total / n : 0.0;
  fmt::print("mean driving score over {} scenario(s): {:.3f}\n", n, mean);
  if (!a.out.empty()) write_file(a.out / "scores.json", json{{"scenarios", per}, {"mean_score", mean}}.dump(2) + "\n");
  return 0;
}

struct ServeArgs {
  fs::path manifest;
  std::string host = "127.0.0.1";
  int port = 8080;
  fs::path static_dir;
  fs::path port_file;
};

int run_serve(const ServeArgs& a) {
  // Block termination signals so a dedicated thread can receive them.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  Arena arena(ArenaConfig::from_json(read_json(a.manifest), fs::absolute(a.manifest).parent_path()));
  std::optional<fs::path> web;
  if (!a.static_dir.empty()) web = a.static_dir;
  ArenaServer server(arena, web);
  const int port = server.bind(a.host, a.port);
  if (port < 0) throw fs::filesystem_error(fmt::format("cannot bind {}:{}", a.host, a.port), std::make_error_code(std::errc::address_in_use));
  if (!a.port_file.empty()) write_file(a.port_file, std::to_string(port) + "\n");
  fmt::print("arena listening on http://{}:{} ({} models, {} votes)\n", a.host, port, arena.model_names().size(),
             arena.votes().size());
  std::fflush(stdout);

  std::thread waiter([&] {
    int sig = 0;
    sigwait(&set, &sig);
    server.stop();
  });
  server.listen();
  waiter.join();
  fmt::print("arena stopped with {} votes\n", arena.votes().size());
  return 0;
}

struct BatchArgs {
  fs::path manifest;
  std::string backend;
  int parallelism = 1;
  fs::path out;
  fs::path problems = fs::path(SCENAUG_DATA_DIR) / "common_problems.txt";
};

/// RunManifest: {"strategy", "backend", "output_dir", "max_qa_iterations",
/// "items": [{"scenario": path, "instruction": text}]}; paths relative to the manifest.
int run_batch_cmd(const BatchArgs& a) {
  const json m = read_json(a.manifest);
  const fs::path base = fs::absolute(a.manifest).parent_path();
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };

  std::vector<BatchItem> items;
  Strategy strategy{};
  int max_qa = 3;
  std::string backend = a.backend;
  fs::path out = a.out;
  try {
    strategy = strategy_from(m.value("strategy", std::string("OTM")));
    max_qa = m.value("max_qa_iterations", 3);
    if (backend.empty()) {
      backend = m.at("backend").get<std::string>();
      if (backend.starts_with("scripted:")) {
        backend = "scripted:" + resolve(backend.substr(9)).string();
      } else {
        backend = resolve(backend).string();
      }
    }
    if (out.empty()) out = resolve(m.value("output_dir", std::string("out")));
    for (const auto& it : m.at("items")) {
      items.push_back({load_scenario_file(resolve(it.at("scenario").get<std::string>())), it.at("instruction").get<std::string>()});
    }
  } catch (const json::exception& e) {
    throw SchemaError(fmt::format("run manifest: {}", e.what()));
  }

  // Shared HTTP backends, per-scenario scripts.
  const bool scripted = backend.starts_with("scripted:");
  const Backends shared = scripted ? Backends{} : make_backends(backend);
  const auto config_for = [&](const BatchItem& item) {
    return pipeline_config(strategy, scripted ? make_backends(backend, item.scenario.scenario_id) : shared, max_qa,
                           a.problems);
  };
  const auto outcomes = run_batch(items, config_for, a.parallelism);

  json summary = json::array();
  int worst = kAccepted;
  std::map<std::string, int> counts;
  for (size_t i = 0; i < items.size(); ++i) {
    const std::string& id = items[i].scenario.scenario_id;
    write_outcome(out, id, outcomes[i], strategy);
    ++counts[std::string(to_string(outcomes[i].status))];
    summary.push_back({{"scenario", id}, {"status", to_string(outcomes[i].status)}, {"generations", outcomes[i].sma_calls},
                       {"error", outcomes[i].error}});
    const int code = exit_for(outcomes[i].status);
    if (code == kFailed || (code == kMaxIterations && worst == kAccepted)) worst = code;
  }
  write_file(out / "summary.json", json{{"strategy", to_string(strategy)}, {"items", summary}, {"counts", counts}}.dump(2) + "\n");
  fmt::print("{} item(s):", items.size());
  for (const auto& [status, n] : counts) fmt::print(" {}={}", status, n);
  fmt::print("\n");
  return worst;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scenario augmentation toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "scenaug 0.1.0");

  ModifyArgs modify;
  auto* cmd_modify = app.add_subcommand("modify", "Modify a scenario from a natural-language instruction");
  cmd_modify->add_option("scenario", modify.scenario, "Scenario document")->required();
  cmd_modify->add_option("-i,--instruction", modify.instruction, "Instruction text");
  cmd_modify->add_option("--instruction-file", modify.instruction_file, "File holding the instruction");
  cmd_modify->add_option("-s,--strategy", modify.strategy, "OTM, FC, TQA or VQA")->capture_default_str();
  cmd_modify->add_option("-b,--backend", modify.backend, "scripted:<dir> or a backend config file")->required();
  cmd_modify->add_option("--max-qa-iters", modify.max_qa, "SMA generations rated by QA")->capture_default_str();
  cmd_modify->add_option("-o,--out", modify.out, "Output directory")->capture_default_str();
  cmd_modify->add_option("--common-problems", modify.problems, "Common-problem list for TQA");

  RenderArgs render;
  auto* cmd_render = app.add_subcommand("render", "Render a bird's-eye view");
  cmd_render->add_option("scenario", render.scenario, "Scenario document")->required();
  cmd_render->add_option("-m,--modified", render.modified, "Ids drawn as modified")->delimiter(',');
  cmd_render->add_option("--png", render.png, "Also rasterize at this many pixels")->check(CLI::Range(0, 4096));
  cmd_render->add_option("-o,--out", render.out, "Output directory")->capture_default_str();

  auto* cmd_eval = app.add_subcommand("eval", "Evaluation metrics");
  cmd_eval->require_subcommand(1);
  DisplacementArgs disp;
  auto* cmd_disp = cmd_eval->add_subcommand("displacement", "Hungarian-matched displacement error");
  cmd_disp->add_option("generated", disp.generated, "Generated scenario directory")->required();
  cmd_disp->add_option("reference", disp.reference, "Reference scenario directory")->required();
  cmd_disp->add_option("--report", disp.report, "Write a JSON report");
  EloArgs elo;
  auto* cmd_elo = cmd_eval->add_subcommand("elo", "Elo leaderboard from a vote log");
  cmd_elo->add_option("votes", elo.votes, "Vote log (one record per line)")->required();
  cmd_elo->add_option("--models", elo.models, "Models to list even without votes")->delimiter(',');
  cmd_elo->add_option("--rounds", elo.rounds, "Bootstrap rounds")->check(CLI::Range(100, 1000000))->capture_default_str();
  cmd_elo->add_option("--seed", elo.seed, "Seed for ordering and resampling")->capture_default_str();
  cmd_elo->add_option("--json", elo.json_out, "Write the table as JSON");

  SimulateArgs sim;
  auto* cmd_sim = app.add_subcommand("simulate", "Closed-loop simulation and driving score");
  cmd_sim->add_option("scenarios", sim.scenarios, "Scenario file or directory")->required();
  cmd_sim->add_option("-o,--out", sim.out, "Write traces and scores here");

  auto* cmd_arena = app.add_subcommand("arena", "Pairwise comparison arena");
  cmd_arena->require_subcommand(1);
  ServeArgs serve;
  auto* cmd_serve = cmd_arena->add_subcommand("serve", "Run the arena HTTP service");
  cmd_serve->add_option("manifest", serve.manifest, "Arena manifest")->required();
  cmd_serve->add_option("--host", serve.host, "Bind address")->capture_default_str();
  cmd_serve->add_option("-p,--port", serve.port, "Port (0 picks a free one)")->check(CLI::Range(0, 65535))->capture_default_str();
  cmd_serve->add_option("--static", serve.static_dir, "Directory served at /");
  cmd_serve->add_option("--port-file", serve.port_file, "Write the bound port here");

  BatchArgs batch;
  auto* cmd_batch = app.add_subcommand("batch", "Run a manifest of modifications");
  cmd_batch->add_option("manifest", batch.manifest, "Run manifest")->required();
  cmd_batch->add_option("-b,--backend", batch.backend, "Overrides the manifest backend");
  cmd_batch->add_option("-j,--parallelism", batch.parallelism, "Concurrent items")->check(CLI::Range(1, 256))->capture_default_str();
  cmd_batch->add_option("-o,--out", batch.out, "Overrides the manifest output directory");
  cmd_batch->add_option("--common-problems", batch.problems, "Common-problem list for TQA");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*cmd_modify) return run_modify(modify);
    if (*cmd_render) return run_render(render);
    if (*cmd_disp) return run_displacement(disp);
    if (*cmd_elo) return run_elo(elo);
    if (*cmd_sim) return run_simulate(sim);
    if (*cmd_serve) return run_serve(serve);
    if (*cmd_batch) return run_batch_cmd(batch);
  } catch (const UsageError& e) {
    fmt::print(stderr, "usage error: {}\n", e.what());
    return kUsage;
  } catch (const fs::filesystem_error& e) {
    fmt::print(stderr, "i/o error: {}\n", e.what());
    return kIo;
  } catch (const SchemaError& e) {
    fmt::print(stderr, "invalid document: {}\n", e.what());
    return kBadDocument;
  } catch (const IntegrityError& e) {
    fmt::print(stderr, "invalid document: {}\n", e.what());
    return kBadDocument;
  } catch (const ValidationError& e) {
    fmt::print(stderr, "invalid input: {}\n", e.what());
    return kBadDocument;
  } catch (const Error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kFailed;
  }
  return kUsage;
}
