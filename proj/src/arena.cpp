#include "scenaug/arena.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>

#include <fmt/format.h>
#include <httplib.h>

#include "scenaug/errors.hpp"
#include "text_util.hpp"

namespace scenaug {

namespace fs = std::filesystem;

ArenaConfig ArenaConfig::from_json(const nlohmann::json& j, const fs::path& base) {
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
  ArenaConfig cfg;
  try {
    for (const auto& m : j.at("models")) {
      cfg.models.push_back({m.at("name").get<std::string>(), resolve(m.at("renders").get<std::string>())});
    }
    if (j.contains("instructions")) cfg.instructions = j["instructions"].get<std::map<std::string, std::string>>();
    cfg.vote_log = resolve(j.value("vote_log", std::string("votes.ndjson")));
    cfg.seed = j.value("seed", std::uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(fmt::format("arena manifest: {}", e.what()));
  }
  return cfg;
}

nlohmann::json MatchupPayload::to_json() const {
  return {{"matchup_id", matchup_id},
          {"scenario_id", scenario_id},
          {"left_image_url", left_image_url},
          {"right_image_url", right_image_url},
          {"instruction_text", instruction_text}};
}

std::optional<VoteChoice> parse_vote_choice(std::string_view s) {
  const std::string u = detail::to_upper(detail::trim(s));
  if (u == "LEFT") return VoteChoice::Left;
  if (u == "RIGHT") return VoteChoice::Right;
  if (u == "TIE") return VoteChoice::Tie;
  return std::nullopt;
}

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

Arena::Arena(ArenaConfig cfg) : cfg_(std::move(cfg)), rng_(cfg_.seed) {
  std::vector<std::set<std::string>> scenarios(cfg_.models.size());
  for (size_t i = 0; i < cfg_.models.size(); ++i) {
    const auto& m = cfg_.models[i];
    if (!fs::is_directory(m.render_dir)) continue;
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(m.render_dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      const std::string scenario = f.stem().string();
      scenarios[i].insert(scenario);
      const std::string id = fresh_id();
      image_ids_[{m.name, scenario}] = id;
      image_paths_[id] = f;
    }
  }
  for (size_t a = 0; a < cfg_.models.size(); ++a) {
    for (size_t b = a + 1; b < cfg_.models.size(); ++b) {
      for (const auto& sc : scenarios[a]) {
        if (scenarios[b].contains(sc)) triples_.push_back({a, b, sc});
      }
    }
  }

  votes_ = load_vote_log(cfg_.vote_log);
  for (const auto& v : votes_) {
    resolved_.insert(v.matchup_id);
    for (size_t t = 0; t < triples_.size(); ++t) {
      const auto& tr = triples_[t];
      const auto& na = cfg_.models[tr.a].name;
      const auto& nb = cfg_.models[tr.b].name;
      const bool same_pair = (v.model_a == na && v.model_b == nb) || (v.model_a == nb && v.model_b == na);
      if (same_pair && tr.scenario == v.scenario_id) ++rater_counts_[v.rater_id][t];
    }
  }
}

std::string Arena::fresh_id() { return fmt::format("{:016x}", rng_()); }

MatchupPayload Arena::next_matchup(const std::string& rater_id) {
  std::lock_guard lock(mutex_);
  if (triples_.empty()) throw NoContent("no two models share a rendered scenario");
  const auto& counts = rater_counts_[rater_id];
  auto count_of = [&](size_t t) {
    auto it = counts.find(t);
    return it == counts.end() ? 0 : it->second;
  };
  int least = std::numeric_limits<int>::max();
  for (size_t t = 0; t < triples_.size(); ++t) least = std::min(least, count_of(t));
  std::vector<size_t> pool;
  for (size_t t = 0; t < triples_.size(); ++t) {
    if (count_of(t) == least) pool.push_back(t);
  }
  const Triple& tr = triples_[pool[rng_() % pool.size()]];
  std::string left = cfg_.models[tr.a].name, right = cfg_.models[tr.b].name;
  if (rng_() & 1U) std::swap(left, right);

  std::string id;
  do {
    id = fresh_id();
  } while (pending_.contains(id) || resolved_.contains(id));
  pending_[id] = {rater_id, tr.scenario, left, right};

  MatchupPayload p;
  p.matchup_id = id;
  p.scenario_id = tr.scenario;
  p.left_image_url = "/images/" + image_ids_.at({left, tr.scenario}) + ".png";
  p.right_image_url = "/images/" + image_ids_.at({right, tr.scenario}) + ".png";
  if (auto it = cfg_.instructions.find(tr.scenario); it != cfg_.instructions.end()) p.instruction_text = it->second;
  return p;
}

VoteRecord Arena::record_vote(const std::string& matchup_id, VoteChoice choice, const std::string& rater_id) {
  std::lock_guard lock(mutex_);
  if (resolved_.contains(matchup_id)) throw DuplicateVote(fmt::format("matchup {} already has a vote", matchup_id));
  auto it = pending_.find(matchup_id);
  if (it == pending_.end() || it->second.rater != rater_id) {
    throw UnknownMatchup(fmt::format("no pending matchup {} for this rater", matchup_id));
  }
  const Pending p = it->second;

  VoteRecord v;
  v.matchup_id = matchup_id;
  v.model_a = std::min(p.left, p.right);
  v.model_b = std::max(p.left, p.right);
  v.scenario_id = p.scenario;
  v.rater_id = rater_id;
  v.timestamp = utc_now();
  if (choice == VoteChoice::Tie) {
    v.outcome = VoteOutcome::Tie;
  } else {
    const std::string& winner = choice == VoteChoice::Left ? p.left : p.right;
    v.outcome = winner == v.model_a ? VoteOutcome::AWins : VoteOutcome::BWins;
  }

  {
    std::ofstream out(cfg_.vote_log, std::ios::app);
    if (!out) throw std::runtime_error("cannot append to vote log " + cfg_.vote_log.string());
    out << vote_to_line(v) << '\n';
    out.flush();
    if (!out) throw std::runtime_error("cannot append to vote log " + cfg_.vote_log.string());
  }
  pending_.erase(it);
  resolved_.insert(matchup_id);
  for (size_t t = 0; t < triples_.size(); ++t) {
    const auto& tr = triples_[t];
    if (tr.scenario == p.scenario &&
        std::min(cfg_.models[tr.a].name, cfg_.models[tr.b].name) == v.model_a &&
        std::max(cfg_.models[tr.a].name, cfg_.models[tr.b].name) == v.model_b) {
      ++rater_counts_[rater_id][t];
    }
  }
  votes_.push_back(v);
  return v;
}

std::vector<EloEntry> Arena::leaderboard() const {
  const auto snapshot = votes();
  const auto names = model_names();
  return scenaug::leaderboard(snapshot, names, cfg_.leaderboard);
}

std::vector<VoteRecord> Arena::votes() const {
  std::lock_guard lock(mutex_);
  return votes_;
}

std::optional<std::vector<std::uint8_t>> Arena::image(const std::string& image_id) const {
  auto it = image_paths_.find(image_id);
  if (it == image_paths_.end()) return std::nullopt;
  std::ifstream in(it->second, std::ios::binary);
  if (!in) return std::nullopt;
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::vector<std::string> Arena::model_names() const {
  std::vector<std::string> out;
  for (const auto& m : cfg_.models) out.push_back(m.name);
  return out;
}

// ---------------------------------------------------------------------------

struct ArenaServer::Impl {
  Arena& arena;
  httplib::Server server;
};

namespace {

void send_error(httplib::Response& res, int status, std::string_view message) {
  res.status = status;
  res.set_content(nlohmann::json{{"error", std::string(message)}}.dump(), "application/json");
}

}  // namespace

ArenaServer::ArenaServer(Arena& arena, std::optional<fs::path> static_dir) : impl_(new Impl{arena, {}}) {
  auto& srv = impl_->server;
  Arena* a = &arena;

  srv.Get("/api/matchup", [a](const httplib::Request& req, httplib::Response& res) {
    const std::string rater = req.get_param_value("rater");
    if (rater.empty()) return send_error(res, 400, "missing rater parameter");
    try {
      res.set_content(a->next_matchup(rater).to_json().dump(), "application/json");
    } catch (const NoContent&) {
      res.status = 204;
    }
  });

  srv.Post("/api/vote", [a](const httplib::Request& req, httplib::Response& res) {
    nlohmann::json body = nlohmann::json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object()) return send_error(res, 400, "body must be a JSON object");
    const auto str = [&](const char* k) {
      return body.contains(k) && body[k].is_string() ? body[k].get<std::string>() : std::string();
    };
    const auto choice = parse_vote_choice(str("outcome"));
    const std::string id = str("matchup_id"), rater = str("rater");
    if (!choice || id.empty() || rater.empty()) {
      return send_error(res, 400, "expected matchup_id, outcome (LEFT, RIGHT or TIE) and rater");
    }
    try {
      a->record_vote(id, *choice, rater);
      res.status = 204;
    } catch (const UnknownMatchup&) {
      send_error(res, 404, "unknown matchup");
    } catch (const DuplicateVote&) {
      send_error(res, 409, "matchup already voted");
    }
  });

  srv.Get("/api/leaderboard", [a](const httplib::Request&, httplib::Response& res) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& e : a->leaderboard()) {
      rows.push_back({{"rank", e.rank},
                      {"model", e.model},
                      {"rating", e.rating},
                      {"ci_low", e.ci_low},
                      {"ci_high", e.ci_high},
                      {"votes", e.votes}});
    }
    res.set_content(rows.dump(), "application/json");
  });

  srv.Get(R"(/images/([0-9a-f]+)\.png)", [a](const httplib::Request& req, httplib::Response& res) {
    const auto bytes = a->image(req.matches[1].str());
    if (!bytes) return send_error(res, 404, "unknown image");
    res.set_content(std::string(bytes->begin(), bytes->end()), "image/png");
  });

  if (static_dir && fs::is_directory(*static_dir)) srv.set_mount_point("/", static_dir->string());

  srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr) {
    send_error(res, 500, "internal error");
  });
}

ArenaServer::~ArenaServer() { stop(); }

int ArenaServer::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

void ArenaServer::listen() { impl_->server.listen_after_bind(); }

void ArenaServer::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace scenaug
