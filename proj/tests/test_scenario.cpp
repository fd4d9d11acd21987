#include <doctest.h>

#include <filesystem>
#include <numbers>
#include <random>

#include "scenaug/errors.hpp"
#include "scenaug/scenario.hpp"
#include "scenaug/scenario_io.hpp"
#include "support.hpp"

using namespace scenaug;

namespace {

const char* kMinimal = R"({
  "scenario_id": "minimal", "scenario_type": "OTHER",
  "agents": [{"id": "Ego", "vector": ["EGO_VEHICLE", 0.0, 0.0, 0.0, 2.0, 4.5, 0.0, "L1"]}],
  "lanes": [{"id": "L1", "travel_direction": "Eastwards", "relative_direction_to_ego": "SAME", "width": 3.5,
             "speed_limit": 10.0, "geometry": {"polyline": [[0.0, 0.0], [50.0, 0.0]]}}],
  "lane_connectors": [], "areas": []
})";

double grid(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_int_distribution<long> d(static_cast<long>(lo * 1000), static_cast<long>(hi * 1000));
  return static_cast<double>(d(rng)) / 1000.0;
}

/// Random valid scenario whose numbers already sit on the millimeter grid.
Scenario random_scenario(std::mt19937_64& rng, int index) {
  Scenario s;
  s.scenario_id = "rand_" + std::to_string(index);
  s.scenario_type = static_cast<ScenarioType>(index % 6);
  const int lanes = 1 + static_cast<int>(rng() % 3);
  for (int l = 0; l < lanes; ++l) {
    Lane lane;
    lane.id = "L" + std::to_string(l);
    lane.travel_direction = l % 2 ? "Westwards" : "Eastwards";
    lane.relative_direction_to_ego = l % 2 ? RelativeDirection::Opposite : RelativeDirection::Same;
    lane.width = grid(rng, 2.5, 4.0);
    lane.speed_limit = grid(rng, 5.0, 30.0);
    if (rng() % 2) {
      Polyline pl;
      for (int i = 0; i < 4; ++i) pl.push_back({grid(rng, 10.0 * i, 10.0 * i + 1.0), grid(rng, 3.5 * l - 0.5, 3.5 * l + 0.5)});
      lane.geometry = pl;
    } else {
      lane.geometry = ControlQuad{{0, 3.5 * l}, {grid(rng, 5, 15), 3.5 * l}, {grid(rng, 20, 30), grid(rng, -5, 5)},
                                  {40, grid(rng, -5, 5)}};
    }
    s.lanes.push_back(lane);
  }
  if (lanes > 1) {
    LaneConnector c;
    c.id = "C0";
    c.from_lane = "L0";
    c.to_lane = "L1";
    c.turn_type = TurnType::Left;
    c.traffic_light_state = TrafficLightState::Green;
    c.speed_limit = 8.0;
    c.geometry = Polyline{{40, 0}, {45, 2}, {50, 5}};
    s.connectors.push_back(c);
  }
  const int agents = 1 + static_cast<int>(rng() % 6);
  for (int a = 0; a < agents; ++a) {
    AgentState ag;
    ag.id = a == 0 ? "Ego" : "Agent" + std::to_string(a);
    ag.type = a == 0 ? AgentType::EgoVehicle : static_cast<AgentType>(1 + rng() % 6);
    ag.center = {grid(rng, -50, 50), grid(rng, -50, 50)};
    ag.heading = a == 1 ? std::numbers::pi : grid(rng, -3.141, 3.141);
    ag.width = grid(rng, 0.3, 3.0);
    ag.length = grid(rng, 0.3, 6.0);
    ag.velocity = grid(rng, 0.0, 20.0);
    if (rng() % 2) ag.lane_id = "L" + std::to_string(rng() % static_cast<unsigned>(lanes));
    s.agents.push_back(ag);
  }
  s.areas.push_back({"A0", AreaKind::Drivable, {{-60, -10}, {60, -10}, {60, 10}, {-60, 10}}});
  s.areas.push_back({"A1", AreaKind::Walkway, {{-60, 10}, {60, 10}, {0, 14}}});
  return s;
}

ModificationResult add_agent2() {
  ModificationResult m;
  m.modification_dicts.push_back({ModAction::Add, "Agent2", "parked vehicle", {}});
  AgentState a;
  a.id = "Agent2";
  a.type = AgentType::Vehicle;
  a.center = {21.4, 2.6};
  a.width = 2.0;
  a.length = 4.5;
  a.lane_id = "Lane1";
  m.modified_vectors.push_back(a);
  m.iterations = 1;
  return m;
}

ModificationResult removal(const std::string& id) {
  ModificationResult m;
  m.modification_dicts.push_back({ModAction::Remove, id, "", {}});
  m.iterations = 1;
  return m;
}

}  // namespace

TEST_CASE("minimal document loads") {
  const Scenario s = load_scenario(kMinimal);
  CHECK(s.agents.size() == 1);
  CHECK(s.lanes.size() == 1);
  CHECK(s.ego().id == "Ego");
  CHECK(save_scenario(s) == save_scenario(s));
  CHECK(save_scenario(load_scenario(save_scenario(s))) == save_scenario(s));
}

TEST_CASE("dangling lane reference is an integrity error") {
  std::string doc = kMinimal;
  doc.replace(doc.find("\"L1\"]"), 4, "\"LaneX\"");
  CHECK_THROWS_AS(load_scenario(doc), IntegrityError);
}

TEST_CASE("single_lane fixture round-trips and keeps table order") {
  const Scenario s = test::load("single_lane");
  const std::string text = save_scenario(s);
  CHECK(load_scenario(text) == s);
  CHECK(text.find("[\"EGO_VEHICLE\"") != std::string::npos);
  CHECK(agent_vector_text(s.ego()) == "[\"EGO_VEHICLE\", 0.000, 0.000, 0.000, 2.000, 4.500, 0.000, \"Lane1\"]");
}

TEST_CASE("heading of pi survives a round trip with its sign") {
  Scenario s = load_scenario(kMinimal);
  AgentState a = s.ego();
  a.id = "Back";
  a.type = AgentType::Vehicle;
  a.heading = std::numbers::pi;
  s.agents.push_back(a);
  const Scenario r = load_scenario(save_scenario(s));
  CHECK(r.find_agent("Back")->heading == std::numbers::pi);
  CHECK(heading_from_document(3.142) == std::numbers::pi);
  CHECK(heading_from_document(-3.142) == std::numbers::pi);
}

TEST_CASE("random scenarios round-trip structurally") {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 200; ++i) {
    const Scenario s = random_scenario(rng, i);
    REQUIRE_NOTHROW(validate_scenario(s));
    const std::string text = save_scenario(s);
    const Scenario r = load_scenario(text);
    CHECK(r == s);
    CHECK(save_scenario(r) == text);
  }
}

TEST_CASE("every fixture in the invalid corpus is rejected") {
  int count = 0;
  for (const auto& entry : std::filesystem::directory_iterator(test::fixture("invalid"))) {
    const std::string name = entry.path().stem().string();
    const std::string doc = test::read_text(entry.path());
    CAPTURE(name);
    if (name.starts_with("schema_")) {
      CHECK_THROWS_AS(load_scenario(doc), SchemaError);
    } else {
      CHECK_THROWS_AS(load_scenario(doc), IntegrityError);
    }
    ++count;
  }
  CHECK(count >= 10);
}

TEST_CASE("apply_modification") {
  const Scenario s = test::load("single_lane");

  SUBCASE("add a parked vehicle") {
    const Scenario r = apply_modification(s, add_agent2());
    REQUIRE(r.agents.size() == 2);
    const AgentState* a = r.find_agent("Agent2");
    REQUIRE(a);
    CHECK(a->velocity == 0.0);
    CHECK(a->center == Vec2{21.4, 2.6});
    CHECK(r.lanes == s.lanes);
    CHECK(r.areas == s.areas);
  }

  SUBCASE("add then remove restores the agent set") {
    const Scenario r = apply_modification(apply_modification(s, add_agent2()), removal("Agent2"));
    CHECK(r.agents == s.agents);
    CHECK(r == s);
  }

  SUBCASE("remove twice fails instead of doing nothing") {
    const Scenario once = apply_modification(s, add_agent2());
    const Scenario r = apply_modification(once, removal("Agent2"));
    CHECK(r.agents.size() == 1);
    CHECK_THROWS_AS(apply_modification(r, removal("Agent2")), IntegrityError);
  }

  SUBCASE("modify of a missing id") {
    ModificationResult m = add_agent2();
    m.modification_dicts[0].action = ModAction::Modify;
    m.modification_dicts[0].modified_agent = "AgentZ";
    m.modified_vectors[0].id = "AgentZ";
    CHECK_THROWS_AS(apply_modification(s, m), IntegrityError);
  }

  SUBCASE("duplicate add") {
    const Scenario once = apply_modification(s, add_agent2());
    CHECK_THROWS_AS(apply_modification(once, add_agent2()), IntegrityError);
  }

  SUBCASE("modify replaces fields") {
    const Scenario once = apply_modification(s, add_agent2());
    ModificationResult m = add_agent2();
    m.modification_dicts[0].action = ModAction::Modify;
    m.modified_vectors[0].center = {30.0, 1.0};
    m.modified_vectors[0].velocity = 3.0;
    const Scenario r = apply_modification(once, m);
    CHECK(r.find_agent("Agent2")->center == Vec2{30.0, 1.0});
    CHECK(r.find_agent("Agent2")->velocity == 3.0);
    CHECK(r.agents.size() == 2);
  }

  SUBCASE("invalid resulting agent") {
    ModificationResult m = add_agent2();
    m.modified_vectors[0].width = -1.0;
    CHECK_THROWS_AS(apply_modification(s, m), ValidationError);
  }

  SUBCASE("removing the ego breaks the scenario") {
    CHECK_THROWS_AS(apply_modification(s, removal("Agent1")), IntegrityError);
  }
}

TEST_CASE("enum names parse case-insensitively") {
  CHECK(parse_agent_type("vehicle") == AgentType::Vehicle);
  CHECK(parse_agent_type("Ego_Vehicle") == AgentType::EgoVehicle);
  CHECK_FALSE(parse_agent_type("TRUCK"));
  CHECK(parse_mod_action("add") == ModAction::Add);
  CHECK(to_string(ScenarioType::OvertakeOncoming) == "OVERTAKE_ONCOMING");
  CHECK(is_vehicle_like(AgentType::Bicycle));
  CHECK_FALSE(is_vehicle_like(AgentType::Pedestrian));
}

TEST_CASE("polygon helpers") {
  const Polyline square{{0, 0}, {2, 0}, {2, 2}, {0, 2}};
  CHECK(polygon_is_simple(square));
  CHECK_FALSE(polygon_is_simple(Polyline{{0, 0}, {2, 2}, {2, 0}, {0, 2}}));
  CHECK(point_in_polygon({1, 1}, square));
  CHECK_FALSE(point_in_polygon({3, 1}, square));
  CHECK(std::abs(polygon_area(square)) == doctest::Approx(4.0));
}
