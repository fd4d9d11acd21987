#include "scenaug/prompt.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <utility>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "scenaug/errors.hpp"
#include "scenaug/lane_tool.hpp"
#include "scenaug/scenario_io.hpp"
#include "text_util.hpp"

namespace scenaug {

using nlohmann::json;
namespace d = detail;

namespace {

constexpr std::string_view kPreamble =
    "You are a traffic scenario editor that edits fix-form traffic scenario descriptions according to the "
    "user's natural language instructions.";

constexpr std::string_view kInputFormat =
    "Input format:\n"
    "Input vectors {\"Agent\": [agent type, center x, center y, heading, width, length, velocity, lane ID]}\n"
    "Lane vectors {\"Lane\": [lane number, travel direction, relative direction to ego, width, speed limit, "
    "lane coordinates]}\n"
    "Lane connector vectors {\"Connector\": [from lane, to lane, traffic light state, turn type, speed limit, "
    "lane coordinates]}\n"
    "Area vectors {\"Area\": [area kind, boundary points]}\n"
    "All coordinates are meters in an ego-centric frame with x pointing east and y pointing north. Headings are "
    "radians, 0 = east, counter-clockwise positive. Widths and lengths are meters, velocities and speed limits "
    "m/s.\n"
    "Agent types: EGO_VEHICLE, VEHICLE, PEDESTRIAN, BICYCLE, TRAFFIC_CONE, BARRIER, GENERIC_OBJECT.\n";

constexpr std::string_view kPolylineNote =
    "Lane coordinates are centerline points sampled every 5 meters in travel direction.\n";
constexpr std::string_view kBezierNote =
    "Lane coordinates are the four control points of a cubic Bezier curve describing the centerline in travel "
    "direction.\n";

constexpr std::string_view kInstructionFormat =
    "Instruction format: natural language describing which traffic agents or objects to add, remove or modify, "
    "usually with approximate distances and positions relative to the ego vehicle or to lanes.\n";

constexpr std::string_view kOutputFormat =
    "Output format:\n"
    "Insights: Take your time and step by step describe the initial scenario and the entities relevant to the "
    "instructions.\n"
    "Summary: Summarize what the user wants to change.\n"
    "Modification Dict: One JSON object per line and per changed agent, {\"Action\": \"add\" | \"remove\" | "
    "\"modify\", \"Modified_Agent\": \"<agent id>\", \"Rationale\": \"<short reason>\"}.\n"
    "Modification Calculations: Step by step calculations of positions, headings, sizes and velocities.\n"
    "Modified Vectors: One JSON object per line for every added or modified agent, in the input vector format, "
    "{\"<agent id>\": [agent type, center x, center y, heading, width, length, velocity, lane ID]}. Do not list "
    "removed agents.\n";

constexpr std::string_view kToolProtocol =
    "Tool use:\n"
    "You can retrieve points on a lane or lane connector centerline. To do so, write a line of exactly this form "
    "and stop your answer:\n"
    "CALL lane_point(\"<lane or connector id>\", <distance in meters from the start of the lane>)\n"
    "You will receive a reply line\n"
    "RESULT lane_point: x=<x>, y=<y>, heading=<heading>\n"
    "or RESULT lane_point: ERROR <code> when the call failed. Call the function as often as needed, one call per "
    "answer, and give the full output once all coordinates are known.\n";

constexpr std::string_view kVectorLegend =
    "Agent vectors are [agent type, center x, center y, heading, width, length, velocity, lane ID] in meters, "
    "radians (0 = east, counter-clockwise) and m/s; x points east, y points north.\n";

constexpr std::string_view kRenderLegend =
    "The image is a bird's-eye view with north up: ego vehicle in red, modified agents in blue, other agents in "
    "dark gray, drivable area in gray, walkways in olive, lane centerlines as thin light lines, and grid lines "
    "every 5 m.";

std::string lane_coordinates(const LaneGeometry& g, LaneFormat format) {
  if (format == LaneFormat::Bezier) {
    const auto pts = lane_quad(g).quad.points();
    return point_list_text(pts);
  }
  if (const auto* pl = std::get_if<Polyline>(&g)) return point_list_text(resample_polyline(*pl, 5.0));
  return point_list_text(resample_polyline(sample_geometry(g, 0.25), 5.0));
}

// --- response sectioning -----------------------------------------------------

enum class Section { None, Insights, Summary, Dict, Calculations, Vectors };

struct HeaderName {
  std::string_view name;
  Section section;
};

constexpr std::array<HeaderName, 10> kHeaders{{
    {"modification dictionary", Section::Dict},
    {"modification dicts", Section::Dict},
    {"modification dict", Section::Dict},
    {"modification calculations", Section::Calculations},
    {"modification calculation", Section::Calculations},
    {"modified vectors", Section::Vectors},
    {"modified vector", Section::Vectors},
    {"insights", Section::Insights},
    {"insight", Section::Insights},
    {"summary", Section::Summary},
}};

std::string_view strip_markers(std::string_view s) {
  s = d::trim(s);
  while (!s.empty() && (s.front() == '#' || s.front() == '*' || s.front() == '_' || s.front() == ' ' || s.front() == '\t')) {
    s.remove_prefix(1);
  }
  return s;
}

std::optional<std::pair<Section, std::string_view>> match_header(std::string_view line) {
  std::string_view s = strip_markers(line);
  for (const auto& h : kHeaders) {
    if (!d::istarts_with(s, h.name)) continue;
    std::string_view rest = s.substr(h.name.size());
    while (!rest.empty() && (rest.front() == '*' || rest.front() == '_' || rest.front() == ' ')) rest.remove_prefix(1);
    if (rest.empty()) return std::pair{h.section, rest};
    if (rest.front() != ':') return std::nullopt;
    rest.remove_prefix(1);
    while (!rest.empty() && (rest.front() == '*' || rest.front() == '_' || rest.front() == ' ')) rest.remove_prefix(1);
    return std::pair{h.section, rest};
  }
  return std::nullopt;
}

bool is_fence(std::string_view line) { return d::trim(line).starts_with("```"); }

/// Top-level balanced `{...}` spans, respecting JSON string literals.
template <typename Err>
std::vector<std::string> extract_objects(std::string_view text, std::string_view what) {
  std::vector<std::string> out;
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  size_t start = 0;
  for (size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (depth == 0) {
      if (c == '{') {
        depth = 1;
        start = i;
        in_string = false;
      }
      continue;
    }
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) out.emplace_back(text.substr(start, i - start + 1));
    }
  }
  if (depth != 0) throw Err(fmt::format("unterminated object in {}", what));
  return out;
}

std::string normalize_key(std::string_view key) {
  std::string k = d::to_lower(d::trim(key));
  for (char& c : k) {
    if (c == ' ' || c == '-') c = '_';
  }
  return k;
}

ModificationDict parse_dict(const std::string& text) {
  json obj;
  try {
    obj = json::parse(text);
  } catch (const json::exception& e) {
    throw DictParseError(fmt::format("modification dict is not valid JSON: {}", e.what()));
  }
  ModificationDict dict;
  bool have_action = false, have_agent = false;
  for (const auto& [key, value] : obj.items()) {
    const std::string k = normalize_key(key);
    if (k == "action") {
      if (!value.is_string()) throw DictParseError("modification dict: Action must be a string");
      auto a = parse_mod_action(value.get<std::string>());
      if (!a) throw DictParseError(fmt::format("modification dict: unknown action '{}'", value.get<std::string>()));
      dict.action = *a;
      have_action = true;
    } else if (k == "modified_agent") {
      if (!value.is_string()) throw DictParseError("modification dict: Modified_Agent must be a string");
      dict.modified_agent = value.get<std::string>();
      have_agent = !dict.modified_agent.empty();
    } else if (k == "rationale" || k == "reason") {
      dict.rationale = value.is_string() ? value.get<std::string>() : value.dump();
    } else {
      dict.extra[key] = value.is_string() ? value.get<std::string>() : value.dump();
    }
  }
  if (!have_action) throw DictParseError("modification dict lacks \"Action\"");
  if (!have_agent) throw DictParseError("modification dict lacks \"Modified_Agent\"");
  return dict;
}

std::vector<AgentState> parse_vectors(std::string_view text) {
  std::vector<AgentState> out;
  for (const auto& obj_text : extract_objects<VectorParseError>(text, "Modified Vectors")) {
    json obj;
    try {
      obj = json::parse(obj_text);
    } catch (const json::exception& e) {
      throw VectorParseError(fmt::format("modified vector is not valid JSON: {}", e.what()));
    }
    for (const auto& [id, value] : obj.items()) {
      AgentState a = parse_agent_vector(id, value);
      a.heading = normalize_angle(heading_from_document(a.heading));
      out.push_back(std::move(a));
    }
  }
  return out;
}

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

/// Position of the last whole-word, case-insensitive occurrence of `word`.
std::optional<size_t> find_last_word(std::string_view line, std::string_view word) {
  std::optional<size_t> found;
  for (size_t i = 0; i + word.size() <= line.size(); ++i) {
    if (!d::iequals(line.substr(i, word.size()), word)) continue;
    const bool left_ok = i == 0 || !is_word_char(line[i - 1]);
    const bool right_ok = i + word.size() == line.size() || !is_word_char(line[i + word.size()]);
    if (left_ok && right_ok) found = i;
  }
  return found;
}

std::string join_lines(const std::vector<std::string_view>& lines, size_t from, size_t to) {
  std::string out;
  for (size_t i = from; i < to; ++i) {
    out += lines[i];
    out += '\n';
  }
  return std::string(d::trim(out));
}

}  // namespace

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::OneTimeModifier: return "OTM";
    case Strategy::FunctionCalling: return "FC";
    case Strategy::TextQa: return "TQA";
    case Strategy::VisualQa: return "VQA";
  }
  return "?";
}

std::optional<Strategy> parse_strategy(std::string_view s) {
  for (Strategy st : {Strategy::OneTimeModifier, Strategy::FunctionCalling, Strategy::TextQa, Strategy::VisualQa}) {
    if (d::iequals(d::trim(s), to_string(st))) return st;
  }
  return std::nullopt;
}

PromptConfig PromptConfig::for_strategy(Strategy s) {
  PromptConfig cfg;
  cfg.strategy = s;
  cfg.lane_format = s == Strategy::FunctionCalling ? LaneFormat::Bezier : LaneFormat::Polyline;
  cfg.include_tool_instructions = cfg.lane_format == LaneFormat::Bezier;
  return cfg;
}

void PromptConfig::validate() const {
  const bool wants_bezier = strategy == Strategy::FunctionCalling;
  if (wants_bezier != (lane_format == LaneFormat::Bezier)) {
    throw ValidationError(fmt::format("strategy {} requires {} lanes", to_string(strategy),
                                      wants_bezier ? "Bezier" : "polyline"));
  }
  if (include_tool_instructions != (lane_format == LaneFormat::Bezier)) {
    throw ValidationError("tool instructions are included exactly when lanes use the Bezier format");
  }
}

std::vector<std::string> QaRating::failing_categories() const {
  std::vector<std::string> out;
  if (compliance < 4) out.emplace_back("Compliance");
  if (realism < 4) out.emplace_back("Realism");
  if (logical_consistency < 4) out.emplace_back("Logical Consistency");
  return out;
}

std::string encode_scenario_vectors(const Scenario& s, LaneFormat format) {
  std::string out;
  for (const auto& a : s.agents) out += fmt::format("{{{}: {}}}\n", d::quote(a.id), agent_vector_text(a));
  for (size_t i = 0; i < s.lanes.size(); ++i) {
    const Lane& l = s.lanes[i];
    out += fmt::format("{{{}: [{}, {}, {}, {}, {}, {}]}}\n", d::quote(l.id), i + 1, d::quote(l.travel_direction),
                       d::quote(to_string(l.relative_direction_to_ego)), d::f3(l.width), d::f3(l.speed_limit),
                       lane_coordinates(l.geometry, format));
  }
  for (const auto& c : s.connectors) {
    out += fmt::format("{{{}: [{}, {}, {}, {}, {}, {}]}}\n", d::quote(c.id), d::quote(c.from_lane),
                       d::quote(c.to_lane), d::quote(to_string(c.traffic_light_state)),
                       d::quote(to_string(c.turn_type)), d::f3(c.speed_limit), lane_coordinates(c.geometry, format));
  }
  for (const auto& a : s.areas) {
    out += fmt::format("{{{}: [{}, {}]}}\n", d::quote(a.id), d::quote(to_string(a.kind)),
                       point_list_text(a.boundary));
  }
  return out;
}

std::string encode_sma_prompt(const Scenario& s, std::string_view instructions, const PromptConfig& cfg) {
  cfg.validate();
  std::string out;
  out += kPreamble;
  out += "\n\n";
  out += kInputFormat;
  out += cfg.lane_format == LaneFormat::Bezier ? kBezierNote : kPolylineNote;
  out += "\n";
  out += kInstructionFormat;
  out += "\n";
  out += kOutputFormat;
  if (cfg.include_tool_instructions) {
    out += "\n";
    out += kToolProtocol;
  }
  out += "\nInput:\n";
  out += "Scenario ID: " + s.scenario_id + "\n";
  out += encode_scenario_vectors(s, cfg.lane_format);
  out += "\nUser Instructions:\n";
  out += instructions;
  out += "\n\nOutput:\n";
  return out;
}

ModificationResult parse_sma_response(std::string_view text) {
  std::array<std::string, 6> sections;
  std::array<bool, 6> seen{};
  Section current = Section::None;
  for (std::string_view line : d::split_lines(text)) {
    if (auto h = match_header(line)) {
      current = h->first;
      seen[static_cast<size_t>(current)] = true;
      if (!h->second.empty()) {
        sections[static_cast<size_t>(current)] += h->second;
        sections[static_cast<size_t>(current)] += '\n';
      }
      continue;
    }
    if (current == Section::None || is_fence(line)) continue;
    sections[static_cast<size_t>(current)] += line;
    sections[static_cast<size_t>(current)] += '\n';
  }
  if (!seen[static_cast<size_t>(Section::Vectors)]) {
    throw MissingSection("response has no \"Modified Vectors\" section");
  }

  ModificationResult r;
  r.insights = std::string(d::trim(sections[static_cast<size_t>(Section::Insights)]));
  r.summary = std::string(d::trim(sections[static_cast<size_t>(Section::Summary)]));
  r.calculations = std::string(d::trim(sections[static_cast<size_t>(Section::Calculations)]));
  for (const auto& obj : extract_objects<DictParseError>(sections[static_cast<size_t>(Section::Dict)],
                                                         "Modification Dict")) {
    r.modification_dicts.push_back(parse_dict(obj));
  }
  r.modified_vectors = parse_vectors(sections[static_cast<size_t>(Section::Vectors)]);
  return r;
}

std::optional<ToolCallRequest> parse_tool_call(std::string_view text) {
  constexpr std::string_view kCall = "CALL lane_point(";
  for (std::string_view line : d::split_lines(text)) {
    const size_t pos = line.find(kCall);
    if (pos == std::string_view::npos) continue;
    std::string_view rest = line.substr(pos + kCall.size());

    if (rest.empty() || rest.front() != '"') throw ToolArgError("lane_point: lane id must be a quoted string");
    rest.remove_prefix(1);
    const size_t close = rest.find('"');
    if (close == std::string_view::npos) throw ToolArgError("lane_point: unterminated lane id");
    ToolCallRequest req;
    req.lane_id = std::string(rest.substr(0, close));
    rest.remove_prefix(close + 1);
    if (rest.empty() || rest.front() != ',') throw ToolArgError("lane_point: expected ', <distance>'");
    rest.remove_prefix(1);
    const size_t paren = rest.rfind(')');
    if (paren == std::string_view::npos) throw ToolArgError("lane_point: missing ')'");
    const std::string_view arg = d::trim(rest.substr(0, paren));

    // decimal := digits [ '.' digits ]
    size_t i = 0;
    auto digits = [&] {
      const size_t begin = i;
      while (i < arg.size() && std::isdigit(static_cast<unsigned char>(arg[i]))) ++i;
      return i > begin;
    };
    bool ok = digits();
    if (ok && i < arg.size() && arg[i] == '.') {
      ++i;
      ok = digits();
    }
    if (!ok || i != arg.size()) {
      throw ToolArgError(fmt::format("lane_point: distance '{}' is not a non-negative decimal", arg));
    }
    req.distance_m = std::stod(std::string(arg));
    if (!std::isfinite(req.distance_m)) throw ToolArgError("lane_point: distance is not finite");
    return req;
  }
  return std::nullopt;
}

std::string format_tool_result(const LaneAnchor& a) {
  return fmt::format("RESULT lane_point: x={}, y={}, heading={}", d::f3(a.position.x), d::f3(a.position.y),
                     d::f4(a.heading));
}

std::string format_tool_error(std::string_view code) { return fmt::format("RESULT lane_point: ERROR {}", code); }

QaRating parse_qa_rating(std::string_view text) {
  struct Category {
    std::string_view label;
    int QaRating::*field;
  };
  constexpr std::array<Category, 3> categories{{
      {"Compliance", &QaRating::compliance},
      {"Realism", &QaRating::realism},
      {"Logical Consistency", &QaRating::logical_consistency},
  }};

  std::string cleaned(text);
  std::erase(cleaned, '*');
  const auto lines = d::split_lines(cleaned);

  QaRating rating;
  for (const auto& cat : categories) {
    std::optional<std::string> token;
    for (std::string_view line : lines) {
      const std::string lower = d::to_lower(line);
      const size_t at = lower.find(d::to_lower(cat.label));
      if (at == std::string::npos) continue;
      size_t i = at + cat.label.size();
      while (i < line.size() && line[i] != ':' &&
             (std::isalpha(static_cast<unsigned char>(line[i])) || line[i] == ' ' || line[i] == '(' || line[i] == ')')) {
        ++i;
      }
      if (i >= line.size() || line[i] != ':') continue;
      ++i;
      while (i < line.size() && line[i] == ' ') ++i;
      size_t j = i;
      while (j < line.size() && (std::isdigit(static_cast<unsigned char>(line[j])) || line[j] == '.' || line[j] == '-')) ++j;
      if (j == i) continue;
      token = std::string(line.substr(i, j - i));
    }
    if (!token) throw RatingParseError(fmt::format("rating for '{}' not found", cat.label));
    const bool integral = !token->empty() && token->find_first_not_of("0123456789") == std::string::npos;
    if (!integral || token->size() > 1 || (*token)[0] < '1' || (*token)[0] > '5') {
      throw RatingParseError(fmt::format("rating for '{}' must be an integer 1-5, got '{}'", cat.label, *token));
    }
    rating.*cat.field = (*token)[0] - '0';
  }

  for (size_t i = lines.size(); i-- > 0;) {
    std::string_view s = strip_markers(lines[i]);
    if (!d::istarts_with(s, "feedback")) continue;
    std::string_view rest = d::trim(s.substr(8));
    if (rest.empty() || rest.front() != ':') continue;
    rest.remove_prefix(1);
    std::string fb(d::trim(rest));
    const std::string tail = join_lines(lines, i + 1, lines.size());
    if (!tail.empty()) fb += (fb.empty() ? "" : "\n") + tail;
    rating.feedback = fb;
    break;
  }
  if (!rating.pass() && rating.feedback.empty()) rating.feedback = std::string(d::trim(text));
  return rating;
}

std::string encode_tqa_prompt(const Scenario& s, std::string_view instructions, const ModificationResult& result,
                              const std::vector<std::string>& common_problems) {
  std::string out;
  out +=
      "You are a quality assurance agent for a traffic scenario editor. The editor received a fix-form traffic "
      "scenario and natural language user instructions and produced modified agent vectors. Check whether the "
      "modification matches the user's intent.\n\n";
  out += kVectorLegend;
  out += "\nOriginal scenario:\nScenario ID: " + s.scenario_id + "\n";
  out += encode_scenario_vectors(s, LaneFormat::Polyline);
  out += "\nUser Instructions:\n";
  out += instructions;
  out += "\n\nModification Dict:\n";
  for (const auto& dct : result.modification_dicts) {
    out += fmt::format("{{\"Action\": {}, \"Modified_Agent\": {}}}\n", d::quote(to_string(dct.action)),
                       d::quote(dct.modified_agent));
  }
  out += "\nModified Vectors:\n";
  for (const auto& a : result.modified_vectors) {
    out += fmt::format("{{{}: {}}}\n", d::quote(a.id), agent_vector_text(a));
  }
  if (!common_problems.empty()) {
    out += "\nCommon problems:\n";
    for (const auto& p : common_problems) out += "- " + p + "\n";
  }
  out +=
      "\nTasks:\n"
      "1. Summarize the initial scenario and the user's intent.\n"
      "2. Plan verification questions that help evaluate the modified vectors.\n"
      "3. Answer the verification questions.\n"
      "4. Rate the modification from 1 to 5 in each category, one per line, exactly as:\n"
      "Compliance: <1-5>\n"
      "Realism: <1-5>\n"
      "Logical Consistency: <1-5>\n"
      "If the mean of the three ratings is below 4, end with a \"Feedback:\" section that, step by step, "
      "identifies each problem, explains why it is wrong and suggests a corrective action.\n";
  return out;
}

std::vector<std::string> load_common_problems(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::filesystem::filesystem_error("cannot open common problems file", path,
                                            std::make_error_code(std::errc::no_such_file_or_directory));
  }
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    const std::string_view t = d::trim(line);
    if (t.empty() || t.front() == '#') continue;
    out.emplace_back(t);
  }
  return out;
}

std::string encode_vqa_prompt(VqaStage stage, const VqaPromptInput& in) {
  std::string out;
  switch (stage) {
    case VqaStage::EngineerQuestions:
      if (d::trim(in.instructions).empty()) throw StageInputError("engineer questions need the user instructions");
      out +=
          "You are a QA engineer reviewing an automatically edited traffic scenario. A vision language model will "
          "look at a rendered image of the edited scenario and answer your questions. ";
      out += kRenderLegend;
      out += "\n\nUser Instructions:\n";
      out += in.instructions;
      out += "\n\nModified Vectors:\n";
      out += in.modified_vectors.empty() ? std::string("(none)") : in.modified_vectors;
      out +=
          "\n\nWrite critical questions whose answers reveal whether the edited scenario follows the instructions "
          "and looks realistic: positions relative to the ego vehicle and lanes, headings, overlaps, sizes and "
          "placement on drivable area or walkways. Output format: list numbered questions";
      return out;

    case VqaStage::VlmAnswer:
      if (in.questions.empty()) throw StageInputError("VLM answers need at least one question");
      if (!in.image_attached) throw StageInputError("VLM answers need an attached rendered image");
      out += "The attached image shows a traffic scenario. ";
      out += kRenderLegend;
      out += " Answer each question using only what you can see in the image.\n\nQuestions:\n";
      for (size_t i = 0; i < in.questions.size(); ++i) out += fmt::format("{}. {}\n", i + 1, in.questions[i]);
      out += "\nAnswer with the same numbering.\n";
      return out;

    case VqaStage::EngineerVerdict:
      if (d::trim(in.answers).empty()) throw StageInputError("engineer verdict needs the VLM answers");
      out += "You are the QA engineer. A vision language model answered your questions about the rendered image "
             "of the edited scenario.\n";
      if (!in.instructions.empty()) out += "\nUser Instructions:\n" + in.instructions + "\n";
      if (!in.questions.empty()) {
        out += "\nQuestions:\n";
        for (size_t i = 0; i < in.questions.size(); ++i) out += fmt::format("{}. {}\n", i + 1, in.questions[i]);
      }
      out += "\nAnswers:\n";
      out += in.answers;
      out +=
          "\n\nDecide whether the modification is acceptable. If it is not, give step-by-step feedback for the "
          "scenario editor: identify each mistake, explain why it is wrong and suggest a correction. Finish with "
          "a single final line containing exactly one verdict token: PASS or FAIL.\n";
      return out;
  }
  throw StageInputError("unknown visual QA stage");
}

std::vector<std::string> parse_numbered_questions(std::string_view text) {
  std::vector<std::string> out;
  for (std::string_view line : d::split_lines(text)) {
    std::string_view s = d::trim(line);
    while (!s.empty() && (s.front() == '*' || s.front() == '#')) s.remove_prefix(1);
    size_t i = 0;
    while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
    if (i == 0 || i >= s.size() || (s[i] != '.' && s[i] != ')')) continue;
    std::string_view q = d::trim(s.substr(i + 1));
    while (!q.empty() && q.front() == '*') q.remove_prefix(1);
    q = d::trim(q);
    if (!q.empty()) out.emplace_back(q);
  }
  return out;
}

VqaVerdict parse_vqa_verdict(std::string_view text) {
  const auto lines = d::split_lines(text);
  for (size_t i = lines.size(); i-- > 0;) {
    const auto pass = find_last_word(lines[i], "pass");
    const auto fail = find_last_word(lines[i], "fail");
    if (!pass && !fail) continue;
    VqaVerdict v;
    v.pass = pass && (!fail || *pass > *fail);
    std::string fb = join_lines(lines, 0, i);
    const std::string after = join_lines(lines, i + 1, lines.size());
    if (!after.empty()) fb += (fb.empty() ? "" : "\n") + after;
    v.feedback = fb;
    return v;
  }
  throw VerdictParseError("engineer verdict has no PASS or FAIL token");
}

}  // namespace scenaug
