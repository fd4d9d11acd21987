#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "scenaug/geometry.hpp"
#include "scenaug/scenario.hpp"

namespace scenaug {

enum class LaneFormat { Polyline, Bezier };
enum class Strategy { OneTimeModifier, FunctionCalling, TextQa, VisualQa };

std::string_view to_string(Strategy s);
/// Accepts "otm", "fc", "tqa", "vqa" (any case).
std::optional<Strategy> parse_strategy(std::string_view s);

struct PromptConfig {
  LaneFormat lane_format = LaneFormat::Polyline;
  Strategy strategy = Strategy::OneTimeModifier;
  bool include_tool_instructions = false;

  /// The lane format and tool block each strategy uses.
  static PromptConfig for_strategy(Strategy s);
  /// Throws ValidationError when the combination is not one of the four variants.
  void validate() const;
};

struct ToolCallRequest {
  std::string name = "lane_point";
  std::string lane_id;
  double distance_m = 0.0;

  bool operator==(const ToolCallRequest&) const = default;
};

/// Three-category 1..5 rating from the text QA agent. Passing needs a mean of at least 4.
struct QaRating {
  int compliance = 0;
  int realism = 0;
  int logical_consistency = 0;
  std::string feedback;

  [[nodiscard]] double mean() const { return (compliance + realism + logical_consistency) / 3.0; }
  [[nodiscard]] bool pass() const { return compliance + realism + logical_consistency >= 12; }
  /// Names of categories scored below 4.
  [[nodiscard]] std::vector<std::string> failing_categories() const;
};

// --- modifier prompt -------------------------------------------------------

std::string encode_sma_prompt(const Scenario& s, std::string_view instructions, const PromptConfig& cfg);

/// Entity lines of the input block (agents, lanes, connectors, areas), one per line.
std::string encode_scenario_vectors(const Scenario& s, LaneFormat format);

/// Parses the five response sections. Transcript and iteration count stay empty.
ModificationResult parse_sma_response(std::string_view text);

/// First `CALL lane_point("<id>", <distance>)` line, or nullopt.
std::optional<ToolCallRequest> parse_tool_call(std::string_view text);

std::string format_tool_result(const LaneAnchor& a);
/// `code` is a short token such as UNKNOWN_ID or OUT_OF_RANGE.
std::string format_tool_error(std::string_view code);

// --- text QA ----------------------------------------------------------------

QaRating parse_qa_rating(std::string_view text);

std::string encode_tqa_prompt(const Scenario& s, std::string_view instructions, const ModificationResult& result,
                              const std::vector<std::string>& common_problems);

/// One problem per non-empty line; lines starting with '#' are comments.
std::vector<std::string> load_common_problems(const std::filesystem::path& path);

// --- visual QA --------------------------------------------------------------

enum class VqaStage { EngineerQuestions, VlmAnswer, EngineerVerdict };

struct VqaPromptInput {
  std::string instructions;
  std::string modified_vectors;  ///< modifier output shown to the engineer
  std::vector<std::string> questions;
  std::string answers;
  bool image_attached = false;
};

/// Throws StageInputError when a stage's required inputs are missing.
std::string encode_vqa_prompt(VqaStage stage, const VqaPromptInput& in);

/// Numbered lines ("1." / "1)") from the engineer's question list.
std::vector<std::string> parse_numbered_questions(std::string_view text);

struct VqaVerdict {
  bool pass = false;
  std::string feedback;
};
/// PASS or FAIL taken from the last line that carries either token (case-insensitive).
VqaVerdict parse_vqa_verdict(std::string_view text);

}  // namespace scenaug
