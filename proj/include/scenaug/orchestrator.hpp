#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scenaug/llm.hpp"
#include "scenaug/prompt.hpp"
#include "scenaug/render.hpp"
#include "scenaug/scenario.hpp"

namespace scenaug {

struct PipelineConfig {
  Strategy strategy = Strategy::OneTimeModifier;
  int max_qa_iterations = 3;  ///< SMA generations rated by QA before giving up
  int max_tool_calls = 8;
  std::shared_ptr<ChatBackend> sma_backend;
  std::shared_ptr<ChatBackend> qa_backend;   ///< text QA agent, or the engineer for visual QA
  std::shared_ptr<ChatBackend> vlm_backend;  ///< visual QA only
  std::vector<std::string> common_problems;
  int vqa_image_pixels = 512;
  RenderStyle render_style;

  /// Throws ValidationError for missing backends or out-of-range limits.
  void validate() const;
};

enum class PipelineStatus { Accepted, MaxIterations, Failed };
std::string_view to_string(PipelineStatus s);

/// One QA round: a text rating or a visual verdict.
struct QaRecord {
  bool pass = false;
  std::string feedback;
  std::optional<QaRating> rating;
  std::vector<std::string> questions;  ///< visual QA
  std::string answers;                 ///< visual QA
};

struct PipelineOutcome {
  ModificationResult result;
  std::optional<Scenario> modified;  ///< result applied to the input scenario
  std::vector<QaRecord> qa_history;
  PipelineStatus status = PipelineStatus::Failed;
  std::string error;  ///< set when FAILED
  int sma_calls = 0;
  int tool_calls = 0;
  double duration_s = 0.0;
};

/// Runs one strategy end to end. Throws ParseFailure, ToolBudgetExceeded,
/// BackendError and ValidationError.
PipelineOutcome run_pipeline(const Scenario& s, std::string_view instructions, const PipelineConfig& cfg);

/// Like run_pipeline but reports toolkit errors as a FAILED outcome that keeps
/// the partial transcript.
PipelineOutcome try_run_pipeline(const Scenario& s, std::string_view instructions, const PipelineConfig& cfg);

struct BatchItem {
  Scenario scenario;
  std::string instructions;
};

/// Outcomes in input order; failures stay local to their item.
std::vector<PipelineOutcome> run_batch(const std::vector<BatchItem>& items, const PipelineConfig& cfg, int parallelism);
/// Variant with per-item configuration, e.g. scripted backends keyed by scenario.
std::vector<PipelineOutcome> run_batch(const std::vector<BatchItem>& items,
                                       const std::function<PipelineConfig(const BatchItem&)>& config_for,
                                       int parallelism);

/// Assistant turns of a transcript, grouped by the backend that produced them.
struct ReplayScripts {
  std::vector<ScriptEntry> sma;
  std::vector<ScriptEntry> qa;
  std::vector<ScriptEntry> vlm;
};
ReplayScripts transcript_scripts(const std::vector<TranscriptMessage>& transcript);

nlohmann::json outcome_to_json(const PipelineOutcome& o, std::string_view scenario_id, Strategy strategy);

}  // namespace scenaug
