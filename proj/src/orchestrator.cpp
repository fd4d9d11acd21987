#include "scenaug/orchestrator.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <set>
#include <thread>

#include <fmt/format.h>

#include "scenaug/errors.hpp"
#include "scenaug/lane_tool.hpp"
#include "scenaug/scenario_io.hpp"
#include "text_util.hpp"

namespace scenaug {

void PipelineConfig::validate() const {
  if (!sma_backend) throw ValidationError("pipeline needs a modifier backend");
  if (max_qa_iterations < 1) throw ValidationError("max_qa_iterations must be at least 1");
  if (max_tool_calls < 0) throw ValidationError("max_tool_calls must not be negative");
  if (strategy == Strategy::FunctionCalling && max_tool_calls < 1) {
    throw ValidationError("function calling needs max_tool_calls >= 1");
  }
  if ((strategy == Strategy::TextQa || strategy == Strategy::VisualQa) && !qa_backend) {
    throw ValidationError(fmt::format("{} needs a QA backend", to_string(strategy)));
  }
  if (strategy == Strategy::VisualQa && !vlm_backend) throw ValidationError("VQA needs a vision backend");
  if (strategy == Strategy::VisualQa && (vqa_image_pixels < 64 || vqa_image_pixels > 4096)) {
    throw ValidationError("vqa_image_pixels must lie in [64, 4096]");
  }
}

std::string_view to_string(PipelineStatus s) {
  switch (s) {
    case PipelineStatus::Accepted: return "ACCEPTED";
    case PipelineStatus::MaxIterations: return "MAX_ITERATIONS";
    case PipelineStatus::Failed: return "FAILED";
  }
  return "FAILED";
}

namespace {

constexpr std::string_view kFormatCorrection =
    "Your output did not follow the format ({}). Answer again with the sections Insights, Summary, "
    "Modification Dict, Modification Calculations and Modified Vectors, exactly as instructed.";

class Pipeline {
 public:
  Pipeline(const Scenario& s, std::string_view instructions, const PipelineConfig& cfg)
      : s_(s), instructions_(instructions), cfg_(cfg) {}

  void run() {
    const auto start = std::chrono::steady_clock::now();
    cfg_.validate();
    if (detail::trim(instructions_).empty()) throw ValidationError("instructions must not be empty");
    sma_.push_back({Role::User, encode_sma_prompt(s_, instructions_, PromptConfig::for_strategy(cfg_.strategy)), {}});
    log("sma", sma_.back());

    switch (cfg_.strategy) {
      case Strategy::OneTimeModifier:
      case Strategy::FunctionCalling:
        generate();
        out_.status = PipelineStatus::Accepted;
        break;
      case Strategy::TextQa:
      case Strategy::VisualQa:
        qa_loop();
        break;
    }
    out_.duration_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }

  PipelineOutcome& outcome() { return out_; }

 private:
  void log(std::string_view agent, const ChatMessage& m) {
    std::string content = m.content;
    if (m.image) content += "\n[image attached]";
    out_.result.transcript.push_back({std::string(agent), std::string(to_string(m.role)), std::move(content)});
  }

  std::string ask(ChatBackend& backend, std::vector<ChatMessage>& conversation, std::string_view agent) {
    std::string reply = backend.chat(conversation);
    conversation.push_back({Role::Assistant, reply, {}});
    log(agent, conversation.back());
    return reply;
  }

  void tell(std::vector<ChatMessage>& conversation, std::string_view agent, std::string text) {
    conversation.push_back({Role::User, std::move(text), {}});
    log(agent, conversation.back());
  }

  // One SMA generation, including tool turns and a single format retry.
  void generate() {
    bool retried = false;
    while (true) {
      const std::string reply = ask(*cfg_.sma_backend, sma_, "sma");
      ++out_.sma_calls;

      if (cfg_.strategy == Strategy::FunctionCalling) {
        if (auto call = parse_tool_call(reply)) {
          if (out_.tool_calls >= cfg_.max_tool_calls) {
            throw ToolBudgetExceeded(fmt::format("modifier requested more than {} tool calls", cfg_.max_tool_calls));
          }
          ++out_.tool_calls;
          tell(sma_, "tool", run_tool(*call));
          continue;
        }
      }

      try {
        ModificationResult parsed = parse_sma_response(reply);
        if (parsed.modification_dicts.empty()) throw DictParseError("no modification dicts");
        Scenario applied = apply_modification(s_, parsed);
        parsed.transcript = std::move(out_.result.transcript);
        parsed.iterations = out_.result.iterations + 1;
        out_.result = std::move(parsed);
        out_.modified = std::move(applied);
        return;
      } catch (const ResponseParseError& e) {
        if (retried) throw ParseFailure(fmt::format("modifier output unusable after a retry: {}", e.what()));
        retried = true;
        tell(sma_, "sma", fmt::format(kFormatCorrection, e.what()));
      } catch (const IntegrityError& e) {
        if (retried) throw ParseFailure(fmt::format("modifier output unusable after a retry: {}", e.what()));
        retried = true;
        tell(sma_, "sma", fmt::format(kFormatCorrection, e.what()));
      } catch (const ValidationError& e) {
        if (retried) throw ParseFailure(fmt::format("modifier output unusable after a retry: {}", e.what()));
        retried = true;
        tell(sma_, "sma", fmt::format(kFormatCorrection, e.what()));
      }
    }
  }

  std::string run_tool(const ToolCallRequest& call) {
    try {
      return format_tool_result(lane_point_tool(s_, call.lane_id, call.distance_m));
    } catch (const UnknownId&) {
      return format_tool_error("UNKNOWN_ID");
    } catch (const RangeError&) {
      return format_tool_error("OUT_OF_RANGE");
    }
  }

  void qa_loop() {
    for (int round = 0; round < cfg_.max_qa_iterations; ++round) {
      generate();
      QaRecord rec = cfg_.strategy == Strategy::TextQa ? text_qa() : visual_qa();
      const bool pass = rec.pass;
      std::string message;
      if (!pass) {
        if (rec.rating) {
          const auto failing = rec.rating->failing_categories();
          std::string names;
          for (const auto& n : failing) names += (names.empty() ? "" : ", ") + n;
          message = fmt::format(
              "Quality assurance rated your modification Compliance {}, Realism {}, Logical Consistency {} "
              "(failing categories: {}).\nFeedback:\n{}\n\nRegenerate the full answer in the same format, fixing "
              "these problems.",
              rec.rating->compliance, rec.rating->realism, rec.rating->logical_consistency,
              names.empty() ? std::string("overall") : names, rec.feedback);
        } else {
          message = fmt::format(
              "Visual quality assurance rejected your modification (verdict FAIL).\nFeedback:\n{}\n\nRegenerate the "
              "full answer in the same format, fixing these problems.",
              rec.feedback);
        }
      }
      out_.qa_history.push_back(std::move(rec));
      if (pass) {
        out_.status = PipelineStatus::Accepted;
        return;
      }
      if (round + 1 < cfg_.max_qa_iterations) tell(sma_, "sma", std::move(message));
    }
    out_.status = PipelineStatus::MaxIterations;
  }

  template <typename T, typename Parse>
  T ask_parsed(ChatBackend& backend, std::vector<ChatMessage>& conversation, std::string_view agent, Parse parse,
               std::string_view correction) {
    bool retried = false;
    while (true) {
      const std::string reply = ask(backend, conversation, agent);
      try {
        return parse(reply);
      } catch (const ResponseParseError& e) {
        if (retried) throw ParseFailure(fmt::format("{} output unusable after a retry: {}", agent, e.what()));
        retried = true;
        tell(conversation, agent, fmt::format("Your output did not follow the format ({}). {}", e.what(), correction));
      }
    }
  }

  std::string vectors_text() const {
    std::string out;
    for (const auto& a : out_.result.modified_vectors) {
      out += fmt::format("{{{}: {}}}\n", detail::quote(a.id), agent_vector_text(a));
    }
    return out;
  }

  QaRecord text_qa() {
    std::vector<ChatMessage> conv{{Role::User, encode_tqa_prompt(s_, instructions_, out_.result, cfg_.common_problems), {}}};
    log("qa", conv.back());
    const QaRating rating = ask_parsed<QaRating>(
        *cfg_.qa_backend, conv, "qa", [](const std::string& r) { return parse_qa_rating(r); },
        "Give the three ratings as \"Compliance: <1-5>\", \"Realism: <1-5>\" and \"Logical Consistency: <1-5>\".");
    QaRecord rec;
    rec.pass = rating.pass();
    rec.feedback = rating.feedback;
    rec.rating = rating;
    return rec;
  }

  QaRecord visual_qa() {
    const auto ids = modified_agent_ids(out_.result);
    const RenderResult view = render_bev(*out_.modified, std::set<std::string>(ids.begin(), ids.end()), cfg_.render_style);
    const auto png = rasterize(view.svg, cfg_.vqa_image_pixels);

    VqaPromptInput in;
    in.instructions = instructions_;
    in.modified_vectors = vectors_text();
    std::vector<ChatMessage> engineer{{Role::User, encode_vqa_prompt(VqaStage::EngineerQuestions, in), {}}};
    log("engineer", engineer.back());
    in.questions = ask_parsed<std::vector<std::string>>(
        *cfg_.qa_backend, engineer, "engineer",
        [](const std::string& r) {
          auto qs = parse_numbered_questions(r);
          if (qs.empty()) throw ResponseParseError("no numbered questions");
          return qs;
        },
        "List numbered questions.");

    in.image_attached = true;
    std::vector<ChatMessage> vlm{{Role::User, encode_vqa_prompt(VqaStage::VlmAnswer, in), Image{png, "image/png"}}};
    log("vlm", vlm.back());
    in.answers = ask(*cfg_.vlm_backend, vlm, "vlm");
    if (detail::trim(in.answers).empty()) in.answers = "(no answer)";

    tell(engineer, "engineer", encode_vqa_prompt(VqaStage::EngineerVerdict, in));
    const VqaVerdict verdict = ask_parsed<VqaVerdict>(
        *cfg_.qa_backend, engineer, "engineer", [](const std::string& r) { return parse_vqa_verdict(r); },
        "End with a final line containing PASS or FAIL.");
    QaRecord rec;
    rec.pass = verdict.pass;
    rec.feedback = verdict.feedback;
    rec.questions = std::move(in.questions);
    rec.answers = std::move(in.answers);
    return rec;
  }

  const Scenario& s_;
  std::string instructions_;
  const PipelineConfig& cfg_;
  std::vector<ChatMessage> sma_;
  PipelineOutcome out_;
};

}  // namespace

PipelineOutcome run_pipeline(const Scenario& s, std::string_view instructions, const PipelineConfig& cfg) {
  Pipeline p(s, instructions, cfg);
  p.run();
  return std::move(p.outcome());
}

PipelineOutcome try_run_pipeline(const Scenario& s, std::string_view instructions, const PipelineConfig& cfg) {
  Pipeline p(s, instructions, cfg);
  try {
    p.run();
  } catch (const Error& e) {
    PipelineOutcome& o = p.outcome();
    o.status = PipelineStatus::Failed;
    o.error = e.what();
  }
  return std::move(p.outcome());
}

std::vector<PipelineOutcome> run_batch(const std::vector<BatchItem>& items,
                                       const std::function<PipelineConfig(const BatchItem&)>& config_for,
                                       int parallelism) {
  if (parallelism < 1) throw ValidationError("parallelism must be at least 1");
  std::vector<PipelineOutcome> out(items.size());
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t i = next++; i < items.size(); i = next++) {
      try {
        const PipelineConfig cfg = config_for(items[i]);
        out[i] = try_run_pipeline(items[i].scenario, items[i].instructions, cfg);
      } catch (const std::exception& e) {
        out[i].status = PipelineStatus::Failed;
        out[i].error = e.what();
      }
    }
  };
  const size_t n = std::min(static_cast<size_t>(parallelism), std::max<size_t>(items.size(), 1));
  std::vector<std::thread> pool;
  for (size_t t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return out;
}

std::vector<PipelineOutcome> run_batch(const std::vector<BatchItem>& items, const PipelineConfig& cfg, int parallelism) {
  return run_batch(items, [&](const BatchItem&) { return cfg; }, parallelism);
}

ReplayScripts transcript_scripts(const std::vector<TranscriptMessage>& transcript) {
  ReplayScripts out;
  for (const auto& m : transcript) {
    if (m.role != "assistant") continue;
    if (m.agent == "sma") out.sma.push_back({m.content, std::nullopt});
    if (m.agent == "qa" || m.agent == "engineer") out.qa.push_back({m.content, std::nullopt});
    if (m.agent == "vlm") out.vlm.push_back({m.content, std::nullopt});
  }
  return out;
}

nlohmann::json outcome_to_json(const PipelineOutcome& o, std::string_view scenario_id, Strategy strategy) {
  nlohmann::json messages = nlohmann::json::array();
  for (const auto& m : o.result.transcript) {
    messages.push_back({{"agent", m.agent}, {"role", m.role}, {"content", m.content}});
  }
  nlohmann::json qa = nlohmann::json::array();
  for (const auto& r : o.qa_history) {
    nlohmann::json j{{"pass", r.pass}, {"feedback", r.feedback}};
    if (r.rating) {
      j["rating"] = {{"compliance", r.rating->compliance},
                     {"realism", r.rating->realism},
                     {"logical_consistency", r.rating->logical_consistency}};
    }
    if (!r.questions.empty()) {
      j["questions"] = r.questions;
      j["answers"] = r.answers;
    }
    qa.push_back(std::move(j));
  }
  nlohmann::json vectors = nlohmann::json::array();
  for (const auto& a : o.result.modified_vectors) vectors.push_back({{"id", a.id}, {"vector", agent_vector_text(a)}});
  return {{"scenario_id", std::string(scenario_id)},
          {"strategy", std::string(to_string(strategy))},
          {"status", std::string(to_string(o.status))},
          {"error", o.error},
          {"iterations", o.result.iterations},
          {"sma_calls", o.sma_calls},
          {"tool_calls", o.tool_calls},
          {"duration_s", o.duration_s},
          {"modified_vectors", vectors},
          {"qa_history", qa},
          {"messages", messages}};
}

}  // namespace scenaug
