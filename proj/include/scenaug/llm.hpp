#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace scenaug {

enum class Role { System, User, Assistant, Tool };
std::string_view to_string(Role r);

struct Image {
  std::vector<std::uint8_t> bytes;
  std::string media_type = "image/png";
};

struct ChatMessage {
  Role role = Role::User;
  std::string content;
  std::optional<Image> image;
};

/// Throws ValidationError unless the sequence is non-empty, starts with a
/// system or user message, and only user messages carry images.
void validate_messages(std::span<const ChatMessage> messages);

struct CallLogEntry {
  std::string backend;
  std::vector<ChatMessage> request;
  std::string response;  ///< empty on error
  std::string error;     ///< empty on success
  int attempts = 1;
  double duration_s = 0.0;
  [[nodiscard]] bool ok() const { return error.empty(); }
};

/// Chat completion backend. Implementations must be safe to call from
/// several threads; every call appends exactly one log entry.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;

  /// Returns the assistant text. Throws BackendError (or a subclass).
  std::string chat(std::span<const ChatMessage> messages);

  [[nodiscard]] std::vector<CallLogEntry> call_log() const;
  [[nodiscard]] virtual std::string name() const = 0;

 protected:
  struct Reply {
    std::string text;
    int attempts = 1;
  };
  virtual Reply complete(std::span<const ChatMessage> messages) = 0;

 private:
  mutable std::mutex log_mutex_;
  std::vector<CallLogEntry> log_;
};

struct BackendConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string model_name;
  std::string api_key_env_var = "OPENAI_API_KEY";
  double timeout_s = 120.0;
  int max_retries = 3;
  double temperature = 0.0;
  double backoff_base_s = 1.0;  ///< first retry delay; doubles each retry
  bool native_tools = false;    ///< advertise lane_point as a structured tool

  void validate() const;
  static BackendConfig from_json(const nlohmann::json& j);
};

/// Backend speaking the common chat-completions wire format over HTTP(S).
class HttpBackend final : public ChatBackend {
 public:
  explicit HttpBackend(BackendConfig cfg);
  [[nodiscard]] std::string name() const override { return "http:" + cfg_.model_name; }
  [[nodiscard]] const BackendConfig& config() const { return cfg_; }

  /// Request body for a message list (exposed for tests).
  [[nodiscard]] nlohmann::json request_body(std::span<const ChatMessage> messages) const;
  /// Assistant text from a response body; native tool calls become inline CALL lines.
  static std::string extract_reply(const nlohmann::json& body);

 protected:
  Reply complete(std::span<const ChatMessage> messages) override;

 private:
  BackendConfig cfg_;
};

struct ScriptEntry {
  std::string response;
  std::optional<std::string> expect;  ///< substring the incoming prompt must contain
};

/// Replays canned responses in order. Deterministic; intended for tests and offline runs.
class ScriptedBackend final : public ChatBackend {
 public:
  explicit ScriptedBackend(std::vector<ScriptEntry> script, std::string label = "scripted");
  /// Loads `NNN*.txt` files in numeric order. A first line `>>> expect: <text>`
  /// sets the entry's predicate and is not part of the response.
  static std::shared_ptr<ScriptedBackend> from_directory(const std::filesystem::path& dir);

  [[nodiscard]] std::string name() const override { return label_; }
  [[nodiscard]] size_t consumed() const;
  [[nodiscard]] size_t size() const { return script_.size(); }

 protected:
  Reply complete(std::span<const ChatMessage> messages) override;

 private:
  std::vector<ScriptEntry> script_;
  std::string label_;
  mutable std::mutex mutex_;
  size_t cursor_ = 0;
};

std::string base64_encode(std::span<const std::uint8_t> bytes);

}  // namespace scenaug
