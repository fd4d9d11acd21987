#include "scenaug/llm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>

#include "scenaug/errors.hpp"
#include "text_util.hpp"

namespace scenaug {

using nlohmann::json;

std::string_view to_string(Role r) {
  switch (r) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
    case Role::Tool: return "tool";
  }
  return "?";
}

void validate_messages(std::span<const ChatMessage> messages) {
  if (messages.empty()) throw ValidationError("chat needs at least one message");
  if (messages.front().role != Role::System && messages.front().role != Role::User) {
    throw ValidationError("first chat message must be a system or user message");
  }
  for (const auto& m : messages) {
    if (m.image && m.role != Role::User) throw ValidationError("only user messages may carry an image");
    if (m.content.empty() && !m.image) throw ValidationError("chat message content is empty");
  }
}

std::string ChatBackend::chat(std::span<const ChatMessage> messages) {
  CallLogEntry entry;
  entry.backend = name();
  entry.request.assign(messages.begin(), messages.end());
  const auto start = std::chrono::steady_clock::now();
  auto finish = [&] {
    entry.duration_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::lock_guard lock(log_mutex_);
    log_.push_back(std::move(entry));
  };
  try {
    validate_messages(messages);
    Reply reply = complete(messages);
    entry.response = reply.text;
    entry.attempts = reply.attempts;
    std::string text = std::move(reply.text);
    finish();
    return text;
  } catch (const std::exception& e) {
    entry.error = e.what();
    if (entry.error.empty()) entry.error = "unknown error";
    finish();
    throw;
  }
}

std::vector<CallLogEntry> ChatBackend::call_log() const {
  std::lock_guard lock(log_mutex_);
  return log_;
}

// --- HTTP -------------------------------------------------------------------

void BackendConfig::validate() const {
  if (!(timeout_s > 0.0)) throw ValidationError("backend timeout must be positive");
  if (max_retries < 0) throw ValidationError("backend max_retries must be >= 0");
  if (!(backoff_base_s >= 0.0)) throw ValidationError("backend backoff must be >= 0");
  if (base_url.empty()) throw ValidationError("backend base_url is empty");
}

BackendConfig BackendConfig::from_json(const json& j) {
  BackendConfig c;
  c.base_url = j.value("base_url", c.base_url);
  c.model_name = j.value("model", j.value("model_name", c.model_name));
  c.api_key_env_var = j.value("api_key_env", j.value("api_key_env_var", c.api_key_env_var));
  c.timeout_s = j.value("timeout_s", c.timeout_s);
  c.max_retries = j.value("max_retries", c.max_retries);
  c.temperature = j.value("temperature", c.temperature);
  c.backoff_base_s = j.value("backoff_base_s", c.backoff_base_s);
  c.native_tools = j.value("native_tools", c.native_tools);
  c.validate();
  return c;
}

HttpBackend::HttpBackend(BackendConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

json HttpBackend::request_body(std::span<const ChatMessage> messages) const {
  json msgs = json::array();
  for (const auto& m : messages) {
    // The inline tool protocol carries no call ids, so tool output travels as a user turn.
    const std::string role(m.role == Role::Tool ? "user" : to_string(m.role));
    if (m.image) {
      json parts = json::array();
      if (!m.content.empty()) parts.push_back({{"type", "text"}, {"text", m.content}});
      parts.push_back({{"type", "image_url"},
                       {"image_url", {{"url", "data:" + m.image->media_type + ";base64," + base64_encode(m.image->bytes)}}}});
      msgs.push_back({{"role", role}, {"content", parts}});
    } else {
      msgs.push_back({{"role", role}, {"content", m.content}});
    }
  }
  json body = {{"model", cfg_.model_name}, {"temperature", cfg_.temperature}, {"messages", msgs}};
  if (cfg_.native_tools) {
    body["tools"] = json::array({{
        {"type", "function"},
        {"function",
         {{"name", "lane_point"},
          {"description", "Point on a lane or lane connector centerline at a distance from its start."},
          {"parameters",
           {{"type", "object"},
            {"properties",
             {{"lane_id", {{"type", "string"}}}, {"distance_m", {{"type", "number"}, {"minimum", 0}}}}},
            {"required", {"lane_id", "distance_m"}}}}}},
    }});
  }
  return body;
}

std::string HttpBackend::extract_reply(const json& body) {
  if (!body.contains("choices") || !body["choices"].is_array() || body["choices"].empty()) {
    throw BackendError("completion response has no choices");
  }
  const json& msg = body["choices"][0].value("message", json::object());
  std::string text;
  if (msg.contains("content")) {
    const json& c = msg["content"];
    if (c.is_string()) {
      text = c.get<std::string>();
    } else if (c.is_array()) {
      for (const auto& part : c) {
        if (part.is_object() && part.value("type", "") == "text") text += part.value("text", "");
      }
    }
  }
  if (msg.contains("tool_calls") && msg["tool_calls"].is_array()) {
    for (const auto& call : msg["tool_calls"]) {
      const json fn = call.value("function", json::object());
      if (fn.value("name", "") != "lane_point") continue;
      json args = json::object();
      try {
        const json& raw = fn.at("arguments");
        args = raw.is_string() ? json::parse(raw.get<std::string>()) : raw;
      } catch (const json::exception&) {
        throw BackendError("native tool call carries malformed arguments");
      }
      const std::string lane = args.value("lane_id", "");
      const json dist = args.value("distance_m", json());
      const std::string dist_text = dist.is_number() ? fmt::format("{}", dist.get<double>()) : dist.dump();
      if (!text.empty() && text.back() != '\n') text += '\n';
      text += fmt::format("CALL lane_point(\"{}\", {})\n", lane, dist_text);
    }
  }
  if (text.empty()) throw BackendError("completion response has no content");
  return text;
}

ChatBackend::Reply HttpBackend::complete(std::span<const ChatMessage> messages) {
  const std::string& url = cfg_.base_url;
  const size_t scheme_end = url.find("://");
  const size_t path_start = url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
  const std::string origin = path_start == std::string::npos ? url : url.substr(0, path_start);
  std::string path = path_start == std::string::npos ? std::string() : url.substr(path_start);
  while (!path.empty() && path.back() == '/') path.pop_back();
  path += "/chat/completions";

  httplib::Client client(origin);
  const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::duration<double>(cfg_.timeout_s));
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  if (!client.is_valid()) throw BackendError(fmt::format("invalid backend URL '{}'", url));

  httplib::Headers headers;
  if (const char* key = std::getenv(cfg_.api_key_env_var.c_str()); key && *key) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  const std::string body = request_body(messages).dump();

  std::string last_error;
  for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
    if (attempt > 0) {
      const double delay = cfg_.backoff_base_s * std::pow(2.0, attempt - 1);
      std::this_thread::sleep_for(std::chrono::duration<double>(delay));
    }
    auto res = client.Post(path, headers, body, "application/json");
    if (!res) {
      last_error = fmt::format("transport error: {}", httplib::to_string(res.error()));
      continue;
    }
    if (res->status == 200) {
      json parsed;
      try {
        parsed = json::parse(res->body);
      } catch (const json::exception& e) {
        throw BackendError(fmt::format("completion response is not JSON: {}", e.what()));
      }
      return {extract_reply(parsed), attempt + 1};
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = fmt::format("HTTP {}", res->status);
      continue;
    }
    throw BackendError(fmt::format("HTTP {} from {}: {}", res->status, url, res->body.substr(0, 200)));
  }
  throw BackendError(fmt::format("giving up after {} attempts: {}", cfg_.max_retries + 1, last_error));
}

// --- scripted ----------------------------------------------------------------

ScriptedBackend::ScriptedBackend(std::vector<ScriptEntry> script, std::string label)
    : script_(std::move(script)), label_(std::move(label)) {}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_directory(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw std::filesystem::filesystem_error("script directory not found", dir,
                                            std::make_error_code(std::errc::no_such_file_or_directory));
  }
  std::vector<std::pair<long, std::filesystem::path>> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (!e.is_regular_file() || e.path().extension() != ".txt") continue;
    const std::string stem = e.path().stem().string();
    size_t digits = 0;
    while (digits < stem.size() && std::isdigit(static_cast<unsigned char>(stem[digits]))) ++digits;
    if (digits == 0) continue;
    files.emplace_back(std::stol(stem.substr(0, digits)), e.path());
  }
  std::sort(files.begin(), files.end());

  std::vector<ScriptEntry> script;
  for (const auto& [index, path] : files) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    std::string text = buf.str();
    ScriptEntry entry;
    constexpr std::string_view marker = ">>> expect: ";
    if (text.starts_with(marker)) {
      const size_t nl = text.find('\n');
      entry.expect = std::string(detail::trim(text.substr(marker.size(), nl - marker.size())));
      text = nl == std::string::npos ? std::string() : text.substr(nl + 1);
    }
    entry.response = std::move(text);
    script.push_back(std::move(entry));
  }
  return std::make_shared<ScriptedBackend>(std::move(script), "scripted:" + dir.filename().string());
}

size_t ScriptedBackend::consumed() const {
  std::lock_guard lock(mutex_);
  return cursor_;
}

ChatBackend::Reply ScriptedBackend::complete(std::span<const ChatMessage> messages) {
  std::lock_guard lock(mutex_);
  if (cursor_ >= script_.size()) {
    throw ScriptExhausted(fmt::format("{}: script exhausted after {} responses", label_, script_.size()));
  }
  const ScriptEntry& entry = script_[cursor_];
  if (entry.expect) {
    const bool found = std::any_of(messages.begin(), messages.end(),
                                   [&](const ChatMessage& m) { return m.content.find(*entry.expect) != std::string::npos; });
    if (!found) {
      throw PredicateMismatch(
          fmt::format("{}: response {} expects the prompt to contain '{}'", label_, cursor_ + 1, *entry.expect));
    }
  }
  ++cursor_;
  return {entry.response, 1};
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  static constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  if (i + 1 == bytes.size()) {
    const std::uint32_t v = bytes[i] << 16;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += "==";
  } else if (i + 2 == bytes.size()) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += '=';
  }
  return out;
}

}  // namespace scenaug
