#include <cstdlib>
#include <fstream>
#include <semaphore>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "gensym/loop/loop.hpp"
#include "gensym/net/http.hpp"

namespace gensym::loop {

using nlohmann::json;

std::string_view to_string(Role r) { return r == Role::Generator ? "generator" : "critic"; }

// ------------------------------------------------------------------ scripted

ScriptedBackend::ScriptedBackend(std::string name, std::vector<Entry> entries) : name_(std::move(name)) {
  for (auto& e : entries) queues_[e.role].push_back(std::move(e));
}

std::unique_ptr<ScriptedBackend> ScriptedBackend::from_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open transcript " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error("bad transcript " + path.string() + ": " + e.what());
  }
  std::vector<Entry> entries;
  for (const auto& j : doc.at("entries")) {
    Entry e;
    auto role = j.at("role").get<std::string>();
    if (role == "generator") e.role = Role::Generator;
    else if (role == "critic") e.role = Role::Critic;
    else throw std::runtime_error("transcript entry has unknown role '" + role + "'");
    if (j.contains("responseFile")) {
      auto file = path.parent_path() / j.at("responseFile").get<std::string>();
      std::ifstream rin(file, std::ios::binary);
      if (!rin) throw std::runtime_error("cannot open transcript response " + file.string());
      std::stringstream ss;
      ss << rin.rdbuf();
      e.response = ss.str();
    } else {
      e.response = j.at("response").get<std::string>();
    }
    if (j.contains("expectPromptHash")) e.expectPromptHash = j.at("expectPromptHash").get<std::string>();
    e.requiresSuggestions = j.value("requiresSuggestions", false);
    entries.push_back(std::move(e));
  }
  return std::make_unique<ScriptedBackend>(doc.value("name", path.stem().string()), std::move(entries));
}

std::string ScriptedBackend::complete(const LlmRequest& request) {
  std::scoped_lock lock(mu_);
  received_.push_back(request);
  auto& queue = queues_[request.role];
  auto& cursor = cursor_[request.role];
  auto repeat_last = [&]() -> std::string {
    auto it = last_.find(request.role);
    if (it == last_.end())
      throw TransportError("transcript has no " + std::string(to_string(request.role)) + " response left");
    return it->second;
  };
  if (cursor >= queue.size()) return repeat_last();
  const Entry& e = queue[cursor];
  if (e.requiresSuggestions && request.userPrompt.find(kSuggestionsMarker) == std::string::npos) return repeat_last();
  if (e.expectPromptHash && *e.expectPromptHash != prompt_hash(request.userPrompt))
    throw TransportError("transcript expected prompt " + *e.expectPromptHash + ", got " +
                         prompt_hash(request.userPrompt));
  ++cursor;
  last_[request.role] = e.response;
  return e.response;
}

std::vector<LlmRequest> ScriptedBackend::received() const {
  std::scoped_lock lock(mu_);
  return received_;
}

// ------------------------------------------------------------------ http

struct HttpChatBackend::Gate {
  explicit Gate(int n) : sem(n) {}
  std::counting_semaphore<1024> sem;
};

HttpChatBackend::HttpChatBackend(HttpChatConfig config)
    : config_(std::move(config)), gate_(std::make_unique<Gate>(std::max(1, std::min(1024, config_.concurrencyLimit)))) {
  if (const char* key = std::getenv(config_.apiKeyEnv.c_str())) apiKey_ = key;
}

HttpChatBackend::~HttpChatBackend() = default;

std::string HttpChatBackend::complete(const LlmRequest& request) {
  json body{{"model", config_.model},
            {"temperature", request.temperature},
            {"messages",
             json::array({json{{"role", "system"}, {"content", request.systemPrompt}},
                          json{{"role", "user"}, {"content", request.userPrompt}}})}};
  std::vector<std::pair<std::string, std::string>> headers;
  if (!apiKey_.empty()) headers.emplace_back("Authorization", "Bearer " + apiKey_);
  std::string base = config_.baseUrl;
  while (!base.empty() && base.back() == '/') base.pop_back();
  const std::string url = base + "/chat/completions";
  const std::string payload = body.dump();

  std::string lastError;
  auto backoff = config_.initialBackoff;
  for (int attempt = 1; attempt <= std::max(1, config_.maxAttempts); ++attempt) {
    net::HttpResponse res;
    {
      gate_->sem.acquire();
      ++attempts_;
      try {
        res = net::post_json(url, headers, payload, config_.timeoutSeconds);
      } catch (...) {
        gate_->sem.release();
        throw;
      }
      gate_->sem.release();
    }
    if (res.status == 200) {
      try {
        auto doc = json::parse(res.body);
        return doc.at("choices").at(0).at("message").at("content").get<std::string>();
      } catch (const json::exception& e) {
        throw TransportError(std::string("malformed chat completion response: ") + e.what());
      }
    }
    bool retryable = res.status == 0 || res.status == 429 || res.status >= 500;
    lastError = res.status == 0 ? res.error : "HTTP " + std::to_string(res.status);
    if (!retryable) throw TransportError("chat completion failed: " + lastError);
    if (attempt < config_.maxAttempts) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
  throw TransportError("chat completion failed after " + std::to_string(config_.maxAttempts) +
                       " attempts: " + lastError);
}

}  // namespace gensym::loop
