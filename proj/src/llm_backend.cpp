#include "hmt/llm_backend.hpp"

#include <algorithm>
#include <fstream>
#include <regex>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>
#include <json.hpp>

#include "hmt/error.hpp"

namespace hmt {

using nlohmann::json;

std::string_view to_string(FinishReason r) noexcept {
  switch (r) {
    case FinishReason::stop_sequence: return "stop_sequence";
    case FinishReason::length: return "length";
    case FinishReason::end: return "end";
  }
  return "end";
}

void GenerationConfig::validate() const {
  auto bad = [](const std::string& why) { throw Error(Errc::InvalidRequest, why); };
  if (!(temperature >= 0.0 && temperature <= 2.0))
    bad(fmt::format("temperature {} outside [0, 2]", temperature));
  if (max_tokens <= 0) bad(fmt::format("max_tokens {} must be positive", max_tokens));
  if (!(top_p > 0.0 && top_p <= 1.0)) bad(fmt::format("top_p {} outside (0, 1]", top_p));
  if (stop_sequences.size() > 4) bad("at most 4 stop sequences");
  for (const auto& s : stop_sequences)
    if (s.empty()) bad("empty stop sequence");
}

GenerationConfig ConfigOverride::apply(GenerationConfig base) const {
  if (temperature) base.temperature = *temperature;
  if (max_tokens) base.max_tokens = *max_tokens;
  return base;
}

CompletionResult apply_stop_sequences(std::string_view text,
                                      const std::vector<std::string>& stops) {
  size_t best = std::string_view::npos;
  const std::string* matched = nullptr;
  for (const auto& s : stops) {
    if (s.empty()) continue;
    size_t pos = text.find(s);
    if (pos == std::string_view::npos) continue;
    if (pos < best || (pos == best && s.size() > matched->size())) {
      best = pos;
      matched = &s;
    }
  }
  if (!matched) return {std::string(text), FinishReason::end, std::nullopt};
  return {std::string(text.substr(0, best)), FinishReason::stop_sequence, *matched};
}

CompletionResult Backend::complete(const CompletionRequest& request) {
  request.config.validate();
  if (request.mode == CompletionMode::chat && !supports_chat())
    throw Error(Errc::InvalidRequest, "backend does not support chat mode");
  return do_complete(request);
}

std::string prompt_hash(std::string_view prompt) {
  // FNV-1a, 64 bit.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : prompt) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return fmt::format("{:016x}", h);
}

// --- scripted ---------------------------------------------------------------

Fixture parse_fixture(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(Errc::ParseError, std::string("fixture: ") + e.what());
  }
  Fixture f;
  const json* replies = &doc;
  if (doc.is_object()) {
    std::string matching = doc.value("matching", std::string("sequence"));
    if (matching == "prompt_hash")
      f.matching = FixtureMatching::prompt_hash;
    else if (matching != "sequence")
      throw Error(Errc::ParseError, "fixture: unknown matching '" + matching + "'");
    if (!doc.contains("replies")) throw Error(Errc::ParseError, "fixture: missing 'replies'");
    replies = &doc["replies"];
  }
  if (!replies->is_array()) throw Error(Errc::ParseError, "fixture: replies must be an array");
  for (const auto& r : *replies) {
    if (r.is_string()) {
      f.replies.push_back({r.get<std::string>(), std::nullopt});
    } else if (r.is_object() && r.contains("reply") && r["reply"].is_string()) {
      FixtureReply fr{r["reply"].get<std::string>(), std::nullopt};
      if (r.contains("prompt_hash")) fr.prompt_hash = r["prompt_hash"].get<std::string>();
      f.replies.push_back(std::move(fr));
    } else {
      throw Error(Errc::ParseError, "fixture: each reply is a string or {reply, prompt_hash}");
    }
  }
  return f;
}

Fixture load_fixture_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::ParseError, "cannot read fixture file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_fixture(buf.str());
}

ScriptedBackend::ScriptedBackend(Fixture fixture) : fixture_(std::move(fixture)) {
  if (fixture_.replies.empty()) throw Error(Errc::EmptyFixture, "scripted fixture has no replies");
  if (fixture_.matching == FixtureMatching::prompt_hash) {
    for (const auto& r : fixture_.replies) {
      if (!r.prompt_hash)
        throw Error(Errc::ParseError, "prompt_hash fixture entry without a prompt_hash key");
      by_hash_.emplace(*r.prompt_hash, r.reply);
    }
  }
}

size_t ScriptedBackend::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

CompletionResult ScriptedBackend::do_complete(const CompletionRequest& request) {
  std::string canned;
  {
    std::lock_guard lock(mu_);
    ++calls_;
    if (fixture_.matching == FixtureMatching::sequence) {
      if (cursor_ >= fixture_.replies.size())
        throw Error(Errc::FixtureExhausted,
                    fmt::format("scripted backend exhausted after {} replies", cursor_));
      canned = fixture_.replies[cursor_++].reply;
    } else {
      auto key = prompt_hash(request.prompt.text);
      auto it = by_hash_.find(key);
      if (it == by_hash_.end())
        throw Error(Errc::FixtureExhausted, "no scripted reply for prompt hash " + key);
      canned = it->second;
    }
  }
  return apply_stop_sequences(canned, request.config.stop_sequences);
}

BackendPtr scripted_backend(std::vector<std::string> replies, FixtureMatching matching) {
  Fixture f;
  f.matching = matching;
  for (auto& r : replies) f.replies.push_back({std::move(r), std::nullopt});
  return std::make_shared<ScriptedBackend>(std::move(f));
}

BackendPtr scripted_backend(Fixture fixture) {
  return std::make_shared<ScriptedBackend>(std::move(fixture));
}

// --- http ---------------------------------------------------------------------

HttpBackend::HttpBackend(HttpBackendOptions options) : options_(std::move(options)) {
  static const std::regex kUrl(R"(^(https?://[^/\s]+)(/[^\s]*)?$)");
  std::smatch m;
  if (!std::regex_match(options_.endpoint, m, kUrl))
    throw Error(Errc::InvalidRequest, "malformed endpoint URL '" + options_.endpoint + "'");
  scheme_host_port_ = m[1].str();
  base_path_ = m[2].matched ? m[2].str() : "";
  while (!base_path_.empty() && base_path_.back() == '/') base_path_.pop_back();
  if (options_.max_attempts < 1) options_.max_attempts = 1;
}

std::string HttpBackend::request_path(CompletionMode mode) const {
  return base_path_ + (mode == CompletionMode::chat ? "/chat/completions" : "/completions");
}

std::string HttpBackend::request_body(const CompletionRequest& request) const {
  const auto& c = request.config;
  json body = {
      {"model", options_.model_name},
      {"temperature", c.temperature},
      {"max_tokens", c.max_tokens},
      {"top_p", c.top_p},
      {"frequency_penalty", c.frequency_penalty},
      {"presence_penalty", c.presence_penalty},
  };
  if (request.mode == CompletionMode::chat)
    body["messages"] = json::array({{{"role", "user"}, {"content", request.prompt.text}}});
  else
    body["prompt"] = request.prompt.text;

  const auto& client_only = client_side_stops();
  json stop = json::array();
  for (const auto& s : c.stop_sequences)
    if (std::find(client_only.begin(), client_only.end(), s) == client_only.end()) stop.push_back(s);
  if (!stop.empty()) body["stop"] = std::move(stop);
  return body.dump();
}

CompletionResult HttpBackend::do_complete(const CompletionRequest& request) {
  if (options_.credentials.empty())
    throw Error(Errc::AuthError, "no API credentials configured (set HMT_API_KEY)");

  const std::string body = request_body(request);
  const std::string path = request_path(request.mode);

  httplib::Client client(scheme_host_port_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(options_.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  client.set_bearer_token_auth(options_.credentials);

  auto backoff = options_.initial_backoff;
  std::string last_failure;
  bool rate_limited = false;
  for (int attempt = 1; attempt <= options_.max_attempts; ++attempt) {
    if (attempt > 1) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    auto res = client.Post(path, body, "application/json");
    if (!res) {
      last_failure = "transport failure: " + httplib::to_string(res.error());
      rate_limited = false;
      continue;
    }
    if (res->status == 401 || res->status == 403)
      throw Error(Errc::AuthError, fmt::format("server rejected credentials ({})", res->status));
    if (res->status == 429) {
      last_failure = "rate limited (429)";
      rate_limited = true;
      continue;
    }
    if (res->status >= 500) {
      last_failure = fmt::format("server error {}", res->status);
      rate_limited = false;
      continue;
    }
    if (res->status >= 400)
      throw Error(Errc::TransportError,
                  fmt::format("request rejected ({}): {}", res->status, res->body));

    std::string text;
    std::string finish;
    try {
      auto doc = json::parse(res->body);
      const auto& choice = doc.at("choices").at(0);
      if (request.mode == CompletionMode::chat)
        text = choice.at("message").at("content").get<std::string>();
      else
        text = choice.at("text").get<std::string>();
      if (choice.contains("finish_reason") && choice["finish_reason"].is_string())
        finish = choice["finish_reason"].get<std::string>();
    } catch (const json::exception& e) {
      throw Error(Errc::TransportError, std::string("malformed completion response: ") + e.what());
    }
    auto result = apply_stop_sequences(text, request.config.stop_sequences);
    if (result.finish_reason != FinishReason::stop_sequence && finish == "length")
      result.finish_reason = FinishReason::length;
    return result;
  }
  throw Error(rate_limited ? Errc::RateLimited : Errc::TransportError,
              fmt::format("giving up after {} attempts: {}", options_.max_attempts, last_failure));
}

BackendPtr http_backend(std::string endpoint, std::string credentials, std::string model_name) {
  HttpBackendOptions o;
  o.endpoint = std::move(endpoint);
  o.credentials = std::move(credentials);
  o.model_name = std::move(model_name);
  return std::make_shared<HttpBackend>(std::move(o));
}

}  // namespace hmt
