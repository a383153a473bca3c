#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hmt/prompt_engine.hpp"

namespace hmt {

struct GenerationConfig {
  double temperature = 0.7;
  int max_tokens = 512;
  double top_p = 1.0;
  double frequency_penalty = 0.0;
  double presence_penalty = 0.0;
  std::vector<std::string> stop_sequences;

  /// Throws Error{InvalidRequest} when a field is out of range.
  void validate() const;

  friend bool operator==(const GenerationConfig&, const GenerationConfig&) = default;
};

/// A partial GenerationConfig applied on top of a base one.
struct ConfigOverride {
  std::optional<double> temperature;
  std::optional<int> max_tokens;

  GenerationConfig apply(GenerationConfig base) const;
};

enum class CompletionMode { completion, chat };
enum class FinishReason { stop_sequence, length, end };

std::string_view to_string(FinishReason r) noexcept;

struct CompletionRequest {
  PromptText prompt;
  GenerationConfig config;
  CompletionMode mode = CompletionMode::completion;
};

struct CompletionResult {
  std::string text;
  FinishReason finish_reason = FinishReason::end;
  std::optional<std::string> matched_stop;  // set iff finish_reason == stop_sequence
};

/// Truncates at the earliest occurrence of any stop string (the longest one
/// wins a tie); the stop string itself is dropped.
CompletionResult apply_stop_sequences(std::string_view text,
                                      const std::vector<std::string>& stops);

/// Stops that servers cannot honour losslessly and are applied client-side.
inline const std::vector<std::string>& client_side_stops() {
  static const std::vector<std::string> stops{"?"};
  return stops;
}

class Backend {
 public:
  virtual ~Backend() = default;

  /// Validates the request, then dispatches it.
  CompletionResult complete(const CompletionRequest& request);

  virtual bool supports_chat() const { return true; }

 protected:
  virtual CompletionResult do_complete(const CompletionRequest& request) = 0;
};

using BackendPtr = std::shared_ptr<Backend>;

std::string prompt_hash(std::string_view prompt);

enum class FixtureMatching { sequence, prompt_hash };

struct FixtureReply {
  std::string reply;
  std::optional<std::string> prompt_hash;
};

struct Fixture {
  FixtureMatching matching = FixtureMatching::sequence;
  std::vector<FixtureReply> replies;
};

/// Accepts a bare JSON array of strings/objects, or
/// {"matching": "sequence"|"prompt_hash", "replies": [...]}.
Fixture parse_fixture(std::string_view json_text);
Fixture load_fixture_file(const std::string& path);

/// Deterministic backend replaying canned replies.
class ScriptedBackend final : public Backend {
 public:
  explicit ScriptedBackend(Fixture fixture);

  size_t calls() const;

 protected:
  CompletionResult do_complete(const CompletionRequest& request) override;

 private:
  Fixture fixture_;
  std::unordered_map<std::string, std::string> by_hash_;
  mutable std::mutex mu_;
  size_t cursor_ = 0;
  size_t calls_ = 0;
};

BackendPtr scripted_backend(std::vector<std::string> replies,
                            FixtureMatching matching = FixtureMatching::sequence);
BackendPtr scripted_backend(Fixture fixture);

struct HttpBackendOptions {
  std::string endpoint;  // e.g. https://api.openai.com/v1
  std::string credentials;
  std::string model_name = "text-davinci-002";
  std::chrono::milliseconds timeout{60'000};
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{500};
};

/// OpenAI-compatible /completions and /chat/completions client.
class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(HttpBackendOptions options);

  /// JSON body sent for a request; exposed for wire-format tests.
  std::string request_body(const CompletionRequest& request) const;
  std::string request_path(CompletionMode mode) const;

 protected:
  CompletionResult do_complete(const CompletionRequest& request) override;

 private:
  HttpBackendOptions options_;
  std::string scheme_host_port_;
  std::string base_path_;
};

BackendPtr http_backend(std::string endpoint, std::string credentials, std::string model_name);

}  // namespace hmt
