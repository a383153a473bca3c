#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hmt/llm_backend.hpp"
#include "hmt/prompt_engine.hpp"
#include "hmt/task_registry.hpp"

namespace hmt {

enum class Stage { generating_questions, awaiting_answers, generating_output, complete };

std::string_view to_string(Stage s) noexcept;
std::optional<Stage> parse_stage(std::string_view s) noexcept;

/// Half-open index range [begin, end) into a session's QA pairs.
struct BatchRange {
  size_t begin = 0;
  size_t end = 0;

  size_t size() const { return end - begin; }
  friend bool operator==(const BatchRange&, const BatchRange&) = default;
};

struct SessionEvent {
  std::string timestamp;  // ISO-8601 UTC
  std::string event;

  friend bool operator==(const SessionEvent&, const SessionEvent&) = default;
};

struct Session {
  std::string id;
  std::string task_name;
  Voice voice = Voice::first_person;
  Stage stage = Stage::generating_questions;
  std::vector<std::string> questions;
  std::vector<std::optional<std::string>> answers;
  std::vector<BatchRange> batches;
  std::vector<std::string> outputs;
  std::optional<std::string> final_output;
  GenerationConfig config_used;
  std::vector<SessionEvent> event_log;

  /// Throws Error{ValidationError} describing the first broken invariant.
  void check_invariants() const;
  std::vector<QaPair> qa_pairs() const;
  bool all_answered() const;

  friend bool operator==(const Session&, const Session&) = default;
};

/// One Stage-1 fallback step: decoding overrides plus prompt-side help.
struct EscalationStep {
  ConfigOverride config;
  bool add_example_question = false;
  std::string extra_instruction;
};

struct QuestionLoopLimits {
  int max_questions = 32;
  double similarity_threshold = 0.9;
  int max_consecutive_rejects = 3;
  std::vector<EscalationStep> escalation_schedule = default_escalation();
  std::vector<std::string> stop_sequences{"\nQuestion:"};

  static std::vector<EscalationStep> default_escalation();

  /// Upper bound on backend calls made by generate_questions.
  int call_bound() const;
  void validate() const;
};

/// Source of timestamps and session ids; injectable for replayable logs.
struct PipelineClock {
  std::function<std::chrono::system_clock::time_point()> now = [] {
    return std::chrono::system_clock::now();
  };

  /// Deterministic clock: starts at `start` and advances one millisecond per call.
  static PipelineClock logical(std::chrono::system_clock::time_point start = {});
};

std::string format_timestamp(std::chrono::system_clock::time_point t);
std::optional<std::chrono::system_clock::time_point> parse_timestamp(std::string_view s);

/// Fresh session in stage generating_questions.
Session new_session(const TaskSpec& task, Voice voice, const PipelineClock& clock = {},
                    std::string id = {});

/// Stage 1 on an existing session (stage generating_questions).
void run_question_generation(Backend& backend, Session& session, const TaskSpec& task,
                             const QuestionLoopLimits& limits, const GenerationConfig& base = {},
                             const PipelineClock& clock = {});

/// Stage 1 on a new session; returns it in stage awaiting_answers.
Session generate_questions(Backend& backend, const TaskSpec& task, const QuestionLoopLimits& limits,
                           Voice voice, const GenerationConfig& base = {},
                           const PipelineClock& clock = {});

/// Cleans one Stage-1 completion into a question. Throws Error{NonQuestion}.
std::string extract_question(const CompletionResult& result);

/// The model's throwaway answer that followed the question, if any.
std::optional<std::string> extract_ephemeral_answer(const CompletionResult& result);

std::string normalize_question(std::string_view text);
double token_jaccard(std::string_view a, std::string_view b);
bool is_repetitive(std::string_view candidate, const std::vector<std::string>& accepted,
                   double threshold);

struct AnswerFill {
  size_t index = 0;
  std::string text;
};

/// Stage 2. All fills are validated before any is applied.
void fill_answers(Session& session, const std::vector<AnswerFill>& answers,
                  const PipelineClock& clock = {});

std::vector<BatchRange> partition_batches(size_t pair_count, size_t batch_size, bool dependent);

struct OutputOptions {
  std::vector<std::string> stop_sequences{"\nQuestion:"};
  std::vector<ConfigOverride> escalation;  // retried on a blank completion
};

/// Stage 3: batched output generation; joins batch outputs with a blank line.
void generate_output(Backend& backend, Session& session, const TaskSpec& task, size_t batch_size,
                     const OutputOptions& options = {}, const PipelineClock& clock = {});

}  // namespace hmt
