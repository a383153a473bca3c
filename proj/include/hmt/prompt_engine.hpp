#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hmt/task_registry.hpp"

namespace hmt {

enum class Voice { first_person, second_person };

std::string_view to_string(Voice v) noexcept;
std::optional<Voice> parse_voice(std::string_view s) noexcept;

enum class PromptKind { stage1, stage3 };

struct PromptText {
  std::string text;
  PromptKind kind = PromptKind::stage1;

  friend bool operator==(const PromptText&, const PromptText&) = default;
};

using QaPair = std::pair<std::string, std::string>;

struct QuestionPromptOptions {
  // Appended to the preamble line (Stage-1 fallback "additional task-specific
  // instruction").
  std::string extra_instruction;
};

/// Stage-1 preamble: the task's question prompt without its trailing
/// "Question:" line. Throws Error{VoiceUnavailable}.
std::string stage1_preamble(const TaskSpec& task, Voice voice);

/// Stage-1 prompt over the running transcript (see build_transcript).
PromptText render_question_prompt(const TaskSpec& task, std::string_view transcript, Voice voice,
                                  const QuestionPromptOptions& options = {});

/// Stage-3 prompt: preamble, the QA blocks in order, then the task directive
/// (with instruction and trailing cue where the task has them).
PromptText render_output_prompt(const TaskSpec& task, const std::vector<QaPair>& qa_pairs,
                                Voice voice);

/// "Question: q\nAnswer: a" lines; absent answers render as a bare "Answer:".
std::string build_transcript(const std::vector<std::string>& questions,
                             const std::vector<std::optional<std::string>>& ephemeral_answers);

std::string trim(std::string_view s);

}  // namespace hmt
