#include "hmt/prompt_engine.hpp"

#include "hmt/error.hpp"

namespace hmt {

namespace {

constexpr std::string_view kQuestionCue = "Question:";

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

}  // namespace

std::string_view to_string(Voice v) noexcept {
  return v == Voice::first_person ? "first_person" : "second_person";
}

std::optional<Voice> parse_voice(std::string_view s) noexcept {
  if (s == "first_person" || s == "first") return Voice::first_person;
  if (s == "second_person" || s == "second") return Voice::second_person;
  return std::nullopt;
}

std::string trim(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

std::string stage1_preamble(const TaskSpec& task, Voice voice) {
  const std::string& prompt = voice == Voice::first_person ? task.stage1_prompt_first_person
                                                           : task.stage1_prompt_second_person;
  if (prompt.empty())
    throw Error(Errc::VoiceUnavailable, "task '" + task.name + "' has no " +
                                            std::string(to_string(voice)) + " prompt");
  std::string_view view = prompt;
  view.remove_suffix(kQuestionCue.size());
  while (!view.empty() && view.back() == '\n') view.remove_suffix(1);
  return std::string(view);
}

PromptText render_question_prompt(const TaskSpec& task, std::string_view transcript, Voice voice,
                                  const QuestionPromptOptions& options) {
  std::string text = stage1_preamble(task, voice);
  if (!options.extra_instruction.empty()) text += " " + options.extra_instruction;
  text += '\n';
  if (!transcript.empty()) {
    text += '\n';
    text += transcript;
    text += '\n';
  }
  text += kQuestionCue;
  return {std::move(text), PromptKind::stage1};
}

PromptText render_output_prompt(const TaskSpec& task, const std::vector<QaPair>& qa_pairs,
                                Voice voice) {
  if (qa_pairs.empty())
    throw Error(Errc::EmptyPairs, "no question-answer pairs for task '" + task.name + "'");
  std::vector<std::string> questions;
  std::vector<std::optional<std::string>> answers;
  for (size_t i = 0; i < qa_pairs.size(); ++i) {
    std::string answer = trim(qa_pairs[i].second);
    if (answer.empty())
      throw Error(Errc::EmptyAnswers, "answer " + std::to_string(i) + " is blank");
    questions.push_back(trim(qa_pairs[i].first));
    answers.emplace_back(std::move(answer));
  }

  std::string text = stage1_preamble(task, voice);
  text += "\n\n";
  text += build_transcript(questions, answers);
  text += '\n';
  const bool second = voice == Voice::second_person && task.stage3_directive_second_person;
  text += second ? *task.stage3_directive_second_person : task.stage3_directive;
  if (task.output_instruction) text += " " + *task.output_instruction;
  if (task.output_cue) text += "\n" + *task.output_cue;
  return {std::move(text), PromptKind::stage3};
}

std::string build_transcript(const std::vector<std::string>& questions,
                             const std::vector<std::optional<std::string>>& ephemeral_answers) {
  if (questions.size() != ephemeral_answers.size())
    throw Error(Errc::LengthMismatch, std::to_string(questions.size()) + " questions vs " +
                                          std::to_string(ephemeral_answers.size()) + " answers");
  std::string out;
  for (size_t i = 0; i < questions.size(); ++i) {
    if (i) out += '\n';
    out += "Question: " + questions[i] + "\nAnswer:";
    if (ephemeral_answers[i] && !ephemeral_answers[i]->empty()) out += " " + *ephemeral_answers[i];
  }
  return out;
}

}  // namespace hmt
