#include "hmt/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <ctime>
#include <set>

#include <fmt/format.h>

#include "hmt/error.hpp"

namespace hmt {

namespace {

constexpr std::string_view kQuestionLabel = "Question:";
constexpr std::string_view kAnswerLabel = "Answer:";

void log_event(Session& s, const PipelineClock& clock, std::string event) {
  s.event_log.push_back({format_timestamp(clock.now()), std::move(event)});
}

void advance(Session& s, Stage to, const PipelineClock& clock) {
  if (static_cast<int>(to) <= static_cast<int>(s.stage))
    throw Error(Errc::WrongStage, fmt::format("cannot move from {} to {}", to_string(s.stage),
                                              to_string(to)));
  s.stage = to;
  log_event(s, clock, fmt::format("stage -> {}", to_string(to)));
}

void require_stage(const Session& s, Stage wanted) {
  if (s.stage != wanted)
    throw Error(Errc::WrongStage, fmt::format("session {} is {}, expected {}", s.id,
                                              to_string(s.stage), to_string(wanted)));
}

CompletionMode mode_for(Voice v) {
  return v == Voice::second_person ? CompletionMode::chat : CompletionMode::completion;
}

bool starts_with(std::string_view s, std::string_view prefix) {
  return s.substr(0, prefix.size()) == prefix;
}

std::set<std::string> token_set(std::string_view normalized) {
  std::set<std::string> tokens;
  size_t i = 0;
  while (i < normalized.size()) {
    size_t j = normalized.find(' ', i);
    if (j == std::string_view::npos) j = normalized.size();
    if (j > i) tokens.emplace(normalized.substr(i, j - i));
    i = j + 1;
  }
  return tokens;
}

std::string make_session_id(const TaskSpec& task, std::chrono::system_clock::time_point t) {
  static std::atomic<std::uint64_t> counter{0};
  std::string slug;
  for (char c : task.name) {
    unsigned char u = static_cast<unsigned char>(c);
    if (std::isalnum(u))
      slug.push_back(static_cast<char>(std::tolower(u)));
    else if (!slug.empty() && slug.back() != '-')
      slug.push_back('-');
    if (slug.size() >= 24) break;
  }
  while (!slug.empty() && slug.back() == '-') slug.pop_back();
  auto ns = std::chrono::duration_cast<std::chrono::nanoseconds>(t.time_since_epoch()).count();
  auto key = fmt::format("{}|{}|{}", task.name, ns, counter.fetch_add(1));
  return (slug.empty() ? "task" : slug) + "-" + prompt_hash(key).substr(0, 12);
}

}  // namespace

std::string_view to_string(Stage s) noexcept {
  switch (s) {
    case Stage::generating_questions: return "generating_questions";
    case Stage::awaiting_answers: return "awaiting_answers";
    case Stage::generating_output: return "generating_output";
    case Stage::complete: return "complete";
  }
  return "generating_questions";
}

std::optional<Stage> parse_stage(std::string_view s) noexcept {
  for (Stage st : {Stage::generating_questions, Stage::awaiting_answers, Stage::generating_output,
                   Stage::complete})
    if (to_string(st) == s) return st;
  return std::nullopt;
}

// --- Session ----------------------------------------------------------------

void Session::check_invariants() const {
  auto fail = [&](const std::string& why) {
    throw Error(Errc::ValidationError, "session " + id + ": " + why);
  };
  if (id.empty()) fail("empty id");
  if (answers.size() != questions.size())
    fail(fmt::format("{} answers for {} questions", answers.size(), questions.size()));
  if (stage == Stage::generating_output || stage == Stage::complete) {
    if (!all_answered()) fail("output stage with unanswered questions");
  }
  if (final_output.has_value() != (stage == Stage::complete))
    fail("final_output must be present exactly when complete");
  if (stage == Stage::complete) {
    std::string joined;
    for (size_t i = 0; i < outputs.size(); ++i) joined += (i ? "\n\n" : "") + outputs[i];
    if (joined != *final_output) fail("final_output differs from joined outputs");
    if (batches.size() != outputs.size()) fail("one output per batch expected");
  }
  size_t expect = 0;
  for (const auto& b : batches) {
    if (b.begin != expect || b.end <= b.begin) fail("batches must tile the QA pairs in order");
    expect = b.end;
  }
  if (!batches.empty() && expect != questions.size()) fail("batches must cover every QA pair");
}

std::vector<QaPair> Session::qa_pairs() const {
  std::vector<QaPair> out;
  for (size_t i = 0; i < questions.size(); ++i)
    out.emplace_back(questions[i], answers[i].value_or(""));
  return out;
}

bool Session::all_answered() const {
  return answers.size() == questions.size() &&
         std::all_of(answers.begin(), answers.end(),
                     [](const auto& a) { return a && !trim(*a).empty(); });
}

// --- limits & clock ---------------------------------------------------------

std::vector<EscalationStep> QuestionLoopLimits::default_escalation() {
  EscalationStep warmer;
  warmer.config.temperature = 0.9;
  EscalationStep example;
  example.add_example_question = true;
  return {warmer, example};
}

int QuestionLoopLimits::call_bound() const {
  return max_questions +
         max_consecutive_rejects * (1 + static_cast<int>(escalation_schedule.size()));
}

void QuestionLoopLimits::validate() const {
  if (max_questions < 1) throw Error(Errc::InvalidRequest, "max_questions must be >= 1");
  if (!(similarity_threshold > 0.0 && similarity_threshold <= 1.0))
    throw Error(Errc::InvalidRequest, "similarity_threshold must be in (0, 1]");
  if (max_consecutive_rejects < 1)
    throw Error(Errc::InvalidRequest, "max_consecutive_rejects must be >= 1");
}

PipelineClock PipelineClock::logical(std::chrono::system_clock::time_point start) {
  auto tick = std::make_shared<std::atomic<std::int64_t>>(0);
  return PipelineClock{[start, tick] { return start + std::chrono::milliseconds(tick->fetch_add(1)); }};
}

std::string format_timestamp(std::chrono::system_clock::time_point t) {
  using namespace std::chrono;
  auto ms = duration_cast<milliseconds>(t.time_since_epoch()).count();
  std::time_t secs = static_cast<std::time_t>(ms / 1000);
  int frac = static_cast<int>(ms % 1000);
  if (frac < 0) {
    frac += 1000;
    --secs;
  }
  std::tm tm{};
  gmtime_r(&secs, &tm);
  return fmt::format("{:04}-{:02}-{:02}T{:02}:{:02}:{:02}.{:03}Z", tm.tm_year + 1900, tm.tm_mon + 1,
                     tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, frac);
}

std::optional<std::chrono::system_clock::time_point> parse_timestamp(std::string_view s) {
  std::tm tm{};
  int ms = 0;
  std::string buf(s);
  if (std::sscanf(buf.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d.%3dZ", &tm.tm_year, &tm.tm_mon, &tm.tm_mday,
                  &tm.tm_hour, &tm.tm_min, &tm.tm_sec, &ms) != 7)
    return std::nullopt;
  tm.tm_year -= 1900;
  tm.tm_mon -= 1;
  std::time_t secs = timegm(&tm);
  return std::chrono::system_clock::time_point(std::chrono::seconds(secs) +
                                               std::chrono::milliseconds(ms));
}

// --- Stage 1 ------------------------------------------------------------------

Session new_session(const TaskSpec& task, Voice voice, const PipelineClock& clock, std::string id) {
  if (voice == Voice::second_person && !task.has_second_person())
    throw Error(Errc::VoiceUnavailable, "task '" + task.name + "' has no second_person prompt");
  Session s;
  s.id = id.empty() ? make_session_id(task, clock.now()) : std::move(id);
  s.task_name = task.name;
  s.voice = voice;
  log_event(s, clock, fmt::format("created task={} voice={}", task.name, to_string(voice)));
  return s;
}

std::string extract_question(const CompletionResult& result) {
  std::string t = trim(result.text);
  if (starts_with(t, kQuestionLabel)) t = trim(std::string_view(t).substr(kQuestionLabel.size()));
  size_t cut = std::min(t.find(kAnswerLabel), t.find('\n'));
  if (cut != std::string::npos) t = trim(std::string_view(t).substr(0, cut));
  if (!t.empty() && result.matched_stop == "?" && t.back() != '?') t += '?';
  if (t.empty() || t.back() != '?')
    throw Error(Errc::NonQuestion, "not a question: '" + trim(result.text) + "'");
  return t;
}

std::optional<std::string> extract_ephemeral_answer(const CompletionResult& result) {
  size_t at = result.text.find(kAnswerLabel);
  if (at == std::string::npos) return std::nullopt;
  std::string_view rest = std::string_view(result.text).substr(at + kAnswerLabel.size());
  rest = rest.substr(0, rest.find('\n'));
  std::string a = trim(rest);
  if (a.empty()) return std::nullopt;
  return a;
}

std::string normalize_question(std::string_view text) {
  // Typographic punctuation (UTF-8) is dropped along with ASCII punctuation.
  static const std::string_view kWide[] = {"’", "‘", "“", "”",
                                           "–", "—", "…"};
  std::string out;
  bool pending_space = false;
  for (size_t i = 0; i < text.size();) {
    bool skipped = false;
    for (auto w : kWide) {
      if (text.substr(i, w.size()) == w) {
        i += w.size();
        skipped = true;
        break;
      }
    }
    if (skipped) continue;
    unsigned char c = static_cast<unsigned char>(text[i++]);
    if (std::isspace(c)) {
      pending_space = !out.empty();
    } else if (c < 0x80 && std::ispunct(c)) {
      continue;
    } else {
      if (pending_space) out.push_back(' ');
      pending_space = false;
      out.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  return out;
}

double token_jaccard(std::string_view a, std::string_view b) {
  auto sa = token_set(normalize_question(a));
  auto sb = token_set(normalize_question(b));
  if (sa.empty() && sb.empty()) return 1.0;
  size_t inter = 0;
  for (const auto& t : sa) inter += sb.count(t);
  return static_cast<double>(inter) / static_cast<double>(sa.size() + sb.size() - inter);
}

bool is_repetitive(std::string_view candidate, const std::vector<std::string>& accepted,
                   double threshold) {
  const std::string norm = normalize_question(candidate);
  for (const auto& q : accepted) {
    if (normalize_question(q) == norm) return true;
    if (token_jaccard(candidate, q) >= threshold) return true;
  }
  return false;
}

void run_question_generation(Backend& backend, Session& session, const TaskSpec& task,
                             const QuestionLoopLimits& limits, const GenerationConfig& base,
                             const PipelineClock& clock) {
  require_stage(session, Stage::generating_questions);
  limits.validate();
  base.validate();

  const int schedule_len = static_cast<int>(limits.escalation_schedule.size());
  const int reject_budget = limits.max_consecutive_rejects * (1 + schedule_len);
  std::vector<std::string> accepted = session.questions;
  std::vector<std::optional<std::string>> ephemeral(accepted.size());
  int consecutive = 0;
  int rejected = 0;
  std::string stop_reason = "max_questions";

  while (static_cast<int>(accepted.size()) < limits.max_questions) {
    const int level = std::min(consecutive, schedule_len);
    GenerationConfig config = base;
    config.stop_sequences = limits.stop_sequences;
    QuestionPromptOptions options;
    bool with_example = false;
    for (int i = 0; i < level; ++i) {
      const auto& step = limits.escalation_schedule[static_cast<size_t>(i)];
      config = step.config.apply(config);
      with_example = with_example || step.add_example_question;
      if (!step.extra_instruction.empty()) {
        if (!options.extra_instruction.empty()) options.extra_instruction += ' ';
        options.extra_instruction += step.extra_instruction;
      }
    }

    std::vector<std::string> shown = accepted;
    std::vector<std::optional<std::string>> shown_answers = ephemeral;
    if (with_example) {
      for (const auto& q : task.question_bank) {
        if (!is_repetitive(q, accepted, limits.similarity_threshold)) {
          shown.insert(shown.begin(), q);
          shown_answers.insert(shown_answers.begin(), std::nullopt);
          break;
        }
      }
    }
    if (level > 0) log_event(session, clock, fmt::format("escalation level={}", level));

    CompletionRequest request{
        render_question_prompt(task, build_transcript(shown, shown_answers), session.voice, options),
        config, mode_for(session.voice)};
    CompletionResult result;
    try {
      result = backend.complete(request);
    } catch (const Error& e) {
      if (e.code() != Errc::FixtureExhausted) throw;
      stop_reason = "backend_exhausted";
      break;
    }

    std::string reason;
    std::string question;
    try {
      question = extract_question(result);
      if (is_repetitive(question, accepted, limits.similarity_threshold)) reason = "duplicate";
    } catch (const Error& e) {
      if (e.code() != Errc::NonQuestion) throw;
      reason = "non_question";
    }

    if (reason.empty()) {
      log_event(session, clock, fmt::format("accepted[{}]: {}", accepted.size(), question));
      accepted.push_back(std::move(question));
      ephemeral.push_back(extract_ephemeral_answer(result));
      consecutive = 0;
      continue;
    }
    log_event(session, clock,
              fmt::format("rejected({}): {}", reason, question.empty() ? trim(result.text) : question));
    ++consecutive;
    ++rejected;
    if (consecutive >= limits.max_consecutive_rejects) {
      stop_reason = "consecutive_rejects";
      break;
    }
    if (rejected >= reject_budget) {
      stop_reason = "reject_budget";
      break;
    }
  }

  log_event(session, clock, fmt::format("stage1 stopped: {}", stop_reason));
  if (accepted.empty())
    throw Error(Errc::NoQuestionsProduced,
                fmt::format("no questions accepted for task '{}' ({})", task.name, stop_reason));
  session.questions = std::move(accepted);
  session.answers.assign(session.questions.size(), std::nullopt);
  session.config_used = base;
  advance(session, Stage::awaiting_answers, clock);
}

Session generate_questions(Backend& backend, const TaskSpec& task, const QuestionLoopLimits& limits,
                           Voice voice, const GenerationConfig& base, const PipelineClock& clock) {
  Session s = new_session(task, voice, clock);
  run_question_generation(backend, s, task, limits, base, clock);
  return s;
}

// --- Stage 2 ------------------------------------------------------------------

void fill_answers(Session& session, const std::vector<AnswerFill>& answers,
                  const PipelineClock& clock) {
  require_stage(session, Stage::awaiting_answers);
  for (const auto& a : answers) {
    if (a.index >= session.questions.size())
      throw Error(Errc::IndexOutOfRange, fmt::format("answer index {} out of range (0..{})",
                                                     a.index, session.questions.size()));
    if (trim(a.text).empty())
      throw Error(Errc::BlankAnswer, fmt::format("answer {} is blank", a.index));
  }
  for (const auto& a : answers) {
    session.answers[a.index] = trim(a.text);
    log_event(session, clock, fmt::format("answer[{}] filled", a.index));
  }
  if (session.all_answered()) advance(session, Stage::generating_output, clock);
}

// --- Stage 3 ------------------------------------------------------------------

std::vector<BatchRange> partition_batches(size_t pair_count, size_t batch_size, bool dependent) {
  if (pair_count == 0) throw Error(Errc::InvalidRequest, "no QA pairs to partition");
  if (batch_size == 0) throw Error(Errc::InvalidRequest, "batch size must be positive");
  if (dependent) return {{0, pair_count}};
  std::vector<BatchRange> out;
  for (size_t b = 0; b < pair_count; b += batch_size)
    out.push_back({b, std::min(pair_count, b + batch_size)});
  return out;
}

void generate_output(Backend& backend, Session& session, const TaskSpec& task, size_t batch_size,
                     const OutputOptions& options, const PipelineClock& clock) {
  require_stage(session, Stage::generating_output);
  const auto pairs = session.qa_pairs();
  const auto batches = partition_batches(pairs.size(), batch_size, task.dependent_qa);

  GenerationConfig config = session.config_used;
  config.stop_sequences = options.stop_sequences;

  std::vector<std::string> outputs;
  for (size_t k = 0; k < batches.size(); ++k) {
    const auto& b = batches[k];
    std::vector<QaPair> slice(pairs.begin() + static_cast<std::ptrdiff_t>(b.begin),
                              pairs.begin() + static_cast<std::ptrdiff_t>(b.end));
    CompletionRequest request{render_output_prompt(task, slice, session.voice), config,
                              mode_for(session.voice)};
    std::string text;
    for (size_t attempt = 0;; ++attempt) {
      text = trim(backend.complete(request).text);
      if (!text.empty()) break;
      if (attempt >= options.escalation.size())
        throw Error(Errc::EmptyCompletion,
                    fmt::format("blank completion for batch {} [{}, {})", k, b.begin, b.end));
      request.config = options.escalation[attempt].apply(request.config);
    }
    if (task.output_cue && !starts_with(text, *task.output_cue)) text = *task.output_cue + " " + text;
    log_event(session, clock,
              fmt::format("batch[{}] [{}, {}) output {} chars", k, b.begin, b.end, text.size()));
    outputs.push_back(std::move(text));
  }

  std::string joined;
  for (size_t i = 0; i < outputs.size(); ++i) joined += (i ? "\n\n" : "") + outputs[i];
  session.batches = batches;
  session.outputs = std::move(outputs);
  session.final_output = std::move(joined);
  advance(session, Stage::complete, clock);
}

}  // namespace hmt
