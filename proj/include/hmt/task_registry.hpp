#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hmt {

/// Everything the prompt templates need for one task, plus its frozen
/// question bank.
struct TaskSpec {
  std::string name;
  bool core = false;  // one of the six evaluated tasks
  std::string executer_phrase;
  std::string do_task_phrase;
  std::string output_phrase;
  std::optional<std::string> output_instruction;
  std::string stage1_prompt_first_person;
  std::string stage1_prompt_second_person;  // empty: no second-person variant
  std::string stage3_directive;
  std::optional<std::string> stage3_directive_second_person;
  std::optional<std::string> output_cue;  // e.g. "Person 1:" for dialogue
  bool dependent_qa = false;
  int default_batch_size = 8;
  std::vector<std::string> question_bank;

  bool has_second_person() const { return !stage1_prompt_second_person.empty(); }

  friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

struct TaskCatalog {
  std::map<std::string, TaskSpec, std::less<>> tasks;
  std::string source_version;

  std::vector<const TaskSpec*> core_tasks() const;

  friend bool operator==(const TaskCatalog&, const TaskCatalog&) = default;
};

inline constexpr int kDefaultBatchSize = 8;

std::string generic_stage3_directive(std::string_view output_phrase);

/// The compiled-in catalog: 6 core tasks and 57 additional ones.
const TaskCatalog& builtin_catalog();

/// Parses a catalog document (JSON, see docs/catalog-format.md).
/// Throws Error{ParseError} or Error{ValidationError}.
TaskCatalog load_tasks(std::string_view document);
TaskCatalog load_tasks_file(const std::string& path);

std::string serialize(const TaskCatalog& catalog);

/// Throws Error{UnknownTask}.
const TaskSpec& get_task(const TaskCatalog& catalog, std::string_view name);

/// Resolves user-typed names: exact match first, then with '-'/'_' read as
/// spaces and case folded. Returns nullptr when nothing matches.
const TaskSpec* find_task(const TaskCatalog& catalog, std::string_view name);

}  // namespace hmt
