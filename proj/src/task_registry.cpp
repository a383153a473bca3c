#include "hmt/task_registry.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "hmt/error.hpp"

namespace hmt {

namespace detail {
extern const char* const kBuiltinCatalogJson;
}

namespace {

using nlohmann::json;

bool ends_with_question_line(std::string_view prompt) {
  constexpr std::string_view kCue = "Question:";
  if (prompt.size() < kCue.size() || prompt.substr(prompt.size() - kCue.size()) != kCue)
    return false;
  return prompt.size() == kCue.size() || prompt[prompt.size() - kCue.size() - 1] == '\n';
}

std::string required_string(const json& record, const char* field, const std::string& task) {
  auto it = record.find(field);
  if (it == record.end() || !it->is_string())
    throw Error(Errc::ParseError, "task '" + task + "': field '" + field + "' must be a string");
  return it->get<std::string>();
}

std::optional<std::string> optional_string(const json& record, const char* field,
                                           const std::string& task) {
  auto it = record.find(field);
  if (it == record.end() || it->is_null()) return std::nullopt;
  if (!it->is_string())
    throw Error(Errc::ParseError, "task '" + task + "': field '" + field + "' must be a string");
  return it->get<std::string>();
}

TaskSpec parse_task(const json& record) {
  if (!record.is_object()) throw Error(Errc::ParseError, "task record must be an object");
  TaskSpec t;
  auto name_it = record.find("name");
  if (name_it == record.end() || !name_it->is_string())
    throw Error(Errc::ParseError, "task record without a string 'name'");
  t.name = name_it->get<std::string>();

  t.executer_phrase = required_string(record, "executer_phrase", t.name);
  t.do_task_phrase = required_string(record, "do_task_phrase", t.name);
  t.output_phrase = required_string(record, "output_phrase", t.name);
  t.stage1_prompt_first_person = required_string(record, "stage1_prompt_first_person", t.name);
  t.stage1_prompt_second_person =
      optional_string(record, "stage1_prompt_second_person", t.name).value_or("");
  t.output_instruction = optional_string(record, "output_instruction", t.name);
  t.stage3_directive = optional_string(record, "stage3_directive", t.name)
                           .value_or(generic_stage3_directive(t.output_phrase));
  t.stage3_directive_second_person =
      optional_string(record, "stage3_directive_second_person", t.name);
  t.output_cue = optional_string(record, "output_cue", t.name);

  try {
    t.core = record.value("core", false);
    t.dependent_qa = record.value("dependent_qa", false);
    t.default_batch_size = record.value("default_batch_size", kDefaultBatchSize);
    if (auto it = record.find("question_bank"); it != record.end())
      t.question_bank = it->get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw Error(Errc::ParseError, "task '" + t.name + "': " + e.what());
  }
  return t;
}

void validate(const TaskSpec& t) {
  auto fail = [&](const std::string& why) {
    throw Error(Errc::ValidationError, "task '" + t.name + "': " + why);
  };
  if (t.name.empty()) fail("empty name");
  if (t.executer_phrase.empty()) fail("empty executer_phrase");
  if (t.default_batch_size <= 0) fail("default_batch_size must be positive");
  if (!ends_with_question_line(t.stage1_prompt_first_person))
    fail("stage1_prompt_first_person must end with a 'Question:' line");
  if (t.has_second_person() && !ends_with_question_line(t.stage1_prompt_second_person))
    fail("stage1_prompt_second_person must end with a 'Question:' line");
  if (t.stage3_directive.empty()) fail("empty stage3_directive");
}

}  // namespace

std::vector<const TaskSpec*> TaskCatalog::core_tasks() const {
  std::vector<const TaskSpec*> out;
  for (const auto& [_, t] : tasks)
    if (t.core) out.push_back(&t);
  return out;
}

std::string generic_stage3_directive(std::string_view output_phrase) {
  return "Write a " + std::string(output_phrase) + " using the questions and answers above.";
}

TaskCatalog load_tasks(std::string_view document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw Error(Errc::ParseError, std::string("catalog: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("tasks") || !doc["tasks"].is_array())
    throw Error(Errc::ParseError, "catalog: expected an object with a 'tasks' array");

  TaskCatalog catalog;
  catalog.source_version = doc.value("source_version", std::string{});
  for (const auto& record : doc["tasks"]) {
    TaskSpec t = parse_task(record);
    validate(t);
    std::string name = t.name;
    if (!catalog.tasks.emplace(name, std::move(t)).second)
      throw Error(Errc::ValidationError, "duplicate task name '" + name + "'");
  }
  return catalog;
}

TaskCatalog load_tasks_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::ParseError, "cannot read catalog file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return load_tasks(buf.str());
}

std::string serialize(const TaskCatalog& catalog) {
  json tasks = json::array();
  for (const auto& [_, t] : catalog.tasks) {
    json r = {
        {"name", t.name},
        {"core", t.core},
        {"executer_phrase", t.executer_phrase},
        {"do_task_phrase", t.do_task_phrase},
        {"output_phrase", t.output_phrase},
        {"stage1_prompt_first_person", t.stage1_prompt_first_person},
        {"stage3_directive", t.stage3_directive},
        {"dependent_qa", t.dependent_qa},
        {"default_batch_size", t.default_batch_size},
        {"question_bank", t.question_bank},
    };
    if (t.has_second_person()) r["stage1_prompt_second_person"] = t.stage1_prompt_second_person;
    if (t.output_instruction) r["output_instruction"] = *t.output_instruction;
    if (t.stage3_directive_second_person)
      r["stage3_directive_second_person"] = *t.stage3_directive_second_person;
    if (t.output_cue) r["output_cue"] = *t.output_cue;
    tasks.push_back(std::move(r));
  }
  json doc = {{"source_version", catalog.source_version}, {"tasks", std::move(tasks)}};
  return doc.dump(2);
}

const TaskCatalog& builtin_catalog() {
  static const TaskCatalog catalog = load_tasks(detail::kBuiltinCatalogJson);
  return catalog;
}

const TaskSpec& get_task(const TaskCatalog& catalog, std::string_view name) {
  auto it = catalog.tasks.find(name);
  if (it == catalog.tasks.end())
    throw Error(Errc::UnknownTask, "unknown task '" + std::string(name) + "'");
  return it->second;
}

const TaskSpec* find_task(const TaskCatalog& catalog, std::string_view name) {
  if (auto it = catalog.tasks.find(name); it != catalog.tasks.end()) return &it->second;
  auto fold = [](std::string_view s) {
    std::string out;
    for (char c : s)
      out.push_back(c == '-' || c == '_' ? ' '
                                         : static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    return out;
  };
  const std::string wanted = fold(name);
  for (const auto& [key, t] : catalog.tasks)
    if (fold(key) == wanted) return &t;
  return nullptr;
}

}  // namespace hmt
