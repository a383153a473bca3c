#include <doctest.h>

#include <numeric>
#include <regex>
#include <set>

#include "hmt/error.hpp"
#include "hmt/task_registry.hpp"
#include "test_support.hpp"

using namespace hmt;
using nlohmann::json;

namespace {

std::string minimal_catalog(json extra = json::object()) {
  json t = {{"name", "haiku"},
            {"executer_phrase", "haiku poet"},
            {"do_task_phrase", "write a haiku"},
            {"output_phrase", "haiku"},
            {"stage1_prompt_first_person", "I am a haiku poet.\nQuestion:"}};
  t.update(extra);
  return json{{"source_version", "test"}, {"tasks", json::array({t})}}.dump();
}

}  // namespace

TEST_CASE("built-in catalog has the six core tasks and the additional tasks") {
  const auto& cat = builtin_catalog();
  CHECK(cat.tasks.size() == 63);
  auto core = cat.core_tasks();
  REQUIRE(core.size() == 6);

  std::map<std::string, size_t> want{{"bio", 32},          {"travel plan", 8}, {"dialogue", 4},
                                     {"poem", 4},          {"event summary", 12}, {"story", 8}};
  size_t total = 0;
  for (const TaskSpec* t : core) {
    REQUIRE(want.count(t->name));
    CHECK(t->question_bank.size() == want[t->name]);
    total += t->question_bank.size();
  }
  CHECK(total == 68);
}

TEST_CASE("catalog strings are verbatim from the reference text") {
  const std::string ref = test::read_file(HMT_REFERENCE_DOC);
  const std::string cue = "\nQuestion:";
  for (const auto& [name, t] : builtin_catalog().tasks) {
    CAPTURE(name);
    for (const auto& q : t.question_bank) {
      CAPTURE(q);
      CHECK(ref.find(q) != std::string::npos);
    }
    const auto& p = t.stage1_prompt_first_person;
    CHECK(ref.find(p.substr(0, p.size() - cue.size())) != std::string::npos);
  }

  // Additional tasks: one "task & <name>\\" row per task table.
  std::set<std::string> rows;
  std::regex row(R"(^\s*task & ([^&\n]*?)\\\\)", std::regex::multiline);
  for (auto it = std::sregex_iterator(ref.begin(), ref.end(), row); it != std::sregex_iterator(); ++it)
    rows.insert((*it)[1]);
  std::set<std::string> extra;
  for (const auto& [name, t] : builtin_catalog().tasks)
    if (!t.core) extra.insert(name);
  CHECK(rows.size() == 57);
  CHECK(rows == extra);
}

TEST_CASE("the shipped data file matches the compiled-in catalog") {
  auto file = load_tasks_file(std::string(HMT_DATA_DIR) + "/catalog.json");
  CHECK(file == builtin_catalog());
}

TEST_CASE("serialize round-trips") {
  const auto& cat = builtin_catalog();
  CHECK(load_tasks(serialize(cat)) == cat);
}

TEST_CASE("get_task and find_task") {
  const auto& cat = builtin_catalog();
  CHECK(get_task(cat, "poem").question_bank.size() == 4);
  CHECK_THROWS_WITH_AS(get_task(cat, "limerick"), doctest::Contains("limerick"), Error);
  try {
    get_task(cat, "limerick");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::UnknownTask);
  }
  REQUIRE(find_task(cat, "event-summary") != nullptr);
  CHECK(find_task(cat, "Travel_Plan")->name == "travel plan");
  CHECK(find_task(cat, "bogus-task") == nullptr);
}

TEST_CASE("load_tasks defaults and validation") {
  auto cat = load_tasks(minimal_catalog());
  const auto& t = get_task(cat, "haiku");
  CHECK(t.default_batch_size == kDefaultBatchSize);
  CHECK(t.stage3_directive == "Write a haiku using the questions and answers above.");
  CHECK_FALSE(t.has_second_person());
  CHECK_FALSE(t.dependent_qa);

  auto code_of = [](const std::string& doc) {
    try {
      load_tasks(doc);
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::UsageError;  // sentinel: nothing thrown
  };
  CHECK(code_of("{") == Errc::ParseError);
  CHECK(code_of("[]") == Errc::ParseError);
  CHECK(code_of(minimal_catalog({{"executer_phrase", 7}})) == Errc::ParseError);
  CHECK(code_of(minimal_catalog({{"executer_phrase", ""}})) == Errc::ValidationError);
  CHECK(code_of(minimal_catalog({{"default_batch_size", 0}})) == Errc::ValidationError);
  CHECK(code_of(minimal_catalog({{"stage1_prompt_first_person", "no cue"}})) == Errc::ValidationError);
  CHECK(code_of(minimal_catalog({{"stage1_prompt_first_person", "I ask. Question:"}})) ==
        Errc::ValidationError);

  auto doc = json::parse(minimal_catalog());
  doc["tasks"].push_back(doc["tasks"][0]);
  CHECK(code_of(doc.dump()) == Errc::ValidationError);
}

TEST_CASE("core task details") {
  const auto& cat = builtin_catalog();
  CHECK(get_task(cat, "poem").dependent_qa);
  CHECK(get_task(cat, "dialogue").dependent_qa);
  CHECK_FALSE(get_task(cat, "bio").dependent_qa);
  CHECK(get_task(cat, "dialogue").output_cue == std::optional<std::string>("Person 1:"));
  CHECK(get_task(cat, "story").output_instruction ==
        std::optional<std::string>("Introduce names to represent characters."));
  for (const TaskSpec* t : cat.core_tasks()) CHECK(t->has_second_person());
  for (const auto& [name, t] : cat.tasks)
    if (!t.core) CHECK_FALSE(t.has_second_person());
}
