#include <doctest.h>

#include "hmt/error.hpp"
#include "hmt/prompt_engine.hpp"
#include "test_support.hpp"

using namespace hmt;

namespace {

std::string golden(const std::string& task, const std::string& which) {
  return test::read_file(std::string(HMT_GOLDEN_DIR) + "/" + test::slug(task) + "." + which + ".txt");
}

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::UsageError;
}

}  // namespace

TEST_CASE("stage-1 prompts match the golden files") {
  for (const auto& name : test::core_names()) {
    CAPTURE(name);
    const auto& task = get_task(builtin_catalog(), name);
    auto p = render_question_prompt(task, "", Voice::first_person);
    CHECK(p.kind == PromptKind::stage1);
    CHECK(p.text == golden(name, "stage1.first_person"));
    CHECK(p.text == task.stage1_prompt_first_person);
  }
  const auto& poem = get_task(builtin_catalog(), "poem");
  CHECK(render_question_prompt(poem, "", Voice::second_person).text ==
        golden("poem", "stage1.second_person"));
}

TEST_CASE("stage-3 prompts match the golden files") {
  for (const auto& name : test::core_names()) {
    CAPTURE(name);
    const auto& task = get_task(builtin_catalog(), name);
    auto p = render_output_prompt(task, test::load_sample(name).qa_pairs, Voice::first_person);
    CHECK(p.kind == PromptKind::stage3);
    CHECK(p.text == golden(name, "stage3.first_person"));
  }
  auto bio = render_output_prompt(get_task(builtin_catalog(), "bio"), test::load_sample("bio").qa_pairs,
                                  Voice::first_person);
  CHECK(bio.text.ends_with("Write a long bio about John using the questions and his answers above."));
}

TEST_CASE("stage-1 prompt over a transcript") {
  const auto& poem = get_task(builtin_catalog(), "poem");
  std::string transcript = "Question: What is the occasion?\nAnswer: A wedding.";
  std::string want =
      "I am a famous poet. I will ask clarifying question to collect information and then I will "
      "write a poem.\n\nQuestion: What is the occasion?\nAnswer: A wedding.\nQuestion:";
  CHECK(render_question_prompt(poem, transcript, Voice::first_person).text == want);

  QuestionPromptOptions opts{"Ask about rhyme."};
  auto p = render_question_prompt(poem, "", Voice::first_person, opts).text;
  CHECK(p.ends_with("write a poem. Ask about rhyme.\nQuestion:"));
}

TEST_CASE("voices") {
  CHECK(parse_voice("second") == Voice::second_person);
  CHECK(parse_voice("first_person") == Voice::first_person);
  CHECK_FALSE(parse_voice("third"));
  const auto& extra = get_task(builtin_catalog(), "cricket team formation");
  CHECK(code_of([&] { render_question_prompt(extra, "", Voice::second_person); }) ==
        Errc::VoiceUnavailable);

  // Only the travel plan directive speaks in the first person and gets reframed.
  const auto& travel = get_task(builtin_catalog(), "travel plan");
  auto first = render_output_prompt(travel, {{"Where?", "Goa"}}, Voice::first_person).text;
  auto second = render_output_prompt(travel, {{"Where?", "Goa"}}, Voice::second_person).text;
  CHECK(first.find("I would recommend") != std::string::npos);
  CHECK(second.starts_with("You are a famous travel planner."));
  CHECK(second.find("I would recommend") == std::string::npos);
}

TEST_CASE("output prompt errors and answer trimming") {
  const auto& bio = get_task(builtin_catalog(), "bio");
  CHECK(code_of([&] { render_output_prompt(bio, {}, Voice::first_person); }) == Errc::EmptyPairs);
  CHECK(code_of([&] { render_output_prompt(bio, {{"Q?", "  \n"}}, Voice::first_person); }) ==
        Errc::EmptyAnswers);
  auto p = render_output_prompt(bio, {{"Name?", "  John \n"}}, Voice::first_person).text;
  CHECK(p.find("Question: Name?\nAnswer: John\nWrite") != std::string::npos);
}

TEST_CASE("build_transcript") {
  CHECK(build_transcript({"A?", "B?"}, {std::string("x"), std::nullopt}) ==
        "Question: A?\nAnswer: x\nQuestion: B?\nAnswer:");
  CHECK(build_transcript({}, {}) == "");
  CHECK(code_of([] { build_transcript({"A?"}, {}); }) == Errc::LengthMismatch);
}

TEST_CASE("trim") {
  CHECK(trim("  a b \n") == "a b");
  CHECK(trim("\t\n") == "");
}
