// Command-line front end: task catalog, the three-stage session flow,
// annotation scoring and the HTTP service.

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "hmt/error.hpp"
#include "hmt/evaluation.hpp"
#include "hmt/pipeline.hpp"
#include "hmt/service.hpp"
#include "hmt/session_store.hpp"
#include "hmt/task_registry.hpp"

namespace {

using namespace hmt;
using nlohmann::json;

struct Options {
  std::string backend;  // empty: config file or default
  std::string fixture;
  std::string store;
  std::string voice;
  std::string endpoint;
  std::string model;
  std::string config_file;
  std::string catalog_file;
  std::string listen;
  std::string static_dir;
  int timeout_ms = 0;
  int batch_size = 0;
  int max_questions = 0;
};

ServiceConfig build_config(const Options& o) {
  ServiceConfig c;
  if (!o.config_file.empty()) {
    std::ifstream in(o.config_file);
    if (!in) throw Error(Errc::UsageError, "cannot read config file " + o.config_file);
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw Error(Errc::UsageError, fmt::format("config file {}: {}", o.config_file, e.what()));
    }
    if (j.contains("backend")) c.backend_choice = j["backend"] == "http" ? BackendChoice::http : BackendChoice::scripted;
    if (j.contains("fixture")) c.fixture_path = j["fixture"];
    if (j.contains("store")) c.store_path = j["store"].get<std::string>();
    if (j.contains("endpoint")) c.endpoint = j["endpoint"];
    if (j.contains("model")) c.model_name = j["model"];
    if (j.contains("credentials")) c.credentials = j["credentials"];
    if (j.contains("timeout_ms")) c.timeout = std::chrono::milliseconds(j["timeout_ms"].get<int>());
    if (j.contains("listen")) c.listen_address = j["listen"];
    if (j.contains("static_dir")) c.static_dir = j["static_dir"].get<std::string>();
    if (j.contains("voice")) {
      auto v = parse_voice(j["voice"].get<std::string>());
      if (!v) throw Error(Errc::UsageError, "config file: bad voice");
      c.default_voice = *v;
    }
  }
  if (!o.backend.empty()) c.backend_choice = o.backend == "http" ? BackendChoice::http : BackendChoice::scripted;
  if (!o.fixture.empty()) c.fixture_path = o.fixture;
  if (!o.store.empty()) c.store_path = o.store;
  if (!o.endpoint.empty()) c.endpoint = o.endpoint;
  if (!o.model.empty()) c.model_name = o.model;
  if (o.timeout_ms > 0) c.timeout = std::chrono::milliseconds(o.timeout_ms);
  if (!o.listen.empty()) c.listen_address = o.listen;
  if (!o.static_dir.empty()) c.static_dir = o.static_dir;
  if (!o.voice.empty()) c.default_voice = *parse_voice(o.voice);
  return c;
}

// Everything a subcommand needs. The backend is built lazily so that commands
// which never call the model do not require a fixture or credentials.
struct App {
  Options opts;
  ServiceConfig config;
  TaskCatalog catalog;
  std::unique_ptr<SessionStore> store;
  std::unique_ptr<Service> service;

  void init() {
    config = build_config(opts);
    catalog = opts.catalog_file.empty() ? builtin_catalog() : load_tasks_file(opts.catalog_file);
    store = std::make_unique<SessionStore>(config.store_path);
  }

  Service& connect(bool needs_backend) {
    if (!service)
      service = std::make_unique<Service>(catalog, needs_backend ? make_backend(config) : nullptr, *store);
    return *service;
  }

  QuestionLoopLimits limits() const {
    QuestionLoopLimits l;
    if (opts.max_questions > 0) l.max_questions = opts.max_questions;
    return l;
  }

  std::optional<size_t> batch_size() const {
    if (opts.batch_size > 0) return static_cast<size_t>(opts.batch_size);
    return std::nullopt;
  }
};

const TaskSpec& resolve_task(const TaskCatalog& catalog, const std::string& name) {
  const TaskSpec* t = find_task(catalog, name);
  if (!t) throw Error(Errc::UsageError, fmt::format("unknown task '{}' (see `hmt tasks list`)", name));
  return *t;
}

void print_questions(const Session& s) {
  for (size_t i = 0; i < s.questions.size(); ++i) fmt::print("{:>3}. {}\n", i + 1, s.questions[i]);
}

// Prompts for each unanswered question on stdin. Returns false on end of input.
bool collect_answers(Service& service, Session& s) {
  for (size_t i = 0; i < s.questions.size(); ++i) {
    if (s.answers[i]) continue;
    for (;;) {
      fmt::print("Question {}/{}: {}\n> ", i + 1, s.questions.size(), s.questions[i]);
      std::fflush(stdout);
      std::string line;
      if (!std::getline(std::cin, line)) {
        fmt::print("\n");
        return false;
      }
      if (trim(line).empty()) {
        fmt::print("(an answer is required)\n");
        continue;
      }
      s = service.answer(s.id, {{i, line}});
      break;
    }
  }
  return true;
}

void finish_output(App& app, const std::string& id) {
  Session s = app.service->output(id, app.batch_size());
  fmt::print("{}\n", *s.final_output);
}

int cmd_tasks_list(App& app) {
  for (const auto& [name, t] : app.catalog.tasks)
    fmt::print("{}{}\n", name, t.core ? fmt::format("  (core, {} questions)", t.question_bank.size()) : "");
  return 0;
}

int cmd_tasks_show(App& app, const std::string& name) {
  const TaskSpec& t = resolve_task(app.catalog, name);
  fmt::print("name: {}\ncore: {}\ndependent_qa: {}\ndefault_batch_size: {}\n", t.name, t.core,
             t.dependent_qa, t.default_batch_size);
  fmt::print("voices: first_person{}\n", t.has_second_person() ? ", second_person" : "");
  fmt::print("stage1 prompt:\n{}\n", t.stage1_prompt_first_person);
  fmt::print("stage3 directive: {}\n", t.stage3_directive);
  if (!t.question_bank.empty()) {
    fmt::print("question bank:\n");
    for (const auto& q : t.question_bank) fmt::print("  - {}\n", q);
  }
  return 0;
}

int cmd_run(App& app, const std::string& task_name) {
  const TaskSpec& task = resolve_task(app.catalog, task_name);
  Session s = app.service->create_session(task.name, app.config.default_voice);
  fmt::print("session {}\n", s.id);
  s = app.service->generate_questions(s.id, app.limits());
  if (!collect_answers(*app.service, s))
    throw Error(Errc::UsageError, fmt::format("input ended before all questions were answered; resume with `hmt answer {}`", s.id));
  fmt::print("\n");
  finish_output(app, s.id);
  return 0;
}

int cmd_questions(App& app, const std::string& task_name) {
  const TaskSpec& task = resolve_task(app.catalog, task_name);
  Session s = app.service->create_session(task.name, app.config.default_voice);
  s = app.service->generate_questions(s.id, app.limits());
  fmt::print("session {}\n", s.id);
  print_questions(s);
  return 0;
}

int cmd_answer(App& app, const std::string& id, std::optional<int> index, const std::string& text) {
  Session s = app.service->get(id);
  if (index) {
    if (*index < 1) throw Error(Errc::UsageError, "--index is 1-based");
    s = app.service->answer(id, {{static_cast<size_t>(*index - 1), text}});
  } else if (!collect_answers(*app.service, s)) {
    throw Error(Errc::UsageError, "input ended before all questions were answered");
  }
  size_t left = 0;
  for (const auto& a : s.answers) left += a ? 0 : 1;
  fmt::print("session {}: {} question(s) unanswered, stage {}\n", s.id, left, to_string(s.stage));
  return 0;
}

int cmd_output(App& app, const std::string& id) {
  finish_output(app, id);
  return 0;
}

int cmd_show(App& app, const std::string& id) {
  fmt::print("{}\n", session_to_json(app.service->get(id)));
  return 0;
}

int cmd_sessions(App& app) {
  for (const auto& s : app.store->list_sessions())
    fmt::print("{}  {}  {}  {}\n", s.id, s.task_name, to_string(s.stage), format_timestamp(s.updated_at));
  return 0;
}

int cmd_eval(App& app, const std::string& path, const std::string& regime, const std::string& na,
             const std::string& out) {
  Regime r;
  r.ka = regime == "strict" ? KaRegime::strict : KaRegime::tolerant;
  r.na = na == "as-no" ? NaRegime::na_as_no : NaRegime::na_excluded;
  MetricReport report = aggregate_report(load_annotations_file(path), app.catalog, r);
  fmt::print("{}", render_report_table(report));
  if (!out.empty()) atomic_write(out, report_to_json(report) + "\n");
  return 0;
}

volatile std::sig_atomic_t g_stop = 0;

int cmd_serve(App& app) {
  const auto& addr = app.config.listen_address;
  auto colon = addr.rfind(':');
  if (colon == std::string::npos) throw Error(Errc::UsageError, "--listen expects host:port");
  std::string host = addr.substr(0, colon);
  int port = 0;
  try {
    port = std::stoi(addr.substr(colon + 1));
  } catch (const std::exception&) {
    throw Error(Errc::UsageError, "--listen expects host:port");
  }
  HttpApi api(*app.service, app.config.static_dir);
  std::signal(SIGINT, [](int) { g_stop = 1; });
  std::signal(SIGTERM, [](int) { g_stop = 1; });
  int bound = api.start(host, port);
  fmt::print("listening on http://{}:{}\n", host, bound);
  std::fflush(stdout);
  while (!g_stop && api.running()) std::this_thread::sleep_for(std::chrono::milliseconds(200));
  api.stop();
  return 0;
}

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case Errc::UsageError:
    case Errc::UnknownTask:
      return 2;
    default:
      return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  App app;
  Options& o = app.opts;
  CLI::App cli{"Help-Me-Think: question-guided prompting for long-form tasks"};
  cli.require_subcommand(1);

  auto add_backend_opts = [&](CLI::App* sc) {
    sc->add_option("--backend", o.backend, "completion source")->check(CLI::IsMember({"scripted", "http"}));
    sc->add_option("--fixture", o.fixture, "scripted reply fixture (JSON)");
    sc->add_option("--endpoint", o.endpoint, "OpenAI-compatible base URL");
    sc->add_option("--model", o.model, "model name");
    sc->add_option("--timeout", o.timeout_ms, "request timeout in milliseconds")->check(CLI::PositiveNumber);
  };
  cli.add_option("--store", o.store, "session directory (default hmt-store)");
  cli.add_option("--config", o.config_file, "JSON config file")->check(CLI::ExistingFile);
  cli.add_option("--catalog", o.catalog_file, "task catalog to use instead of the built-in one")
      ->check(CLI::ExistingFile);
  cli.add_option("--voice", o.voice, "first_person or second_person")
      ->check(CLI::IsMember({"first", "second", "first_person", "second_person"}));

  auto* tasks = cli.add_subcommand("tasks", "inspect the task catalog");
  tasks->require_subcommand(1);
  auto* tasks_list = tasks->add_subcommand("list", "list task names");
  std::string show_name;
  auto* tasks_show = tasks->add_subcommand("show", "show one task");
  tasks_show->add_option("NAME", show_name)->required();

  std::string task_name, session_id;
  auto* run = cli.add_subcommand("run", "interactive session: questions, answers, output");
  run->add_option("TASK", task_name)->required();
  add_backend_opts(run);
  run->add_option("--batch-size", o.batch_size)->check(CLI::PositiveNumber);
  run->add_option("--max-questions", o.max_questions)->check(CLI::PositiveNumber);

  auto* questions = cli.add_subcommand("questions", "stage 1 only; saves the session");
  questions->add_option("TASK", task_name)->required();
  add_backend_opts(questions);
  questions->add_option("--max-questions", o.max_questions)->check(CLI::PositiveNumber);

  std::optional<int> answer_index;
  std::string answer_text;
  auto* answer = cli.add_subcommand("answer", "answer questions of a saved session");
  answer->add_option("SESSION_ID", session_id)->required();
  auto* idx_opt = answer->add_option("--index", answer_index, "1-based question number");
  answer->add_option("--text", answer_text)->needs(idx_opt);
  idx_opt->needs("--text");

  auto* output = cli.add_subcommand("output", "stage 3 for a fully answered session");
  output->add_option("SESSION_ID", session_id)->required();
  add_backend_opts(output);
  output->add_option("--batch-size", o.batch_size)->check(CLI::PositiveNumber);

  auto* show = cli.add_subcommand("show", "print a saved session as JSON");
  show->add_option("SESSION_ID", session_id)->required();
  auto* sessions = cli.add_subcommand("sessions", "list saved sessions");

  std::string ann_path, regime = "tolerant", na = "exclude", out_path;
  auto* eval = cli.add_subcommand("eval", "score an annotation file");
  eval->add_option("ANNOTATIONS", ann_path)->required();
  eval->add_option("--regime", regime)->check(CLI::IsMember({"tolerant", "strict"}));
  eval->add_option("--na", na)->check(CLI::IsMember({"exclude", "as-no"}));
  eval->add_option("--out", out_path, "also write the report as JSON");

  auto* serve = cli.add_subcommand("serve", "run the HTTP API");
  add_backend_opts(serve);
  serve->add_option("--listen", o.listen, "host:port (default 127.0.0.1:8080)");
  serve->add_option("--static-dir", o.static_dir, "directory served at /");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return cli.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return cli.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "hmt: usage error: " << e.what() << "\n";
    return 2;
  }

  try {
    app.init();
    bool needs_backend = run->parsed() || questions->parsed() || output->parsed() || serve->parsed();
    // Task names are checked before the backend is built so a typo is reported as such.
    if (run->parsed() || questions->parsed()) resolve_task(app.catalog, task_name);
    app.connect(needs_backend);
    if (tasks_list->parsed()) return cmd_tasks_list(app);
    if (tasks_show->parsed()) return cmd_tasks_show(app, show_name);
    if (run->parsed()) return cmd_run(app, task_name);
    if (questions->parsed()) return cmd_questions(app, task_name);
    if (answer->parsed()) return cmd_answer(app, session_id, answer_index, answer_text);
    if (output->parsed()) return cmd_output(app, session_id);
    if (show->parsed()) return cmd_show(app, session_id);
    if (sessions->parsed()) return cmd_sessions(app);
    if (eval->parsed()) return cmd_eval(app, ann_path, regime, na, out_path);
    if (serve->parsed()) return cmd_serve(app);
  } catch (const Error& e) {
    std::cerr << "hmt: " << e.name() << ": " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "hmt: error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
