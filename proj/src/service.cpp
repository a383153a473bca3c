#include "hmt/service.hpp"

#include <cstdlib>

#include <fmt/format.h>
#include <httplib.h>
#include <json.hpp>

#include "hmt/error.hpp"

namespace hmt {

using nlohmann::json;

void ServiceConfig::validate() const {
  if (backend_choice == BackendChoice::scripted && fixture_path.empty())
    throw Error(Errc::UsageError, "the scripted backend requires --fixture");
}

BackendPtr make_backend(const ServiceConfig& config) {
  config.validate();
  if (config.backend_choice == BackendChoice::scripted)
    return scripted_backend(load_fixture_file(config.fixture_path));
  HttpBackendOptions o;
  o.endpoint = config.endpoint;
  o.model_name = config.model_name;
  o.timeout = config.timeout;
  o.credentials = config.credentials;
  if (o.credentials.empty())
    if (const char* env = std::getenv("HMT_API_KEY")) o.credentials = env;
  return std::make_shared<HttpBackend>(std::move(o));
}

// --- Service --------------------------------------------------------------------

Service::Service(const TaskCatalog& catalog, BackendPtr backend, SessionStore& store,
                 PipelineClock clock)
    : catalog_(catalog), backend_(std::move(backend)), store_(store), clock_(std::move(clock)) {}

std::shared_ptr<std::mutex> Service::lock_for(const std::string& id) {
  std::lock_guard guard(locks_mu_);
  auto& m = locks_[id];
  if (!m) m = std::make_shared<std::mutex>();
  return m;
}

Session Service::create_session(const std::string& task_name, Voice voice) {
  const TaskSpec* task = find_task(catalog_, task_name);
  if (!task) throw Error(Errc::UnknownTask, "unknown task '" + task_name + "'");
  Session s = new_session(*task, voice, clock_);
  store_.save(s);
  return s;
}

Session Service::generate_questions(const std::string& id, const QuestionLoopLimits& limits) {
  auto m = lock_for(id);
  std::lock_guard guard(*m);
  Session s = store_.load(id).session;
  if (!backend_) throw Error(Errc::TransportError, "no completion backend configured");
  run_question_generation(*backend_, s, get_task(catalog_, s.task_name), limits, {}, clock_);
  store_.save(s);
  return s;
}

Session Service::get(const std::string& id) const { return store_.load(id).session; }

Session Service::answer(const std::string& id, const std::vector<AnswerFill>& fills) {
  auto m = lock_for(id);
  std::lock_guard guard(*m);
  Session s = store_.load(id).session;
  fill_answers(s, fills, clock_);
  store_.save(s);
  return s;
}

Session Service::output(const std::string& id, std::optional<size_t> batch_size) {
  auto m = lock_for(id);
  std::lock_guard guard(*m);
  Session s = store_.load(id).session;
  const TaskSpec& task = get_task(catalog_, s.task_name);
  if (!backend_) throw Error(Errc::TransportError, "no completion backend configured");
  generate_output(*backend_, s, task,
                  batch_size.value_or(static_cast<size_t>(task.default_batch_size)), {}, clock_);
  store_.save(s);
  return s;
}

void Service::add_annotations(const std::vector<AnnotationRecord>& records) {
  for (const auto& r : records) validate_annotation(r, catalog_);
  std::lock_guard guard(annotations_mu_);
  store_.append_annotations(records);
}

MetricReport Service::report(Regime regime) const {
  return aggregate_report(store_.load_annotations(), catalog_, regime);
}

// --- HTTP -------------------------------------------------------------------------

int http_status_for(Errc code) {
  switch (code) {
    case Errc::NotFound:
    case Errc::UnknownTask:
      return 404;
    case Errc::WrongStage:
      return 409;
    case Errc::ParseError:
      return 400;
    case Errc::ValidationError:
    case Errc::VoiceUnavailable:
    case Errc::EmptyAnswers:
    case Errc::EmptyPairs:
    case Errc::LengthMismatch:
    case Errc::InvalidRequest:
    case Errc::IndexOutOfRange:
    case Errc::BlankAnswer:
    case Errc::WrongArity:
    case Errc::EmptyBank:
    case Errc::IncompleteTriple:
    case Errc::MissingCountAbsent:
    case Errc::UsageError:
      return 422;
    case Errc::TransportError:
    case Errc::AuthError:
    case Errc::RateLimited:
    case Errc::FixtureExhausted:
    case Errc::EmptyFixture:
    case Errc::NoQuestionsProduced:
    case Errc::NonQuestion:
    case Errc::EmptyCompletion:
      return 502;
    case Errc::StorageFull:
      return 507;
    case Errc::VersionMismatch:
    case Errc::SerializationError:
      return 500;
  }
  return 500;
}

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view error, std::string_view detail) {
  send_json(res, status, {{"error", error}, {"detail", detail}});
}

json parse_body(const httplib::Request& req, bool allow_empty) {
  if (req.body.empty() && allow_empty) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::parse_error& e) {
    throw Error(Errc::ParseError, std::string("request body: ") + e.what());
  }
}

template <typename Handler>
httplib::Server::Handler guarded(Handler handler) {
  return [handler](const httplib::Request& req, httplib::Response& res) {
    try {
      handler(req, res);
    } catch (const Error& e) {
      send_error(res, http_status_for(e.code()), e.name(), e.what());
    } catch (const json::exception& e) {
      send_error(res, 422, "ValidationError", e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "InternalError", e.what());
    }
  };
}

json session_body(const Session& s) { return json::parse(session_to_json(s)); }

std::vector<AnswerFill> fills_from(const json& body) {
  std::vector<AnswerFill> fills;
  auto one = [&](const json& j) {
    if (!j.is_object() || !j.contains("index") || !j.contains("text"))
      throw Error(Errc::ValidationError, "each answer needs 'index' and 'text'");
    if (!j["index"].is_number_integer() || j["index"].get<long long>() < 0)
      throw Error(Errc::IndexOutOfRange, "answer index must be a non-negative integer");
    if (!j["text"].is_string()) throw Error(Errc::ValidationError, "answer text must be a string");
    fills.push_back({j["index"].get<size_t>(), j["text"].get<std::string>()});
  };
  if (body.is_array()) {
    for (const auto& j : body) one(j);
  } else if (body.is_object() && body.contains("answers")) {
    for (const auto& j : body["answers"]) one(j);
  } else {
    one(body);
  }
  return fills;
}

Regime regime_from(const httplib::Request& req) {
  Regime r;
  std::string ka = req.has_param("regime") ? req.get_param_value("regime") : "tolerant";
  std::string na = req.has_param("na") ? req.get_param_value("na") : "exclude";
  if (ka == "strict")
    r.ka = KaRegime::strict;
  else if (ka != "tolerant")
    throw Error(Errc::ValidationError, "regime must be tolerant or strict");
  if (na == "as-no" || na == "as_no" || na == "na_as_no")
    r.na = NaRegime::na_as_no;
  else if (na != "exclude" && na != "na_excluded")
    throw Error(Errc::ValidationError, "na must be exclude or as-no");
  return r;
}

}  // namespace

HttpApi::HttpApi(Service& service, std::optional<std::filesystem::path> static_dir)
    : service_(service), server_(std::make_unique<httplib::Server>()) {
  install_routes();
  if (static_dir) server_->set_mount_point("/", static_dir->string());
}

HttpApi::~HttpApi() { stop(); }

void HttpApi::install_routes() {
  auto& srv = *server_;
  const std::string id_re = "([A-Za-z0-9_.-]+)";

  srv.Get("/api/tasks", guarded([this](const httplib::Request&, httplib::Response& res) {
    json out = json::array();
    for (const auto& [name, t] : service_.catalog().tasks) {
      json voices = json::array({"first_person"});
      if (t.has_second_person()) voices.push_back("second_person");
      out.push_back({{"name", name},
                     {"core", t.core},
                     {"question_count", t.question_bank.size()},
                     {"dependent_qa", t.dependent_qa},
                     {"default_batch_size", t.default_batch_size},
                     {"voices", std::move(voices)}});
    }
    send_json(res, 200, out);
  }));

  srv.Get("/api/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
    SessionFilter f;
    if (req.has_param("task")) f.task_name = req.get_param_value("task");
    if (req.has_param("stage")) {
      f.stage = parse_stage(req.get_param_value("stage"));
      if (!f.stage) throw Error(Errc::ValidationError, "unknown stage");
    }
    json out = json::array();
    for (const auto& s : service_.store().list_sessions(f))
      out.push_back({{"id", s.id},
                     {"task_name", s.task_name},
                     {"stage", to_string(s.stage)},
                     {"updated_at", format_timestamp(s.updated_at)}});
    send_json(res, 200, out);
  }));

  srv.Post("/api/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
    json body = parse_body(req, false);
    if (!body.is_object() || !body.contains("task") || !body["task"].is_string())
      throw Error(Errc::ValidationError, "body needs a string 'task'");
    Voice voice = Voice::first_person;
    if (body.contains("voice")) {
      auto v = parse_voice(body["voice"].get<std::string>());
      if (!v) throw Error(Errc::ValidationError, "voice must be first_person or second_person");
      voice = *v;
    }
    Session s = service_.create_session(body["task"].get<std::string>(), voice);
    send_json(res, 201, {{"id", s.id}});
  }));

  srv.Get("/api/sessions/" + id_re, guarded([this](const httplib::Request& req, httplib::Response& res) {
    send_json(res, 200, session_body(service_.get(req.matches[1])));
  }));

  srv.Post("/api/sessions/" + id_re + "/questions",
           guarded([this](const httplib::Request& req, httplib::Response& res) {
             json body = parse_body(req, true);
             QuestionLoopLimits limits;
             if (body.contains("max_questions")) limits.max_questions = body["max_questions"].get<int>();
             Session s = service_.generate_questions(req.matches[1], limits);
             send_json(res, 200, {{"id", s.id}, {"questions", s.questions}});
           }));

  srv.Post("/api/sessions/" + id_re + "/answers",
           guarded([this](const httplib::Request& req, httplib::Response& res) {
             Session s = service_.answer(req.matches[1], fills_from(parse_body(req, false)));
             send_json(res, 200, session_body(s));
           }));

  srv.Post("/api/sessions/" + id_re + "/output",
           guarded([this](const httplib::Request& req, httplib::Response& res) {
             json body = parse_body(req, true);
             std::optional<size_t> batch;
             if (body.contains("batch_size")) {
               if (!body["batch_size"].is_number_integer() || body["batch_size"].get<long long>() < 1)
                 throw Error(Errc::ValidationError, "batch_size must be a positive integer");
               batch = body["batch_size"].get<size_t>();
             }
             Session s = service_.output(req.matches[1], batch);
             send_json(res, 200, {{"id", s.id}, {"final_output", *s.final_output}, {"outputs", s.outputs}});
           }));

  srv.Post("/api/annotations", guarded([this](const httplib::Request& req, httplib::Response& res) {
    json body = parse_body(req, false);
    const json& list = body.is_object() && body.contains("records") ? body["records"] : body;
    if (!list.is_array()) throw Error(Errc::ValidationError, "expected an array of records");
    std::vector<AnnotationRecord> records;
    for (const auto& j : list) {
      try {
        records.push_back(annotation_from_json(j.dump()));
      } catch (const Error& e) {
        throw Error(e.code() == Errc::ParseError ? Errc::ValidationError : e.code(), e.what());
      }
    }
    service_.add_annotations(records);
    send_json(res, 201, {{"appended", records.size()}});
  }));

  srv.Get("/api/report", guarded([this](const httplib::Request& req, httplib::Response& res) {
    MetricReport report = service_.report(regime_from(req));
    res.status = 200;
    res.set_content(report_to_json(report), "application/json");
  }));
}

int HttpApi::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = server_->bind_to_any_port(host);
  } else if (!server_->bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw Error(Errc::TransportError, fmt::format("cannot bind {}:{}", host, port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return bound;
}

bool HttpApi::listen(const std::string& host, int port) { return server_->listen(host, port); }

bool HttpApi::running() const { return server_ && server_->is_running(); }

void HttpApi::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace hmt
