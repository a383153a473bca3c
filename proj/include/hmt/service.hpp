#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "hmt/error.hpp"
#include "hmt/evaluation.hpp"
#include "hmt/llm_backend.hpp"
#include "hmt/pipeline.hpp"
#include "hmt/session_store.hpp"
#include "hmt/task_registry.hpp"

namespace httplib {
class Server;
}

namespace hmt {

enum class BackendChoice { http, scripted };

struct ServiceConfig {
  std::string listen_address = "127.0.0.1:8080";
  BackendChoice backend_choice = BackendChoice::scripted;
  std::string fixture_path;  // required for scripted
  std::string endpoint = "https://api.openai.com/v1";
  std::string model_name = "text-davinci-002";
  std::string credentials;
  std::chrono::milliseconds timeout{60'000};
  std::filesystem::path store_path = "hmt-store";
  Voice default_voice = Voice::first_person;
  std::optional<std::filesystem::path> static_dir;

  void validate() const;
};

BackendPtr make_backend(const ServiceConfig& config);

/// Session operations shared by the CLI and the HTTP API. Mutations of one
/// session id are serialized; different ids proceed concurrently.
class Service {
 public:
  Service(const TaskCatalog& catalog, BackendPtr backend, SessionStore& store,
          PipelineClock clock = {});

  const TaskCatalog& catalog() const { return catalog_; }
  SessionStore& store() { return store_; }

  Session create_session(const std::string& task_name, Voice voice);
  Session generate_questions(const std::string& id, const QuestionLoopLimits& limits = {});
  Session get(const std::string& id) const;
  Session answer(const std::string& id, const std::vector<AnswerFill>& fills);
  Session output(const std::string& id, std::optional<size_t> batch_size = std::nullopt);

  void add_annotations(const std::vector<AnnotationRecord>& records);
  MetricReport report(Regime regime) const;

 private:
  std::shared_ptr<std::mutex> lock_for(const std::string& id);

  const TaskCatalog& catalog_;
  BackendPtr backend_;
  SessionStore& store_;
  PipelineClock clock_;
  std::mutex locks_mu_;
  std::map<std::string, std::shared_ptr<std::mutex>> locks_;
  std::mutex annotations_mu_;
};

/// HTTP status for a library error code.
int http_status_for(Errc code);

/// JSON-over-HTTP façade over Service.
class HttpApi {
 public:
  explicit HttpApi(Service& service, std::optional<std::filesystem::path> static_dir = {});
  ~HttpApi();

  HttpApi(const HttpApi&) = delete;
  HttpApi& operator=(const HttpApi&) = delete;

  /// Binds and serves on a background thread; port 0 picks a free port.
  int start(const std::string& host, int port);
  /// Blocks serving on the calling thread.
  bool listen(const std::string& host, int port);
  void stop();
  bool running() const;

 private:
  void install_routes();

  Service& service_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace hmt
