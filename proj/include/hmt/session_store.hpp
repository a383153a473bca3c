#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hmt/evaluation.hpp"
#include "hmt/pipeline.hpp"

namespace hmt {

inline constexpr int kSessionSchemaVersion = 1;

struct StoredSession {
  int schema_version = kSessionSchemaVersion;
  Session session;
  std::chrono::system_clock::time_point created_at;
  std::chrono::system_clock::time_point updated_at;
};

struct SessionSummary {
  std::string id;
  std::string task_name;
  Stage stage = Stage::generating_questions;
  std::chrono::system_clock::time_point updated_at;
};

struct SessionFilter {
  std::optional<std::string> task_name;
  std::optional<Stage> stage;
};

// Session document (de)serialization; the interchange format for the web UI.
std::string session_to_json(const Session& s);
Session session_from_json(const std::string& text);
std::string stored_session_to_json(const StoredSession& s);
StoredSession stored_session_from_json(const std::string& text);

/// A directory holding one JSON document per session, plus an annotation
/// bundle (annotations.tsv). Writes go to a temp file that is fsynced and
/// renamed over the target.
class SessionStore {
 public:
  explicit SessionStore(std::filesystem::path root, PipelineClock clock = {});

  const std::filesystem::path& root() const { return root_; }

  std::string save(const Session& session);
  StoredSession load(std::string_view id) const;
  bool contains(std::string_view id) const;
  std::vector<SessionSummary> list_sessions(const SessionFilter& filter = {}) const;

  void append_annotations(const std::vector<AnnotationRecord>& records);
  std::vector<AnnotationRecord> load_annotations() const;

  std::filesystem::path path_for(std::string_view id) const;

 private:
  std::filesystem::path root_;
  PipelineClock clock_;
};

/// Writes `contents` to `target` atomically (temp file + fsync + rename).
void atomic_write(const std::filesystem::path& target, std::string_view contents);

}  // namespace hmt
