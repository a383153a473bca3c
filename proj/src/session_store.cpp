#include "hmt/session_store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "hmt/error.hpp"

namespace hmt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kAnnotationFile = "annotations.tsv";

[[noreturn]] void io_failure(const std::string& what, int err) {
  if (err == ENOSPC || err == EDQUOT)
    throw Error(Errc::StorageFull, what + ": " + std::strerror(err));
  throw Error(Errc::SerializationError, what + ": " + std::strerror(err));
}

bool valid_id(std::string_view id) {
  if (id.empty() || id.size() > 128) return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
  }) && id.front() != '.';
}

json config_to_json(const GenerationConfig& c) {
  return {{"temperature", c.temperature},
          {"max_tokens", c.max_tokens},
          {"top_p", c.top_p},
          {"frequency_penalty", c.frequency_penalty},
          {"presence_penalty", c.presence_penalty},
          {"stop_sequences", c.stop_sequences}};
}

GenerationConfig config_from_json(const json& j) {
  GenerationConfig c;
  c.temperature = j.at("temperature").get<double>();
  c.max_tokens = j.at("max_tokens").get<int>();
  c.top_p = j.at("top_p").get<double>();
  c.frequency_penalty = j.at("frequency_penalty").get<double>();
  c.presence_penalty = j.at("presence_penalty").get<double>();
  c.stop_sequences = j.at("stop_sequences").get<std::vector<std::string>>();
  return c;
}

json session_json(const Session& s) {
  json answers = json::array();
  for (const auto& a : s.answers) answers.push_back(a ? json(*a) : json(nullptr));
  json batches = json::array();
  for (const auto& b : s.batches) batches.push_back({b.begin, b.end});
  json events = json::array();
  for (const auto& e : s.event_log) events.push_back({{"timestamp", e.timestamp}, {"event", e.event}});
  return {{"id", s.id},
          {"task_name", s.task_name},
          {"voice", to_string(s.voice)},
          {"stage", to_string(s.stage)},
          {"questions", s.questions},
          {"answers", std::move(answers)},
          {"batches", std::move(batches)},
          {"outputs", s.outputs},
          {"final_output", s.final_output ? json(*s.final_output) : json(nullptr)},
          {"config_used", config_to_json(s.config_used)},
          {"event_log", std::move(events)}};
}

Session session_from(const json& j) {
  Session s;
  s.id = j.at("id").get<std::string>();
  s.task_name = j.at("task_name").get<std::string>();
  auto voice = parse_voice(j.at("voice").get<std::string>());
  if (!voice) throw Error(Errc::SerializationError, "unknown voice");
  s.voice = *voice;
  auto stage = parse_stage(j.at("stage").get<std::string>());
  if (!stage) throw Error(Errc::SerializationError, "unknown stage");
  s.stage = *stage;
  s.questions = j.at("questions").get<std::vector<std::string>>();
  for (const auto& a : j.at("answers"))
    s.answers.push_back(a.is_null() ? std::nullopt : std::optional<std::string>(a.get<std::string>()));
  for (const auto& b : j.at("batches"))
    s.batches.push_back({b.at(0).get<size_t>(), b.at(1).get<size_t>()});
  s.outputs = j.at("outputs").get<std::vector<std::string>>();
  if (!j.at("final_output").is_null()) s.final_output = j["final_output"].get<std::string>();
  s.config_used = config_from_json(j.at("config_used"));
  for (const auto& e : j.at("event_log"))
    s.event_log.push_back({e.at("timestamp").get<std::string>(), e.at("event").get<std::string>()});
  return s;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(Errc::NotFound, "cannot read " + p.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

std::string session_to_json(const Session& s) { return session_json(s).dump(2); }

Session session_from_json(const std::string& text) {
  try {
    return session_from(json::parse(text));
  } catch (const json::exception& e) {
    throw Error(Errc::SerializationError, std::string("session document: ") + e.what());
  }
}

std::string stored_session_to_json(const StoredSession& s) {
  json doc = {{"schema_version", s.schema_version},
              {"created_at", format_timestamp(s.created_at)},
              {"updated_at", format_timestamp(s.updated_at)},
              {"session", session_json(s.session)}};
  return doc.dump(2);
}

StoredSession stored_session_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(Errc::SerializationError, std::string("session document: ") + e.what());
  }
  StoredSession out;
  try {
    out.schema_version = doc.at("schema_version").get<int>();
  } catch (const json::exception& e) {
    throw Error(Errc::SerializationError, std::string("session document: ") + e.what());
  }
  if (out.schema_version > kSessionSchemaVersion)
    throw Error(Errc::VersionMismatch,
                fmt::format("session schema {} is newer than supported {}", out.schema_version,
                            kSessionSchemaVersion));
  if (out.schema_version < 1)
    throw Error(Errc::VersionMismatch, fmt::format("unknown session schema {}", out.schema_version));
  try {
    auto created = parse_timestamp(doc.at("created_at").get<std::string>());
    auto updated = parse_timestamp(doc.at("updated_at").get<std::string>());
    if (!created || !updated) throw Error(Errc::SerializationError, "bad timestamp");
    out.created_at = *created;
    out.updated_at = *updated;
    out.session = session_from(doc.at("session"));
  } catch (const json::exception& e) {
    throw Error(Errc::SerializationError, std::string("session document: ") + e.what());
  }
  return out;
}

void atomic_write(const fs::path& target, std::string_view contents) {
  static std::atomic<unsigned> serial{0};
  fs::path tmp = target;
  tmp += fmt::format(".tmp.{}.{}", ::getpid(), serial.fetch_add(1));
  int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) io_failure("open " + tmp.string(), errno);
  const char* p = contents.data();
  size_t left = contents.size();
  while (left > 0) {
    ssize_t n = ::write(fd, p, left);
    if (n < 0) {
      if (errno == EINTR) continue;
      int err = errno;
      ::close(fd);
      ::unlink(tmp.c_str());
      io_failure("write " + tmp.string(), err);
    }
    p += n;
    left -= static_cast<size_t>(n);
  }
  if (::fsync(fd) != 0) {
    int err = errno;
    ::close(fd);
    ::unlink(tmp.c_str());
    io_failure("fsync " + tmp.string(), err);
  }
  ::close(fd);
  if (::rename(tmp.c_str(), target.c_str()) != 0) {
    int err = errno;
    ::unlink(tmp.c_str());
    io_failure("rename " + target.string(), err);
  }
  int dir = ::open(target.parent_path().empty() ? "." : target.parent_path().c_str(),
                   O_RDONLY | O_DIRECTORY | O_CLOEXEC);
  if (dir >= 0) {
    ::fsync(dir);
    ::close(dir);
  }
}

SessionStore::SessionStore(fs::path root, PipelineClock clock)
    : root_(std::move(root)), clock_(std::move(clock)) {
  std::error_code ec;
  fs::create_directories(root_, ec);
  if (ec) throw Error(Errc::SerializationError, "cannot create store " + root_.string() + ": " + ec.message());
}

fs::path SessionStore::path_for(std::string_view id) const {
  if (!valid_id(id)) throw Error(Errc::NotFound, "invalid session id '" + std::string(id) + "'");
  return root_ / (std::string(id) + ".json");
}

bool SessionStore::contains(std::string_view id) const {
  return valid_id(id) && fs::exists(path_for(id));
}

std::string SessionStore::save(const Session& session) {
  try {
    session.check_invariants();
  } catch (const Error& e) {
    throw Error(Errc::SerializationError, e.what());
  }
  if (!valid_id(session.id))
    throw Error(Errc::SerializationError, "session id '" + session.id + "' is not storable");

  StoredSession record;
  record.session = session;
  const auto now = clock_.now();
  record.created_at = now;
  record.updated_at = now;
  const fs::path target = path_for(session.id);
  if (fs::exists(target)) {
    try {
      auto prior = stored_session_from_json(read_file(target));
      record.created_at = prior.created_at;
      // timestamps are stored at millisecond resolution; keep updates strictly ordered
      const auto floor = prior.updated_at + std::chrono::milliseconds(1);
      record.updated_at = std::max(now, floor);
    } catch (const Error&) {
      // unreadable prior version: overwrite it
    }
  }
  atomic_write(target, stored_session_to_json(record));
  return session.id;
}

StoredSession SessionStore::load(std::string_view id) const {
  const fs::path p = path_for(id);
  if (!fs::exists(p)) throw Error(Errc::NotFound, "no session '" + std::string(id) + "'");
  return stored_session_from_json(read_file(p));
}

std::vector<SessionSummary> SessionStore::list_sessions(const SessionFilter& filter) const {
  std::vector<SessionSummary> out;
  for (const auto& entry : fs::directory_iterator(root_)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".json") continue;
    StoredSession s;
    try {
      s = stored_session_from_json(read_file(entry.path()));
    } catch (const Error&) {
      continue;
    }
    if (filter.task_name && s.session.task_name != *filter.task_name) continue;
    if (filter.stage && s.session.stage != *filter.stage) continue;
    out.push_back({s.session.id, s.session.task_name, s.session.stage, s.updated_at});
  }
  std::sort(out.begin(), out.end(), [](const SessionSummary& a, const SessionSummary& b) {
    if (a.updated_at != b.updated_at) return a.updated_at > b.updated_at;
    return a.id < b.id;
  });
  return out;
}

void SessionStore::append_annotations(const std::vector<AnnotationRecord>& records) {
  std::string existing;
  const fs::path p = root_ / kAnnotationFile;
  if (fs::exists(p)) existing = read_file(p);
  if (!existing.empty() && existing.back() != '\n') existing += '\n';
  for (const auto& r : records) existing += format_annotation_tsv(r) + "\n";
  atomic_write(p, existing);
}

std::vector<AnnotationRecord> SessionStore::load_annotations() const {
  const fs::path p = root_ / kAnnotationFile;
  if (!fs::exists(p)) return {};
  return parse_annotations(read_file(p));
}

}  // namespace hmt
