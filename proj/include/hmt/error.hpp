#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hmt {

enum class Errc {
  ParseError,
  ValidationError,
  UnknownTask,
  VoiceUnavailable,
  EmptyAnswers,
  EmptyPairs,
  LengthMismatch,
  InvalidRequest,
  TransportError,
  AuthError,
  RateLimited,
  FixtureExhausted,
  EmptyFixture,
  NoQuestionsProduced,
  NonQuestion,
  IndexOutOfRange,
  BlankAnswer,
  WrongStage,
  EmptyCompletion,
  WrongArity,
  EmptyBank,
  IncompleteTriple,
  MissingCountAbsent,
  NotFound,
  VersionMismatch,
  StorageFull,
  SerializationError,
  UsageError,
};

std::string_view to_string(Errc code) noexcept;

// Every failure in the library surfaces as hmt::Error; code() names the
// failure kind so the CLI and HTTP layers can map it to exit codes/statuses.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& detail)
      : std::runtime_error(detail), code_(code) {}

  Errc code() const noexcept { return code_; }
  std::string_view name() const noexcept { return to_string(code_); }

 private:
  Errc code_;
};

}  // namespace hmt
