#include "hmt/error.hpp"

namespace hmt {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
#define HMT_ERRC_NAME(x) \
  case Errc::x:          \
    return #x;
    HMT_ERRC_NAME(ParseError)
    HMT_ERRC_NAME(ValidationError)
    HMT_ERRC_NAME(UnknownTask)
    HMT_ERRC_NAME(VoiceUnavailable)
    HMT_ERRC_NAME(EmptyAnswers)
    HMT_ERRC_NAME(EmptyPairs)
    HMT_ERRC_NAME(LengthMismatch)
    HMT_ERRC_NAME(InvalidRequest)
    HMT_ERRC_NAME(TransportError)
    HMT_ERRC_NAME(AuthError)
    HMT_ERRC_NAME(RateLimited)
    HMT_ERRC_NAME(FixtureExhausted)
    HMT_ERRC_NAME(EmptyFixture)
    HMT_ERRC_NAME(NoQuestionsProduced)
    HMT_ERRC_NAME(NonQuestion)
    HMT_ERRC_NAME(IndexOutOfRange)
    HMT_ERRC_NAME(BlankAnswer)
    HMT_ERRC_NAME(WrongStage)
    HMT_ERRC_NAME(EmptyCompletion)
    HMT_ERRC_NAME(WrongArity)
    HMT_ERRC_NAME(EmptyBank)
    HMT_ERRC_NAME(IncompleteTriple)
    HMT_ERRC_NAME(MissingCountAbsent)
    HMT_ERRC_NAME(NotFound)
    HMT_ERRC_NAME(VersionMismatch)
    HMT_ERRC_NAME(StorageFull)
    HMT_ERRC_NAME(SerializationError)
    HMT_ERRC_NAME(UsageError)
#undef HMT_ERRC_NAME
  }
  return "Error";
}

}  // namespace hmt
