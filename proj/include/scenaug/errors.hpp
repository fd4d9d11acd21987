#pragma once

#include <stdexcept>
#include <string>

namespace scenaug {

/// Root of every error raised by the toolkit. Callers that only need to know
/// "the input was bad" catch this; tests and the CLI dispatch on the subtype.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define SCENAUG_DEFINE_ERROR(Name, Base)  \
  class Name : public Base {              \
   public:                                \
    using Base::Base;                     \
  }

// scenario model
SCENAUG_DEFINE_ERROR(SchemaError, Error);
SCENAUG_DEFINE_ERROR(IntegrityError, Error);
SCENAUG_DEFINE_ERROR(ValidationError, Error);

// geometry
SCENAUG_DEFINE_ERROR(DomainError, Error);
SCENAUG_DEFINE_ERROR(DegenerateError, Error);
SCENAUG_DEFINE_ERROR(RangeError, Error);
SCENAUG_DEFINE_ERROR(UnknownId, Error);

// prompt codec
SCENAUG_DEFINE_ERROR(ResponseParseError, Error);
SCENAUG_DEFINE_ERROR(MissingSection, ResponseParseError);
SCENAUG_DEFINE_ERROR(VectorParseError, ResponseParseError);
SCENAUG_DEFINE_ERROR(DictParseError, ResponseParseError);
SCENAUG_DEFINE_ERROR(ToolArgError, ResponseParseError);
SCENAUG_DEFINE_ERROR(RatingParseError, ResponseParseError);
SCENAUG_DEFINE_ERROR(VerdictParseError, ResponseParseError);
SCENAUG_DEFINE_ERROR(StageInputError, Error);

// llm client
SCENAUG_DEFINE_ERROR(BackendError, Error);
SCENAUG_DEFINE_ERROR(ScriptExhausted, BackendError);
SCENAUG_DEFINE_ERROR(PredicateMismatch, BackendError);

// orchestrator
SCENAUG_DEFINE_ERROR(ParseFailure, Error);
SCENAUG_DEFINE_ERROR(ToolBudgetExceeded, Error);

// render
SCENAUG_DEFINE_ERROR(RasterError, Error);

// eval
SCENAUG_DEFINE_ERROR(ShapeError, Error);

// simloop
SCENAUG_DEFINE_ERROR(RouteError, Error);

// arena
SCENAUG_DEFINE_ERROR(UnknownMatchup, Error);
SCENAUG_DEFINE_ERROR(DuplicateVote, Error);
SCENAUG_DEFINE_ERROR(NoContent, Error);

#undef SCENAUG_DEFINE_ERROR

}  // namespace scenaug
