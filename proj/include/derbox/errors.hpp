#pragma once

#include <stdexcept>
#include <string>

namespace derbox {

// Stable error codes; the CLI maps these onto process exit codes.
enum class Err {
  Parse,                  // malformed input text / bad usage
  FieldMismatch,          // mixed scalars from different ground fields
  DivisionByZero,
  EndpointMismatch,       // composing non-composable paths/words
  NotFiniteDimensional,   // basis still grows at degree_cap
  EmptyWindow,
  Validation,             // generic semantic failure (bad complex, bad box, ...)
  NotMinimal,
  RelationsViolated,
  OutsideLocus,           // family specialized at a root of its denominator
  SearchSpaceTooLarge,    // enumeration ceiling would be exceeded
  RootFieldTooSmall,      // a required root set does not split over the field
  UnsupportedRelationShape,
  SlicingMismatch,        // amalgamation parts do not fit together
  PreconditionViolated,
  ResourceCeiling,        // step/iteration ceiling reached
  Internal,               // invariant broken inside the engine (a bug)
};

struct Error : std::runtime_error {
  Err code;
  Error(Err c, const std::string& msg) : std::runtime_error(msg), code(c) {}
};

[[noreturn]] inline void fail(Err c, const std::string& msg) { throw Error(c, msg); }

inline const char* err_name(Err c) {
  switch (c) {
    case Err::Parse: return "Parse";
    case Err::FieldMismatch: return "FieldMismatch";
    case Err::DivisionByZero: return "DivisionByZero";
    case Err::EndpointMismatch: return "EndpointMismatch";
    case Err::NotFiniteDimensional: return "NotFiniteDimensional";
    case Err::EmptyWindow: return "EmptyWindow";
    case Err::Validation: return "Validation";
    case Err::NotMinimal: return "NotMinimal";
    case Err::RelationsViolated: return "RelationsViolated";
    case Err::OutsideLocus: return "OutsideLocus";
    case Err::SearchSpaceTooLarge: return "SearchSpaceTooLarge";
    case Err::RootFieldTooSmall: return "RootFieldTooSmall";
    case Err::UnsupportedRelationShape: return "UnsupportedRelationShape";
    case Err::SlicingMismatch: return "SlicingMismatch";
    case Err::PreconditionViolated: return "PreconditionViolated";
    case Err::ResourceCeiling: return "ResourceCeiling";
    case Err::Internal: return "Internal";
  }
  return "Unknown";
}

}  // namespace derbox
