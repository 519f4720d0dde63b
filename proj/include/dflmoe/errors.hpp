#pragma once

#include <stdexcept>
#include <string>

namespace dflmoe {

enum class ErrorCode {
    ShapeMismatch,
    NonFinite,
    LabelOutOfRange,
    EmptyExpertSet,
    NotScalar,
    MissingGrad,
    UnknownExpert,
    DataEmpty,
    ConfigInvalid,
    RemovingAllClients,
    HeterogeneousModels,
    DimensionalIncompatibility,
    InvalidParams,
    LengthMismatch,
    ParseError,
    MissingValue,
    IndivisibleDim,
    MissingArtifacts,
    InvalidArgument,
};

const char* error_code_name(ErrorCode code);

/// All library failures are reported through this exception; code() lets
/// callers branch without string matching.
class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

    ErrorCode code() const { return code_; }

  private:
    ErrorCode code_;
};

}  // namespace dflmoe
