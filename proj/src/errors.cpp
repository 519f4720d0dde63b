#include "dflmoe/errors.hpp"

namespace dflmoe {

const char* error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::NonFinite: return "NonFinite";
        case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
        case ErrorCode::EmptyExpertSet: return "EmptyExpertSet";
        case ErrorCode::NotScalar: return "NotScalar";
        case ErrorCode::MissingGrad: return "MissingGrad";
        case ErrorCode::UnknownExpert: return "UnknownExpert";
        case ErrorCode::DataEmpty: return "DataEmpty";
        case ErrorCode::ConfigInvalid: return "ConfigInvalid";
        case ErrorCode::RemovingAllClients: return "RemovingAllClients";
        case ErrorCode::HeterogeneousModels: return "HeterogeneousModels";
        case ErrorCode::DimensionalIncompatibility: return "DimensionalIncompatibility";
        case ErrorCode::InvalidParams: return "InvalidParams";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::MissingValue: return "MissingValue";
        case ErrorCode::IndivisibleDim: return "IndivisibleDim";
        case ErrorCode::MissingArtifacts: return "MissingArtifacts";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
    }
    return "UnknownError";
}

}  // namespace dflmoe
