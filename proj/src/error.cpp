#include "demsde/error.hpp"

namespace demsde {

const char* to_string(ErrorCode code)
{
	switch (code) {
	case ErrorCode::FlatPatch: return "FlatPatch";
	case ErrorCode::EmptyPatch: return "EmptyPatch";
	case ErrorCode::GridTooSmall: return "GridTooSmall";
	case ErrorCode::ParseError: return "ParseError";
	case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
	case ErrorCode::IoError: return "IoError";
	case ErrorCode::BadParam: return "BadParam";
	case ErrorCode::NotDivisible: return "NotDivisible";
	case ErrorCode::TooSmall: return "TooSmall";
	case ErrorCode::DimMismatch: return "DimMismatch";
	case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
	case ErrorCode::DegenerateVariance: return "DegenerateVariance";
	case ErrorCode::ShapeMismatch: return "ShapeMismatch";
	case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
	case ErrorCode::SchedMismatch: return "SchedMismatch";
	case ErrorCode::NonFiniteState: return "NonFiniteState";
	}
	return "Unknown";
}

ErrorClass classify(ErrorCode code)
{
	switch (code) {
	case ErrorCode::BadParam:
		return ErrorClass::Usage;
	case ErrorCode::NonFiniteLoss:
	case ErrorCode::NonFiniteState:
	case ErrorCode::DegenerateVariance:
		return ErrorClass::Numeric;
	default:
		return ErrorClass::Data;
	}
}

} // namespace demsde
