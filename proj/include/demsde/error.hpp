#pragma once

#include <stdexcept>
#include <string>

namespace demsde {

enum class ErrorCode
{
	FlatPatch,
	EmptyPatch,
	GridTooSmall,
	ParseError,
	UnsupportedFormat,
	IoError,
	BadParam,
	NotDivisible,
	TooSmall,
	DimMismatch,
	IndexOutOfRange,
	DegenerateVariance,
	ShapeMismatch,
	NonFiniteLoss,
	SchedMismatch,
	NonFiniteState,
};

const char* to_string(ErrorCode code);

// Coarse grouping used by the CLI to pick an exit code.
enum class ErrorClass
{
	Usage,
	Data,
	Numeric,
};

ErrorClass classify(ErrorCode code);

class Error : public std::runtime_error
{
public:
	Error(ErrorCode code, const std::string& what)
		: std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code)
	{
	}

	ErrorCode code() const noexcept { return code_; }

private:
	ErrorCode code_;
};

} // namespace demsde
