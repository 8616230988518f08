#pragma once

#include <stdexcept>
#include <string>

namespace qdl {

// Base of every failure raised by the library. Subclasses name the failure
// kind so callers (and the CLI exit-code mapping) can dispatch on type.
class Error : public std::runtime_error {
public:
	using std::runtime_error::runtime_error;
};

#define QDL_DEFINE_ERROR(Name)                                                                                       \
	class Name : public Error {                                                                                      \
	public:                                                                                                          \
		explicit Name(const std::string &what) : Error(std::string(#Name ": ") + what) {}                            \
	}

// Configuration / precondition failures (CLI exit code 1).
QDL_DEFINE_ERROR(ConfigError);
QDL_DEFINE_ERROR(InvalidShape);
QDL_DEFINE_ERROR(InvalidQuantile);
QDL_DEFINE_ERROR(SchemaError);
QDL_DEFINE_ERROR(ParseError);

// Runtime failures (CLI exit code 2).
QDL_DEFINE_ERROR(ShapeError);
QDL_DEFINE_ERROR(NotScalar);
QDL_DEFINE_ERROR(NumericalError);
QDL_DEFINE_ERROR(LayoutError);
QDL_DEFINE_ERROR(MissingMedian);
QDL_DEFINE_ERROR(MissingQuantile);
QDL_DEFINE_ERROR(InsufficientData);
QDL_DEFINE_ERROR(DegenerateFeature);
QDL_DEFINE_ERROR(SingularSystem);
QDL_DEFINE_ERROR(EmptyEval);
QDL_DEFINE_ERROR(IoError);

#undef QDL_DEFINE_ERROR

} // namespace qdl
