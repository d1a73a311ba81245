// errors.hpp -- exception types thrown across the flowcast library

#pragma once

#include <stdexcept>
#include <string>

namespace flowcast {

/// Base class of all library errors. CLI maps these to exit code 1.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class CapExceeded : public Error { public: using Error::Error; };
class CountExceedsSpace : public Error { public: using Error::Error; };
class UnknownTransformation : public Error { public: using Error::Error; };
class RepetitionMismatch : public Error { public: using Error::Error; };
class MalformedMatrix : public Error { public: using Error::Error; };
class SpecMismatch : public Error { public: using Error::Error; };
class DegenerateLabels : public Error { public: using Error::Error; };
class EmptySplit : public Error { public: using Error::Error; };
class MissingHeader : public Error { public: using Error::Error; };
class DegenerateBatch : public Error { public: using Error::Error; };
class ShapeMismatch : public Error { public: using Error::Error; };
class EmptyInput : public Error { public: using Error::Error; };
class InsufficientPoints : public Error { public: using Error::Error; };
class NonPositiveTruth : public Error { public: using Error::Error; };
class CorruptFile : public Error { public: using Error::Error; };
class VersionMismatch : public Error { public: using Error::Error; };
class IoError : public Error { public: using Error::Error; };

} // namespace flowcast
