#pragma once

#include <stdexcept>
#include <string>

namespace mts {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// configuration / usage
struct ConfigError : Error { using Error::Error; };
// zero eligible cases for the requested task; CLI maps this to a usage error
struct EligibilityError : ConfigError { using ConfigError::ConfigError; };

// tensor / layer shape violations
struct ShapeError : Error { using Error::Error; };

// data model
struct ManifestError : Error { using Error::Error; };
struct CaseError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };
struct DataError : Error { using Error::Error; };
struct PhantomSpecError : Error { using Error::Error; };
struct LabelError : Error { using Error::Error; };
struct DomainError : Error { using Error::Error; };

// metrics
struct EmptyMaskError : Error { using Error::Error; };
struct DegenerateError : Error { using Error::Error; };

// persistence
struct CheckpointError : Error { using Error::Error; };

}  // namespace mts
