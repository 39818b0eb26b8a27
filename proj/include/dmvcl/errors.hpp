#pragma once

#include <stdexcept>
#include <string>

namespace dmvcl {

/// Covariance lost positive definiteness, a required inverse does not
/// exist, or an optimization could not evaluate its objective anywhere.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Two agents are (numerically) co-located; range/bearing geometry is
/// undefined.
class SingularGeometryError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (log files, sample tables).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad experiment or training configuration.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Model file cannot be read back: wrong schema version, inconsistent
/// layer dimensions, corrupt payload.
class ModelIoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace dmvcl
