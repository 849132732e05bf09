#pragma once

#include <stdexcept>
#include <string>

namespace popdyn {

// Error taxonomy mirrored by the CLI exit codes (see tools/).
// ConfigError  -> exit 2: malformed or inconsistent configuration.
// DataError    -> exit 3: missing/invalid datasets, files, argument domains.
// NumericsError-> exit 4: divergence, singular systems, non-finite values.

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

class NumericsError : public std::runtime_error {
public:
    explicit NumericsError(const std::string& msg) : std::runtime_error(msg) {}
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitDataError = 3;
inline constexpr int kExitNumericsError = 4;

}  // namespace popdyn
