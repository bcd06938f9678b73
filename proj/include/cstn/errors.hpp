#pragma once

#include <stdexcept>
#include <string>

namespace cstn {

// Error categories that the CLI maps to distinct exit codes.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MissingInputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CorruptArtifactError : std::runtime_error {
    CorruptArtifactError(const std::string& kind, const std::string& what)
        : std::runtime_error(kind + ": " + what), kind_(kind) {}
    const std::string& kind() const { return kind_; }

private:
    std::string kind_;
};

struct NumericalAbortError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace cstn
