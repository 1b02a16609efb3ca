#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace coma {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct UnknownTokenizerError : Error {
    explicit UnknownTokenizerError(const std::string& id)
        : Error("unknown tokenizer id: " + id) {}
};

struct ConfigError : Error {
    using Error::Error;
};

// Transient transport-level failure (connection refused, 429/5xx). Retryable.
struct TransportError : Error {
    using Error::Error;
};

// Definitive provider-side rejection (4xx other than 429). Not retried.
struct ProviderError : Error {
    ProviderError(int status_code, const std::string& detail)
        : Error("provider error (status " + std::to_string(status_code) + "): " + detail),
          status(status_code) {}
    int status;
};

// Replay saw a request whose fingerprint differs from the recorded one.
// Fatal: determinism of the test run is broken.
struct CassetteMismatch : Error {
    using Error::Error;
};

struct ScriptExhausted : Error {
    using Error::Error;
};

struct PromptError : Error {
    using Error::Error;
};

struct TraceIntegrityError : Error {
    using Error::Error;
};

struct DatasetError : Error {
    DatasetError(const std::string& message, std::vector<std::size_t> lines)
        : Error(message), bad_lines(std::move(lines)) {}
    std::vector<std::size_t> bad_lines;
};

struct PipelineError : Error {
    using Error::Error;
};

}  // namespace coma
