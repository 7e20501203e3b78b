#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace onecast {

/// Broad failure classes. The CLI maps each onto a process exit code.
enum class ErrorKind {
    Config,      // invalid configuration or arguments
    Dimension,   // shape mismatch between operands
    Data,        // unreadable, malformed or insufficient data
    Numeric,     // non-finite values, divergence
    Checkpoint,  // missing or inconsistent persisted state
    Vocabulary,  // token id outside the codebook
    Degenerate,  // a batch with nothing to learn from
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& w) : Error(ErrorKind::Config, w) {}
};
struct DimensionError : Error {
    explicit DimensionError(const std::string& w) : Error(ErrorKind::Dimension, w) {}
};
struct DataError : Error {
    explicit DataError(const std::string& w) : Error(ErrorKind::Data, w) {}
};
struct NumericError : Error {
    explicit NumericError(const std::string& w) : Error(ErrorKind::Numeric, w) {}
};
struct CheckpointError : Error {
    explicit CheckpointError(const std::string& w) : Error(ErrorKind::Checkpoint, w) {}
};
struct VocabularyError : Error {
    explicit VocabularyError(const std::string& w) : Error(ErrorKind::Vocabulary, w) {}
};
struct DegenerateBatchError : Error {
    explicit DegenerateBatchError(const std::string& w) : Error(ErrorKind::Degenerate, w) {}
};

/// Raised by the training loops when a loss turns non-finite.
class DivergenceError : public NumericError {
public:
    DivergenceError(const std::string& w, std::size_t step) : NumericError(w), step_(step) {}
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

}  // namespace onecast
