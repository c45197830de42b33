#pragma once

#include <stdexcept>
#include <string>

namespace ornatag {

enum class ErrorKind {
    // note tokens
    InvalidStep,
    InvalidOctave,
    InvalidDuration,
    PitchOutOfRange,
    MalformedToken,
    // files and containers
    InvalidTagSet,
    UnknownTag,
    LengthMismatch,
    EmptyCorpus,
    // rule language
    SyntaxError,
    UnknownFeature,
    NonpositiveWeight,
    // model files
    VersionMismatch,
    CorruptModel,
    // runtime contracts
    ShapeMismatch,
    InvalidArgument,
};

const char* to_string(ErrorKind kind);

// Every failure raised by the library. Line and column are 1-based; 0 means
// "not applicable".
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string message, int line = 0, int column = 0, std::string token = {});

    ErrorKind kind() const { return kind_; }
    int line() const { return line_; }
    int column() const { return column_; }
    const std::string& token() const { return token_; }

    // True for failures caused by malformed or inconsistent input files.
    bool is_input_error() const;

private:
    ErrorKind kind_;
    int line_;
    int column_;
    std::string token_;
};

}  // namespace ornatag
