#include "ornatag/error.hpp"

namespace ornatag {

const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidStep: return "InvalidStep";
        case ErrorKind::InvalidOctave: return "InvalidOctave";
        case ErrorKind::InvalidDuration: return "InvalidDuration";
        case ErrorKind::PitchOutOfRange: return "PitchOutOfRange";
        case ErrorKind::MalformedToken: return "MalformedToken";
        case ErrorKind::InvalidTagSet: return "InvalidTagSet";
        case ErrorKind::UnknownTag: return "UnknownTag";
        case ErrorKind::LengthMismatch: return "LengthMismatch";
        case ErrorKind::EmptyCorpus: return "EmptyCorpus";
        case ErrorKind::SyntaxError: return "SyntaxError";
        case ErrorKind::UnknownFeature: return "UnknownFeature";
        case ErrorKind::NonpositiveWeight: return "NonpositiveWeight";
        case ErrorKind::VersionMismatch: return "VersionMismatch";
        case ErrorKind::CorruptModel: return "CorruptModel";
        case ErrorKind::ShapeMismatch: return "ShapeMismatch";
        case ErrorKind::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

namespace {

std::string decorate(ErrorKind kind, const std::string& message, int line, int column) {
    std::string out = to_string(kind);
    if (line > 0) {
        out += " at line " + std::to_string(line);
        if (column > 0) out += ", column " + std::to_string(column);
    } else if (column > 0) {
        out += " at column " + std::to_string(column);
    }
    out += ": " + message;
    return out;
}

}  // namespace

Error::Error(ErrorKind kind, std::string message, int line, int column, std::string token)
    : std::runtime_error(decorate(kind, message, line, column)),
      kind_(kind),
      line_(line),
      column_(column),
      token_(std::move(token)) {}

bool Error::is_input_error() const {
    return kind_ != ErrorKind::ShapeMismatch && kind_ != ErrorKind::InvalidArgument;
}

}  // namespace ornatag
