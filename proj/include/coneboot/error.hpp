#ifndef CONEBOOT_ERROR_HPP
#define CONEBOOT_ERROR_HPP

#include <stdexcept>
#include <string>

namespace coneboot {

enum class ErrorCode {
    missing_path,
    too_few_frames,
    mixed_dimensions,
    decode_failure,
    encode_failure,
    invalid_argument,
    dimension_mismatch,
    malformed_document,
    duplicate_id,
    unknown_id,
    storage_failure,
    unresolved_queue,
    pool_too_small,
    non_finite,
    divergence,
};

inline const char* to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::missing_path: return "missing_path";
        case ErrorCode::too_few_frames: return "too_few_frames";
        case ErrorCode::mixed_dimensions: return "mixed_dimensions";
        case ErrorCode::decode_failure: return "decode_failure";
        case ErrorCode::encode_failure: return "encode_failure";
        case ErrorCode::invalid_argument: return "invalid_argument";
        case ErrorCode::dimension_mismatch: return "dimension_mismatch";
        case ErrorCode::malformed_document: return "malformed_document";
        case ErrorCode::duplicate_id: return "duplicate_id";
        case ErrorCode::unknown_id: return "unknown_id";
        case ErrorCode::storage_failure: return "storage_failure";
        case ErrorCode::unresolved_queue: return "unresolved_queue";
        case ErrorCode::pool_too_small: return "pool_too_small";
        case ErrorCode::non_finite: return "non_finite";
        case ErrorCode::divergence: return "divergence";
    }
    return "unknown";
}

/// Every failure in the library is reported as an Error carrying a code,
/// so callers can branch on the kind without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
    throw Error(code, what);
}

inline void require(bool condition, ErrorCode code, const std::string& what) {
    if (!condition) {
        fail(code, what);
    }
}

} // namespace coneboot

#endif
