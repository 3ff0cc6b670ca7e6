#include "ctem/error.hpp"

namespace ctem {

const char* to_string(ErrorCode code) noexcept
{
    switch (code) {
    case ErrorCode::invalid_profile: return "invalid-profile";
    case ErrorCode::validation_error: return "validation-error";
    case ErrorCode::parse_error: return "parse-error";
    case ErrorCode::empty_pool: return "empty-pool";
    case ErrorCode::no_candidates: return "no-candidates";
    case ErrorCode::duplicate_day: return "duplicate-day";
    case ErrorCode::empty_votes: return "empty-votes";
    case ErrorCode::lexicon_missing: return "lexicon-missing";
    case ErrorCode::missing_rules: return "missing-rules";
    case ErrorCode::generator_unavailable: return "generator-unavailable";
    case ErrorCode::version_mismatch: return "version-mismatch";
    case ErrorCode::corrupt_file: return "corrupt-file";
    case ErrorCode::io_error: return "io-error";
    case ErrorCode::config_error: return "config-error";
    case ErrorCode::not_found: return "not-found";
    case ErrorCode::conflict: return "conflict";
    }
    return "unknown";
}

Error::Error(ErrorCode code, std::string message, std::string where)
    : std::runtime_error(where.empty() ? std::string(to_string(code)) + ": " + message
                                       : std::string(to_string(code)) + ": " + message + " (" + where + ")"),
      code_(code), message_(std::move(message)), where_(std::move(where))
{
}

} // namespace ctem
