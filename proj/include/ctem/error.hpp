#pragma once

#include <stdexcept>
#include <string>

namespace ctem {

enum class ErrorCode {
    invalid_profile,
    validation_error,
    parse_error,
    empty_pool,
    no_candidates,
    duplicate_day,
    empty_votes,
    lexicon_missing,
    missing_rules,
    generator_unavailable,
    version_mismatch,
    corrupt_file,
    io_error,
    config_error,
    not_found,
    conflict,
};

const char* to_string(ErrorCode code) noexcept;

// Every failure raised by the core carries a machine-readable code. `where`
// names the offending field path or file path when one exists.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, std::string message, std::string where = {});

    ErrorCode code() const noexcept { return code_; }
    const std::string& where() const noexcept { return where_; }
    /// Message without the code prefix and location suffix.
    const std::string& message() const noexcept { return message_; }

private:
    ErrorCode code_;
    std::string message_;
    std::string where_;
};

} // namespace ctem
