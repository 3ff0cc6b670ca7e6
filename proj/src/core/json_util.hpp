#pragma once

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "ctem/error.hpp"

namespace ctem::detail {

inline std::string join_path(const std::string& base, std::string_view key)
{
    return base.empty() ? std::string(key) : base + "." + std::string(key);
}

inline nlohmann::json parse_json(std::string_view document, ErrorCode code = ErrorCode::parse_error)
{
    try {
        return nlohmann::json::parse(document);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(code, e.what());
    }
}

inline std::string read_file(const std::string& path, ErrorCode code = ErrorCode::io_error)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(code, "cannot open file", path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void require_object(const nlohmann::json& j, const std::string& path, ErrorCode code)
{
    if (!j.is_object())
        throw Error(code, "expected a JSON object", path.empty() ? "<root>" : path);
}

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<std::string_view> allowed,
                           const std::string& path, ErrorCode code)
{
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (auto a : allowed)
            known = known || it.key() == a;
        if (!known)
            throw Error(code, "unknown key", join_path(path, it.key()));
    }
}

inline double number_in(const nlohmann::json& j, const std::string& path, double lo, double hi,
                        ErrorCode code)
{
    if (!j.is_number())
        throw Error(code, "expected a number", path);
    const double v = j.get<double>();
    if (!std::isfinite(v) || v < lo || v > hi)
        throw Error(code, "value " + j.dump() + " outside [" + nlohmann::json(lo).dump() + ", " +
                              nlohmann::json(hi).dump() + "]",
                    path);
    return v;
}

inline std::string string_at(const nlohmann::json& j, const std::string& path, ErrorCode code)
{
    if (!j.is_string())
        throw Error(code, "expected a string", path);
    return j.get<std::string>();
}

// Runs a document loader and reports failures against the file path; the
// field path, if any, moves into the message.
template <typename F>
auto load_from_file(const std::string& path, ErrorCode read_code, F&& parse)
{
    const std::string text = read_file(path, read_code);
    try {
        return parse(text);
    } catch (const Error& e) {
        throw Error(e.code(), e.where().empty() ? e.message() : e.message() + " at " + e.where(), path);
    }
}

} // namespace ctem::detail
