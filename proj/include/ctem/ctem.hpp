// Header-only C++ wrapper over the C interface in ctem.h.
#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

#include "ctem/ctem.h"

namespace ctem::api {

class Failure : public std::runtime_error {
public:
    Failure(ctem_status status, std::string message, std::string where)
        : std::runtime_error(std::move(message)), status_(status), where_(std::move(where))
    {
    }

    ctem_status status() const noexcept { return status_; }
    const std::string& where() const noexcept { return where_; }

private:
    ctem_status status_;
    std::string where_;
};

inline void check(ctem_status s)
{
    if (s != CTEM_OK)
        throw Failure(s, ctem_last_error(), ctem_last_error_where());
}

// Takes ownership of a string returned by the C API.
inline std::string take(char* s)
{
    if (!s)
        return {};
    std::string out(s);
    ctem_string_free(s);
    return out;
}

class Engine {
public:
    /// Empty config_path uses built-in defaults; overrides is a JSON object or empty.
    explicit Engine(const std::string& config_path = {}, const std::string& overrides = {})
    {
        check(ctem_engine_open(config_path.empty() ? nullptr : config_path.c_str(),
                               overrides.empty() ? nullptr : overrides.c_str(), &h_));
    }

    ~Engine() { ctem_engine_destroy(h_); }

    Engine(Engine&& o) noexcept : h_(std::exchange(o.h_, nullptr)) {}
    Engine& operator=(Engine&& o) noexcept
    {
        if (this != &o) {
            ctem_engine_destroy(h_);
            h_ = std::exchange(o.h_, nullptr);
        }
        return *this;
    }
    Engine(const Engine&) = delete;
    Engine& operator=(const Engine&) = delete;

    void load_script(const std::string& path) { check(ctem_engine_load_script(h_, path.c_str())); }

    std::string step()
    {
        char* out = nullptr;
        check(ctem_engine_step(h_, &out));
        return take(out);
    }

    std::string respond()
    {
        char* out = nullptr;
        check(ctem_engine_respond(h_, &out));
        return take(out);
    }

    void run_days(int days, const std::string& trajectory_path = {})
    {
        check(ctem_engine_run_days(h_, days, trajectory_path.empty() ? nullptr : trajectory_path.c_str()));
    }

    void run_until(std::int64_t until, const std::string& trajectory_path = {})
    {
        check(ctem_engine_run_until(h_, until, trajectory_path.empty() ? nullptr : trajectory_path.c_str()));
    }

    std::int64_t sim_time() const { return ctem_engine_sim_time(h_); }
    std::uint64_t tick() const { return ctem_engine_tick(h_); }

    std::int64_t post_message(const std::string& text, std::optional<double> hint = std::nullopt)
    {
        std::int64_t id = 0;
        check(ctem_engine_post_message(h_, text.c_str(), hint ? &*hint : nullptr, &id));
        return id;
    }

    void post_reaction(const std::string& post_id, const std::string& kind, const std::string& text = {})
    {
        check(ctem_engine_post_reaction(h_, post_id.c_str(), kind.c_str(), text.c_str()));
    }

    std::size_t pending_inbound() const { return ctem_engine_pending_inbound(h_); }

    std::string drain_events() { return fetch([&](char** o) { return ctem_engine_drain_events(h_, o); }); }
    std::string state_json(bool debug) const
    {
        return fetch([&](char** o) { return ctem_engine_state_json(h_, debug ? 1 : 0, o); });
    }
    std::string timeline_json() const { return fetch([&](char** o) { return ctem_engine_timeline_json(h_, o); }); }
    std::string summary_json() const { return fetch([&](char** o) { return ctem_engine_summary_json(h_, o); }); }
    std::string persona_json() const { return fetch([&](char** o) { return ctem_engine_persona_json(h_, o); }); }
    void set_persona_json(const std::string& j) { check(ctem_engine_set_persona_json(h_, j.c_str())); }

    void save_snapshot(const std::string& path) const { check(ctem_engine_save_snapshot(h_, path.c_str())); }
    std::string load_snapshot(const std::string& path)
    {
        return fetch([&](char** o) { return ctem_engine_load_snapshot(h_, path.c_str(), o); });
    }

    ctem_engine* handle() const noexcept { return h_; }

private:
    template <typename F>
    static std::string fetch(F&& f)
    {
        char* out = nullptr;
        check(f(&out));
        return take(out);
    }

    ctem_engine* h_ = nullptr;
};

} // namespace ctem::api
