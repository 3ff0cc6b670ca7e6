#include "ctem/ctem.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <memory>
#include <new>
#include <sstream>
#include <string>

#include "ctem/config.hpp"
#include "ctem/engine.hpp"
#include "ctem/error.hpp"

struct ctem_engine {
    std::unique_ptr<ctem::Engine> engine;
};

namespace {

thread_local std::string g_error;
thread_local std::string g_where;

ctem_status status_of(ctem::ErrorCode code)
{
    using ctem::ErrorCode;
    switch (code) {
    case ErrorCode::config_error:
    case ErrorCode::lexicon_missing: return CTEM_ERR_CONFIG;
    case ErrorCode::io_error: return CTEM_ERR_IO;
    case ErrorCode::parse_error: return CTEM_ERR_PARSE;
    case ErrorCode::invalid_profile:
    case ErrorCode::validation_error:
    case ErrorCode::empty_pool:
    case ErrorCode::no_candidates:
    case ErrorCode::duplicate_day:
    case ErrorCode::empty_votes:
    case ErrorCode::missing_rules: return CTEM_ERR_VALIDATION;
    case ErrorCode::version_mismatch: return CTEM_ERR_VERSION;
    case ErrorCode::corrupt_file: return CTEM_ERR_CORRUPT;
    case ErrorCode::not_found: return CTEM_ERR_NOT_FOUND;
    case ErrorCode::conflict: return CTEM_ERR_CONFLICT;
    case ErrorCode::generator_unavailable: return CTEM_ERR_INTERNAL;
    }
    return CTEM_ERR_INTERNAL;
}

ctem_status fail(ctem_status s, std::string message, std::string where = {})
{
    g_error = std::move(message);
    g_where = std::move(where);
    return s;
}

template <typename F>
ctem_status guarded(F&& f)
{
    try {
        g_error.clear();
        g_where.clear();
        f();
        return CTEM_OK;
    } catch (const ctem::Error& e) {
        return fail(status_of(e.code()), e.what(), e.where());
    } catch (const nlohmann::json::exception& e) {
        return fail(CTEM_ERR_PARSE, e.what());
    } catch (const std::bad_alloc&) {
        return fail(CTEM_ERR_INTERNAL, "out of memory");
    } catch (const std::exception& e) {
        return fail(CTEM_ERR_INTERNAL, e.what());
    } catch (...) {
        return fail(CTEM_ERR_INTERNAL, "unknown failure");
    }
}

char* dup(const std::string& s)
{
    auto* p = static_cast<char*>(std::malloc(s.size() + 1));
    if (!p)
        throw std::bad_alloc();
    std::memcpy(p, s.data(), s.size());
    p[s.size()] = '\0';
    return p;
}

void put(char** out, const std::string& s)
{
    if (out)
        *out = dup(s);
}

std::string jsonl(const std::vector<ctem::TrajectoryRecord>& records)
{
    std::string s;
    for (const auto& r : records) {
        s += ctem::to_jsonl(r);
        s += '\n';
    }
    return s;
}

#define CTEM_REQUIRE(cond, msg)                                                                                    \
    do {                                                                                                           \
        if (!(cond))                                                                                               \
            return fail(CTEM_ERR_INVALID_ARGUMENT, msg);                                                           \
    } while (0)

void run_logged(ctem::Engine& e, ctem::SimTime until, const char* path)
{
    if (!path) {
        e.run(until);
        return;
    }
    std::ofstream log(path, std::ios::binary | std::ios::trunc);
    if (!log)
        throw ctem::Error(ctem::ErrorCode::io_error, "cannot open trajectory log", path);
    try {
        e.run(until, &log);
    } catch (const ctem::Error& err) {
        if (err.code() == ctem::ErrorCode::io_error)
            throw ctem::Error(err.code(), err.what(), path);
        throw;
    }
}

} // namespace

extern "C" {

const char* ctem_version(void)
{
    return "1.0.0";
}

const char* ctem_status_name(ctem_status status)
{
    switch (status) {
    case CTEM_OK: return "ok";
    case CTEM_ERR_INVALID_ARGUMENT: return "invalid-argument";
    case CTEM_ERR_CONFIG: return "config-error";
    case CTEM_ERR_IO: return "io-error";
    case CTEM_ERR_PARSE: return "parse-error";
    case CTEM_ERR_VALIDATION: return "validation-error";
    case CTEM_ERR_VERSION: return "version-mismatch";
    case CTEM_ERR_CORRUPT: return "corrupt-file";
    case CTEM_ERR_NOT_FOUND: return "not-found";
    case CTEM_ERR_CONFLICT: return "conflict";
    case CTEM_ERR_INTERNAL: return "internal";
    }
    return "unknown";
}

const char* ctem_last_error(void)
{
    return g_error.c_str();
}

const char* ctem_last_error_where(void)
{
    return g_where.c_str();
}

void ctem_string_free(char* s)
{
    std::free(s);
}

const char* ctem_default_data_root(void)
{
    static const std::string root = ctem::default_data_root();
    return root.c_str();
}

ctem_status ctem_engine_open(const char* config_path, const char* overrides_json, ctem_engine** out)
{
    CTEM_REQUIRE(out, "out is null");
    *out = nullptr;
    return guarded([&] {
        ctem::EngineConfig cfg = config_path ? ctem::load_config_file(config_path) : ctem::config_from_json(nlohmann::json::object());
        if (overrides_json && *overrides_json) {
            nlohmann::json o;
            try {
                o = nlohmann::json::parse(overrides_json);
            } catch (const nlohmann::json::parse_error& e) {
                throw ctem::Error(ctem::ErrorCode::config_error, e.what(), "<overrides>");
            }
            cfg = ctem::apply_overrides(cfg, o);
        }
        auto handle = std::make_unique<ctem_engine>();
        handle->engine = std::make_unique<ctem::Engine>(std::move(cfg));
        *out = handle.release();
    });
}

void ctem_engine_destroy(ctem_engine* engine)
{
    delete engine;
}

ctem_status ctem_engine_load_script(ctem_engine* engine, const char* script_path)
{
    CTEM_REQUIRE(engine && script_path, "engine and script_path are required");
    return guarded([&] { engine->engine->set_script(ctem::load_user_script_file(script_path)); });
}

ctem_status ctem_engine_step(ctem_engine* engine, char** records_jsonl)
{
    CTEM_REQUIRE(engine, "engine is null");
    return guarded([&] {
        auto records = engine->engine->step();
        put(records_jsonl, jsonl(records));
    });
}

ctem_status ctem_engine_respond(ctem_engine* engine, char** records_jsonl)
{
    CTEM_REQUIRE(engine, "engine is null");
    return guarded([&] {
        auto records = engine->engine->respond();
        put(records_jsonl, jsonl(records));
    });
}

ctem_status ctem_engine_run_days(ctem_engine* engine, int days, const char* trajectory_path)
{
    CTEM_REQUIRE(engine, "engine is null");
    CTEM_REQUIRE(days > 0, "days must be positive");
    return guarded([&] {
        const auto until = engine->engine->state().sim_time + static_cast<ctem::SimTime>(days) * 86400;
        run_logged(*engine->engine, until, trajectory_path);
    });
}

ctem_status ctem_engine_run_until(ctem_engine* engine, int64_t until, const char* trajectory_path)
{
    CTEM_REQUIRE(engine, "engine is null");
    CTEM_REQUIRE(until > engine->engine->state().sim_time, "until must be after the current time");
    return guarded([&] { run_logged(*engine->engine, until, trajectory_path); });
}

int64_t ctem_engine_sim_time(const ctem_engine* engine)
{
    return engine ? engine->engine->state().sim_time : 0;
}

uint64_t ctem_engine_tick(const ctem_engine* engine)
{
    return engine ? engine->engine->tick() : 0;
}

ctem_status ctem_engine_post_message(ctem_engine* engine, const char* text, const double* sentiment_hint,
                                     int64_t* message_id)
{
    CTEM_REQUIRE(engine && text, "engine and text are required");
    return guarded([&] {
        std::optional<double> hint;
        if (sentiment_hint)
            hint = *sentiment_hint;
        const auto id = engine->engine->post_message(text, hint);
        if (message_id)
            *message_id = id;
    });
}

ctem_status ctem_engine_post_reaction(ctem_engine* engine, const char* post_id, const char* kind, const char* text)
{
    CTEM_REQUIRE(engine && post_id && kind, "engine, post_id and kind are required");
    return guarded([&] { engine->engine->post_reaction(post_id, kind, text ? text : ""); });
}

size_t ctem_engine_pending_inbound(const ctem_engine* engine)
{
    return engine ? engine->engine->pending_inbound() : 0;
}

ctem_status ctem_engine_drain_events(ctem_engine* engine, char** events_json)
{
    CTEM_REQUIRE(engine && events_json, "engine and events_json are required");
    return guarded([&] {
        ctem::ordered_json arr = ctem::ordered_json::array();
        for (auto& e : engine->engine->drain_events())
            arr.push_back(std::move(e.body));
        put(events_json, arr.dump());
    });
}

ctem_status ctem_engine_state_json(const ctem_engine* engine, int debug, char** out)
{
    CTEM_REQUIRE(engine && out, "engine and out are required");
    return guarded([&] { put(out, engine->engine->state_view(debug != 0).dump()); });
}

ctem_status ctem_engine_timeline_json(const ctem_engine* engine, char** out)
{
    CTEM_REQUIRE(engine && out, "engine and out are required");
    return guarded([&] { put(out, engine->engine->timeline_view().dump()); });
}

ctem_status ctem_engine_summary_json(const ctem_engine* engine, char** out)
{
    CTEM_REQUIRE(engine && out, "engine and out are required");
    return guarded([&] {
        put(out, engine->engine->stats().to_json(engine->engine->state().familiarity).dump(2));
    });
}

ctem_status ctem_engine_persona_json(const ctem_engine* engine, char** out)
{
    CTEM_REQUIRE(engine && out, "engine and out are required");
    return guarded([&] { put(out, ctem::to_json(engine->engine->persona()).dump()); });
}

ctem_status ctem_engine_set_persona_json(ctem_engine* engine, const char* persona_json)
{
    CTEM_REQUIRE(engine && persona_json, "engine and persona_json are required");
    return guarded([&] { engine->engine->set_persona(ctem::load_persona(persona_json)); });
}

ctem_status ctem_engine_save_snapshot(const ctem_engine* engine, const char* path)
{
    CTEM_REQUIRE(engine && path, "engine and path are required");
    return guarded([&] { engine->engine->save_snapshot(path); });
}

ctem_status ctem_engine_load_snapshot(ctem_engine* engine, const char* path, char** notes)
{
    CTEM_REQUIRE(engine && path, "engine and path are required");
    return guarded([&] {
        const auto lines = engine->engine->load_snapshot(path);
        std::string joined;
        for (const auto& l : lines)
            joined += l + "\n";
        put(notes, joined);
    });
}

uint64_t ctem_nonfinite_replacements(void)
{
    return ctem::nonfinite_replacements();
}

} // extern "C"
