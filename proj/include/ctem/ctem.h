/*
 * C interface to the CTEM companion-agent runtime.
 *
 * Engines are opaque handles. Every call returns a ctem_status; on failure
 * ctem_last_error() holds a message for the calling thread. Strings returned
 * through `char**` out-parameters are owned by the caller and released with
 * ctem_string_free().
 */
#ifndef CTEM_H
#define CTEM_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(CTEM_BUILDING_LIBRARY)
#    define CTEM_API __declspec(dllexport)
#  else
#    define CTEM_API __declspec(dllimport)
#  endif
#else
#  define CTEM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef struct ctem_engine ctem_engine;

typedef enum ctem_status {
    CTEM_OK = 0,
    CTEM_ERR_INVALID_ARGUMENT = 1,
    CTEM_ERR_CONFIG = 2,
    CTEM_ERR_IO = 3,
    CTEM_ERR_PARSE = 4,
    CTEM_ERR_VALIDATION = 5,
    CTEM_ERR_VERSION = 6,
    CTEM_ERR_CORRUPT = 7,
    CTEM_ERR_NOT_FOUND = 8,
    CTEM_ERR_CONFLICT = 9,
    CTEM_ERR_INTERNAL = 10
} ctem_status;

CTEM_API const char* ctem_version(void);
CTEM_API const char* ctem_status_name(ctem_status status);
/* Message for the last failed call on this thread ("" if none). */
CTEM_API const char* ctem_last_error(void);
/* Offending path or field of the last failed call on this thread ("" if none). */
CTEM_API const char* ctem_last_error_where(void);
CTEM_API void ctem_string_free(char* s);

/* Directory holding the bundled personas, pool, lexicon and calendar. */
CTEM_API const char* ctem_default_data_root(void);

/*
 * Creates an engine. `config_path` may be NULL for built-in defaults;
 * `overrides_json` may be NULL or a JSON object merged over the config
 * (same schema as the config file).
 */
CTEM_API ctem_status ctem_engine_open(const char* config_path, const char* overrides_json,
                                      ctem_engine** out);
CTEM_API void ctem_engine_destroy(ctem_engine* engine);

CTEM_API ctem_status ctem_engine_load_script(ctem_engine* engine, const char* script_path);

/* Advances one tick; `records_jsonl` (optional) receives the tick's records. */
CTEM_API ctem_status ctem_engine_step(ctem_engine* engine, char** records_jsonl);
/* Handles queued inbound messages without advancing the clock. */
CTEM_API ctem_status ctem_engine_respond(ctem_engine* engine, char** records_jsonl);
/* Steps for `days` simulated days, appending JSONL records to `trajectory_path`. */
CTEM_API ctem_status ctem_engine_run_days(ctem_engine* engine, int days, const char* trajectory_path);
CTEM_API ctem_status ctem_engine_run_until(ctem_engine* engine, int64_t until,
                                           const char* trajectory_path);

CTEM_API int64_t ctem_engine_sim_time(const ctem_engine* engine);
CTEM_API uint64_t ctem_engine_tick(const ctem_engine* engine);

/* Thread-safe: may be called while another thread steps the engine. */
CTEM_API ctem_status ctem_engine_post_message(ctem_engine* engine, const char* text,
                                              const double* sentiment_hint, int64_t* message_id);
CTEM_API ctem_status ctem_engine_post_reaction(ctem_engine* engine, const char* post_id,
                                               const char* kind, const char* text);
CTEM_API size_t ctem_engine_pending_inbound(const ctem_engine* engine);

/* JSON array of pending live events: agent_message, timeline_post, state_change. */
CTEM_API ctem_status ctem_engine_drain_events(ctem_engine* engine, char** events_json);
CTEM_API ctem_status ctem_engine_state_json(const ctem_engine* engine, int debug, char** out);
CTEM_API ctem_status ctem_engine_timeline_json(const ctem_engine* engine, char** out);
CTEM_API ctem_status ctem_engine_summary_json(const ctem_engine* engine, char** out);

CTEM_API ctem_status ctem_engine_persona_json(const ctem_engine* engine, char** out);
/* Replaces character notes and baseline motivation; physio, familiarity and memory are kept. */
CTEM_API ctem_status ctem_engine_set_persona_json(ctem_engine* engine, const char* persona_json);

CTEM_API ctem_status ctem_engine_save_snapshot(const ctem_engine* engine, const char* path);
/* `notes` (optional) receives migration notes, one per line. */
CTEM_API ctem_status ctem_engine_load_snapshot(ctem_engine* engine, const char* path, char** notes);

/* Count of non-finite physio values replaced by defaults in this process. */
CTEM_API uint64_t ctem_nonfinite_replacements(void);

#ifdef __cplusplus
}
#endif

#endif /* CTEM_H */
