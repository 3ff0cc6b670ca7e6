#include "ctem/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>

#include "ctem/error.hpp"
#include "ctem/rng.hpp"
#include "json_util.hpp"

#ifndef CTEM_DATA_DIR
#define CTEM_DATA_DIR "data"
#endif

namespace ctem {

namespace fs = std::filesystem;

namespace {

constexpr auto kCode = ErrorCode::config_error;

// Reads optional members of one config object, rejecting unknown keys.
class Reader {
public:
    Reader(const nlohmann::json& j, std::string path, std::initializer_list<std::string_view> keys)
        : j_(j), path_(std::move(path))
    {
        detail::require_object(j_, path_, kCode);
        detail::reject_unknown(j_, keys, path_, kCode);
    }

    bool has(const char* key) const { return j_.contains(key) && !j_[key].is_null(); }
    std::string at(const char* key) const { return detail::join_path(path_, key); }
    const nlohmann::json& operator[](const char* key) const { return j_[key]; }

    void number(const char* key, double& out, double lo, double hi) const
    {
        if (has(key))
            out = detail::number_in(j_[key], at(key), lo, hi, kCode);
    }

    template <typename Int>
    void integer(const char* key, Int& out, long long lo, long long hi) const
    {
        if (!has(key))
            return;
        const auto& v = j_[key];
        if (!v.is_number_integer() || v.get<long long>() < lo || v.get<long long>() > hi)
            throw Error(kCode, "expected an integer in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]",
                        at(key));
        out = static_cast<Int>(v.get<long long>());
    }

    void text(const char* key, std::string& out) const
    {
        if (has(key))
            out = detail::string_at(j_[key], at(key), kCode);
    }

private:
    const nlohmann::json& j_;
    std::string path_;
};

std::string resolve(const std::string& base_dir, const std::string& p)
{
    if (p.empty() || base_dir.empty() || fs::path(p).is_absolute())
        return p;
    return (fs::path(base_dir) / p).lexically_normal().string();
}

const char* kValenceRows[3] = {"low", "neutral", "positive"};
const char* kArousalCols[3] = {"calm", "moderate", "excited"};

} // namespace

std::string default_data_root()
{
    if (const char* env = std::getenv("CTEM_DATA_ROOT"); env && *env)
        return env;
    return CTEM_DATA_DIR;
}

EngineConfig config_from_json(const nlohmann::json& j, const std::string& base_dir)
{
    EngineConfig c;
    const Reader r(j, "",
                   {"start_time", "utc_offset_minutes", "tick_minutes", "planning_horizon", "replanning_threshold",
                    "softmax_temperature", "scoring", "redundancy_window_hours", "tone_thresholds", "rest",
                    "familiarity_eta", "default_outcome_quality", "feedback_valence_gain",
                    "default_duration_ticks", "clustering_epsilon_floor_seconds", "proactive", "strategy",
                    "familiarity_bands", "prompt", "emoji_table", "safety", "timeline_post_probability",
                    "nickname", "generator", "paths", "rng_seed"});

    r.integer("start_time", c.start_time, 0, 253402300799LL);
    long long offset_minutes = c.utc_offset_seconds / 60;
    r.integer("utc_offset_minutes", offset_minutes, -14 * 60, 14 * 60);
    c.utc_offset_seconds = offset_minutes * 60;
    r.integer("tick_minutes", c.tick_minutes, 1, 24 * 60);
    r.integer("planning_horizon", c.planning_horizon, 1, 100);
    if (c.planning_horizon != kPlanningHorizon)
        throw Error(kCode, "planning horizon is fixed at 3", "planning_horizon");
    r.number("replanning_threshold", c.replanning_threshold, -1.0, 1.0);
    r.number("softmax_temperature", c.softmax_temperature, 1e-6, 1e6);
    r.number("familiarity_eta", c.familiarity_eta, 0.0, 1.0);
    r.number("default_outcome_quality", c.default_outcome_quality, 0.0, 1.0);
    r.number("feedback_valence_gain", c.feedback_valence_gain, 0.0, 1.0);
    r.integer("default_duration_ticks", c.default_duration_ticks, 1, 96);
    r.number("clustering_epsilon_floor_seconds", c.clustering.epsilon_floor_seconds, 0.0, 86400.0);
    r.number("timeline_post_probability", c.timeline_post_probability, 0.0, 1.0);
    r.text("nickname", c.nickname);
    r.integer("rng_seed", c.rng_seed, 0, std::numeric_limits<long long>::max());

    if (r.has("redundancy_window_hours")) {
        double hours = 0;
        r.number("redundancy_window_hours", hours, 0.0, 24.0 * 365);
        c.redundancy_window_seconds = static_cast<SimTime>(hours * 3600.0);
    }

    if (r.has("scoring")) {
        const Reader s(r["scoring"], "scoring", {"logistic_steepness", "logistic_center"});
        s.number("logistic_steepness", c.scoring.steepness, 1e-6, 1e3);
        s.number("logistic_center", c.scoring.center, 0.0, 1.0);
    }
    if (r.has("tone_thresholds")) {
        const Reader t(r["tone_thresholds"], "tone_thresholds",
                       {"energy_low", "energy_high", "valence_low", "valence_high", "arousal_low", "arousal_high"});
        t.number("energy_low", c.tone.energy_low, 0.0, 1.0);
        t.number("energy_high", c.tone.energy_high, 0.0, 1.0);
        t.number("valence_low", c.tone.valence_low, -1.0, 1.0);
        t.number("valence_high", c.tone.valence_high, -1.0, 1.0);
        t.number("arousal_low", c.tone.arousal_low, 0.0, 1.0);
        t.number("arousal_high", c.tone.arousal_high, 0.0, 1.0);
    }
    if (r.has("rest")) {
        const Reader rest(r["rest"], "rest", {"baseline", "lambdas"});
        if (rest.has("baseline")) {
            const Reader b(rest["baseline"], "rest.baseline", {"energy", "valence", "arousal"});
            b.number("energy", c.rest.baseline.energy, 0.0, 1.0);
            b.number("valence", c.rest.baseline.valence, -1.0, 1.0);
            b.number("arousal", c.rest.baseline.arousal, 0.0, 1.0);
        }
        if (rest.has("lambdas")) {
            const Reader l(rest["lambdas"], "rest.lambdas", {"energy", "valence", "arousal"});
            l.number("energy", c.rest.energy_lambda, 0.0, 1.0);
            l.number("valence", c.rest.valence_lambda, 0.0, 1.0);
            l.number("arousal", c.rest.arousal_lambda, 0.0, 1.0);
        }
    }
    if (r.has("proactive")) {
        const Reader p(r["proactive"], "proactive", {"p_base", "idle_min_hours"});
        p.number("p_base", c.intent.p_base, 0.0, 1.0);
        double hours = static_cast<double>(c.intent.idle_min_seconds) / 3600.0;
        p.number("idle_min_hours", hours, 0.0, 24.0 * 30);
        c.intent.idle_min_seconds = static_cast<SimTime>(hours * 3600.0);
    }
    if (r.has("strategy")) {
        const Reader s(r["strategy"], "strategy", {"distress_valence", "positive_valence"});
        s.number("distress_valence", c.intent.distress_valence, -1.0, 1.0);
        s.number("positive_valence", c.intent.positive_valence, -1.0, 1.0);
    }
    if (r.has("familiarity_bands")) {
        const Reader f(r["familiarity_bands"], "familiarity_bands", {"acquaintance", "close"});
        f.number("acquaintance", c.familiarity_bands.acquaintance_at, 0.0, 1.0);
        f.number("close", c.familiarity_bands.close_at, 0.0, 1.0);
    }
    if (r.has("prompt")) {
        const Reader p(r["prompt"], "prompt", {"max_chars", "memory_budget", "conversation_tail", "response_max_length"});
        p.integer("max_chars", c.prompt_max_chars, 256, 1'000'000);
        p.integer("memory_budget", c.memory_budget, 0, 1000);
        p.integer("conversation_tail", c.conversation_tail, 0, 1000);
        p.integer("response_max_length", c.response_max_length, 16, 100'000);
    }
    if (r.has("emoji_table")) {
        const Reader e(r["emoji_table"], "emoji_table", {"low", "neutral", "positive"});
        for (int v = 0; v < 3; ++v) {
            if (!e.has(kValenceRows[v]))
                continue;
            const std::string rowpath = e.at(kValenceRows[v]);
            const Reader row(e[kValenceRows[v]], rowpath, {"calm", "moderate", "excited"});
            for (int a = 0; a < 3; ++a) {
                if (!row.has(kArousalCols[a])) {
                    if (e[kValenceRows[v]].contains(kArousalCols[a]))
                        c.emoji.cells[v][a] = std::nullopt;
                    continue;
                }
                std::string name;
                row.text(kArousalCols[a], name);
                const auto tag = emoji_from_name(name);
                if (!tag)
                    throw Error(kCode, "unknown emoji tag '" + name + "'", row.at(kArousalCols[a]));
                c.emoji.cells[v][a] = *tag;
            }
        }
    }
    if (r.has("safety")) {
        const Reader s(r["safety"], "safety", {"classifier_timeout_ms"});
        s.integer("classifier_timeout_ms", c.classifier_timeout_ms, 1, 600'000);
    }
    if (r.has("generator")) {
        const Reader g(r["generator"], "generator", {"kind", "seed", "latency_ms", "model", "timeout_ms"});
        g.text("kind", c.generator.kind);
        if (c.generator.kind != "scripted" && c.generator.kind != "remote")
            throw Error(kCode, "generator kind must be scripted or remote", "generator.kind");
        g.integer("seed", c.generator.seed, 0, std::numeric_limits<long long>::max());
        g.integer("latency_ms", c.generator.latency_ms, 0, 600'000);
        g.text("model", c.generator.model);
        g.integer("timeout_ms", c.generator.timeout_ms, 1, 600'000);
    }

    const std::string root = default_data_root();
    c.paths.pool = root + "/pool/default_pool.json";
    c.paths.persona = root + "/personas/default.json";
    c.paths.lexicon = root + "/lexicon.json";
    c.paths.calendar = root + "/calendar.json";
    if (r.has("paths")) {
        const Reader p(r["paths"], "paths", {"pool", "persona", "lexicon", "calendar", "data_dir"});
        p.text("pool", c.paths.pool);
        p.text("persona", c.paths.persona);
        p.text("lexicon", c.paths.lexicon);
        p.text("calendar", c.paths.calendar);
        p.text("data_dir", c.paths.data_dir);
        if (p.has("pool"))
            c.paths.pool = resolve(base_dir, c.paths.pool);
        if (p.has("persona"))
            c.paths.persona = resolve(base_dir, c.paths.persona);
        if (p.has("lexicon"))
            c.paths.lexicon = resolve(base_dir, c.paths.lexicon);
        if (p.has("calendar"))
            c.paths.calendar = resolve(base_dir, c.paths.calendar);
        if (p.has("data_dir"))
            c.paths.data_dir = resolve(base_dir, c.paths.data_dir);
    }

    validate(c.rest);
    return c;
}

nlohmann::json to_json(const EngineConfig& c)
{
    nlohmann::json emoji = nlohmann::json::object();
    for (int v = 0; v < 3; ++v) {
        nlohmann::json row = nlohmann::json::object();
        for (int a = 0; a < 3; ++a)
            row[kArousalCols[a]] = c.emoji.cells[v][a] ? nlohmann::json(to_string(*c.emoji.cells[v][a]))
                                                       : nlohmann::json(nullptr);
        emoji[kValenceRows[v]] = row;
    }
    nlohmann::json j{
        {"start_time", c.start_time},
        {"utc_offset_minutes", c.utc_offset_seconds / 60},
        {"tick_minutes", c.tick_minutes},
        {"planning_horizon", c.planning_horizon},
        {"replanning_threshold", c.replanning_threshold},
        {"softmax_temperature", c.softmax_temperature},
        {"scoring", {{"logistic_steepness", c.scoring.steepness}, {"logistic_center", c.scoring.center}}},
        {"redundancy_window_hours", c.redundancy_window_seconds
                                        ? nlohmann::json(static_cast<double>(*c.redundancy_window_seconds) / 3600.0)
                                        : nlohmann::json(nullptr)},
        {"tone_thresholds",
         {{"energy_low", c.tone.energy_low},
          {"energy_high", c.tone.energy_high},
          {"valence_low", c.tone.valence_low},
          {"valence_high", c.tone.valence_high},
          {"arousal_low", c.tone.arousal_low},
          {"arousal_high", c.tone.arousal_high}}},
        {"rest",
         {{"baseline", to_json(c.rest.baseline)},
          {"lambdas",
           {{"energy", c.rest.energy_lambda}, {"valence", c.rest.valence_lambda}, {"arousal", c.rest.arousal_lambda}}}}},
        {"familiarity_eta", c.familiarity_eta},
        {"default_outcome_quality", c.default_outcome_quality},
        {"feedback_valence_gain", c.feedback_valence_gain},
        {"default_duration_ticks", c.default_duration_ticks},
        {"clustering_epsilon_floor_seconds", c.clustering.epsilon_floor_seconds},
        {"proactive",
         {{"p_base", c.intent.p_base}, {"idle_min_hours", static_cast<double>(c.intent.idle_min_seconds) / 3600.0}}},
        {"strategy",
         {{"distress_valence", c.intent.distress_valence}, {"positive_valence", c.intent.positive_valence}}},
        {"familiarity_bands",
         {{"acquaintance", c.familiarity_bands.acquaintance_at}, {"close", c.familiarity_bands.close_at}}},
        {"prompt",
         {{"max_chars", c.prompt_max_chars},
          {"memory_budget", c.memory_budget},
          {"conversation_tail", c.conversation_tail},
          {"response_max_length", c.response_max_length}}},
        {"emoji_table", emoji},
        {"safety", {{"classifier_timeout_ms", c.classifier_timeout_ms}}},
        {"timeline_post_probability", c.timeline_post_probability},
        {"nickname", c.nickname},
        {"generator",
         {{"kind", c.generator.kind},
          {"seed", c.generator.seed},
          {"latency_ms", c.generator.latency_ms},
          {"model", c.generator.model},
          {"timeout_ms", c.generator.timeout_ms}}},
        {"paths",
         {{"pool", c.paths.pool},
          {"persona", c.paths.persona},
          {"lexicon", c.paths.lexicon},
          {"calendar", c.paths.calendar},
          {"data_dir", c.paths.data_dir}}},
        {"rng_seed", c.rng_seed},
    };
    return j;
}

EngineConfig load_config_file(const std::string& path)
{
    const std::string text = detail::read_file(path, kCode);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(kCode, e.what(), path);
    }
    return config_from_json(j, fs::path(path).parent_path().string());
}

EngineConfig apply_overrides(const EngineConfig& c, const nlohmann::json& overrides)
{
    if (overrides.is_null())
        return c;
    detail::require_object(overrides, "<overrides>", kCode);
    auto j = to_json(c);
    j.merge_patch(overrides);
    // merge_patch treats null as deletion; the window uses null for "same day".
    if (overrides.contains("redundancy_window_hours") && overrides["redundancy_window_hours"].is_null())
        j["redundancy_window_hours"] = nullptr;
    return config_from_json(j);
}

std::string config_hash(const EngineConfig& c)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(to_json(c).dump())));
    return buf;
}

void check_paths(const EngineConfig& c)
{
    for (const auto* p : {&c.paths.pool, &c.paths.persona, &c.paths.lexicon, &c.paths.calendar}) {
        std::error_code ec;
        if (!fs::is_regular_file(*p, ec))
            throw Error(kCode, "referenced file does not exist", *p);
    }
}

} // namespace ctem
