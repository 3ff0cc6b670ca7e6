#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "ctem/behavior.hpp"
#include "ctem/dynamics.hpp"
#include "ctem/interaction.hpp"
#include "ctem/memory.hpp"
#include "ctem/safety.hpp"
#include "ctem/state.hpp"

namespace ctem {

struct Paths {
    std::string pool;
    std::string persona;
    std::string lexicon;
    std::string calendar;
    std::string data_dir = ".";
};

struct GeneratorConfig {
    std::string kind = "scripted"; // scripted | remote
    std::uint64_t seed = 7;
    int latency_ms = 0;
    std::string model = "default";
    int timeout_ms = 20000;
};

struct EngineConfig {
    SimTime start_time = 1740816000; // 2025-03-01T08:00:00Z
    SimTime utc_offset_seconds = 0;
    int tick_minutes = 15;
    std::size_t planning_horizon = kPlanningHorizon;
    double replanning_threshold = 0.15;
    double softmax_temperature = 1.0;
    ScoringParams scoring;
    std::optional<SimTime> redundancy_window_seconds; // empty = same simulated day
    ToneThresholds tone;
    RestConfig rest;
    double familiarity_eta = 0.1;
    double default_outcome_quality = 0.75;
    double feedback_valence_gain = 0.2;
    int default_duration_ticks = 4;
    ClusteringParams clustering;
    IntentParams intent;
    FamiliarityBands familiarity_bands;
    std::size_t prompt_max_chars = 8000;
    std::size_t memory_budget = 4;
    std::size_t conversation_tail = 6;
    std::size_t response_max_length = 600;
    EmojiTable emoji = EmojiTable::defaults();
    int classifier_timeout_ms = 2000;
    double timeline_post_probability = 0.5;
    std::string nickname = "friend";
    GeneratorConfig generator;
    Paths paths;
    std::uint64_t rng_seed = 42;
};

/// Parses a config document. Missing keys take defaults; unknown keys and
/// out-of-range values raise Error{config_error} naming the key.
EngineConfig config_from_json(const nlohmann::json& j, const std::string& base_dir = {});
nlohmann::json to_json(const EngineConfig& c);

/// Loads a config file; relative paths inside resolve against its directory.
EngineConfig load_config_file(const std::string& path);

/// Applies a partial JSON object on top of `c` (same schema as the file).
EngineConfig apply_overrides(const EngineConfig& c, const nlohmann::json& overrides);

/// Hash of the canonical config document, stored in snapshots.
std::string config_hash(const EngineConfig& c);

/// Throws Error{config_error} naming the first referenced file that is missing.
void check_paths(const EngineConfig& c);

/// Directory holding the bundled data files.
std::string default_data_root();

} // namespace ctem
