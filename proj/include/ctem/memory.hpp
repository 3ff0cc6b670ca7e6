#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctem/state.hpp"

namespace ctem {

class TextGenerator;
struct FeedbackFeatures;
struct PastEntry;

enum class Speaker { user, agent };

std::string_view to_string(Speaker s) noexcept;

struct DialogTurn {
    std::int64_t id = 0;
    SimTime at = 0;
    Speaker speaker = Speaker::user;
    std::string text;
    std::optional<nlohmann::json> feedback; // serialized FeedbackFeatures
};

struct DialogCluster {
    std::vector<DialogTurn> turns;
    SimTime start = 0;
    SimTime end = 0;
    std::optional<std::string> topic_tag;
};

/// Day number of the simulated calendar (days since epoch, local offset applied).
using DayIndex = std::int64_t;

DayIndex day_of(SimTime t, SimTime utc_offset_seconds = 0) noexcept;
std::string format_date(DayIndex day);
std::string format_clock(SimTime t, SimTime utc_offset_seconds = 0);

struct EpisodicSummary {
    DayIndex day = 0;
    std::string text;
    std::size_t clusters_covered = 0;
    std::vector<std::string> salient_facts; // "key=value"
};

struct Fact {
    std::string key;
    std::string value;
    std::uint64_t seq = 0; // recency order, larger is newer
    SimTime at = 0;
};

struct MemoryStore {
    std::vector<DialogTurn> turns;
    std::vector<EpisodicSummary> summaries;
    std::vector<Fact> facts;
    std::uint64_t next_fact_seq = 1;

    std::optional<std::string> fact(std::string_view key) const;
};

struct ClusteringParams {
    double epsilon_floor_seconds = 60.0;
};

/// Threshold used by cluster_dialogs for a set of sorted gaps.
double clustering_threshold(std::span<const double> gaps, const ClusteringParams& params = {});

/// Gap-based temporal clustering. Turns with negative timestamps are
/// discarded as invalid; the rest are stably sorted by time and split wherever
/// an adjacent gap exceeds max(mean + stddev, floor).
std::vector<DialogCluster> cluster_dialogs(std::vector<DialogTurn> turns,
                                           const ClusteringParams& params = {});

struct SummaryInput {
    DayIndex day = 0;
    SimTime utc_offset_seconds = 0;
    std::vector<DialogCluster> clusters;
    std::vector<std::string> executed_behaviors; // labels in execution order
};

/// Outcome of a summarization, including whether the fallback path was taken.
struct SummaryResult {
    EpisodicSummary summary;
    std::size_t generator_calls = 0;
    bool used_fallback = false;
    std::string error;
};

/// Per-cluster summarization prompts, then one merge prompt. Falls back to
/// the deterministic template when the generator is unavailable.
SummaryResult summarize_day(const SummaryInput& input, TextGenerator& generator);

/// Deterministic template rendering for one cluster and for a whole day.
std::string render_cluster_draft(const DialogCluster& cluster, SimTime utc_offset_seconds);
std::string render_day_draft(const SummaryInput& input, std::span<const std::string> partials);

/// Facts stated by the user in a turn ("my name is ...", "my favorite X is Y", ...).
std::vector<std::string> extract_user_facts(std::string_view text);

/// Splits generator output into prose and FACT: lines.
std::pair<std::string, std::vector<std::string>> split_fact_lines(std::string_view output);

/// Appends the summary and merges its facts. Throws Error{duplicate_day}.
void update_memory(MemoryStore& m, EpisodicSummary e, SimTime at);

struct ContextSnippet {
    enum class Kind { summary, fact, closing_turns } kind;
    SimTime at = 0;
    std::string text;
};

/// Newest summary, then up to `budget` newest facts, then the closing turns
/// of the most recent conversation cluster.
std::vector<ContextSnippet> retrieve_context(const MemoryStore& m, SimTime now, std::size_t budget,
                                             std::size_t closing_turns = 3);

nlohmann::json to_json(const DialogTurn& t);
DialogTurn turn_from_json(const nlohmann::json& j);
nlohmann::json to_json(const MemoryStore& m);
MemoryStore memory_from_json(const nlohmann::json& j);

} // namespace ctem
