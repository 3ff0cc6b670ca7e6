#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctem/behavior.hpp"
#include "ctem/config.hpp"
#include "ctem/generator.hpp"
#include "ctem/interaction.hpp"
#include "ctem/memory.hpp"
#include "ctem/rng.hpp"
#include "ctem/safety.hpp"
#include "ctem/state.hpp"

namespace ctem {

using ordered_json = nlohmann::ordered_json;

enum class EventKind { plan, execute, replan, rest, message_in, message_out, safety, summary, tick };

std::string_view to_string(EventKind e) noexcept;

struct TrajectoryRecord {
    std::uint64_t tick = 0;
    SimTime sim_time = 0;
    PhysioState physio;
    double familiarity = 0.0;
    std::optional<std::string> present_behavior_id;
    EventKind event = EventKind::tick;
    ordered_json payload = ordered_json::object();
};

/// One JSON object, keys in fixed order, no trailing newline.
std::string to_jsonl(const TrajectoryRecord& r);

struct ScriptEvent {
    enum class Action { message, reaction, silence };

    SimTime at = 0; // offset from the engine start time
    Action action = Action::message;
    std::string text;
    std::optional<double> sentiment_hint;
    std::string reaction_kind = "like";
    std::string post_id = "latest";
};

struct UserScript {
    std::vector<ScriptEvent> events;
};

UserScript load_user_script(std::string_view document);
UserScript load_user_script_file(const std::string& path);

struct TimelineReaction {
    std::string kind; // like | comment
    std::string text;
    SimTime at = 0;
};

struct TimelinePost {
    std::string id;
    SimTime sim_time = 0;
    std::string text;
    std::string behavior_id;
    std::vector<TimelineReaction> reactions;
};

nlohmann::json to_json(const TimelinePost& p);

/// Events pushed to live clients, in emission order.
struct OutboundEvent {
    std::uint64_t seq = 0;
    ordered_json body; // {"seq", "type", ...}
};

/// Running aggregates backing the simulator's summary block.
struct RunStats {
    struct Range {
        double sum = 0.0;
        double min = 0.0;
        double max = 0.0;
    };

    std::uint64_t ticks = 0;
    std::array<Range, 3> physio{}; // energy, valence, arousal over end-of-tick states
    std::array<std::uint64_t, kCategoryCount> executed{};
    std::uint64_t replans = 0;
    std::uint64_t proactive_messages = 0;

    ordered_json to_json(double final_familiarity) const;
};

/// Everything an engine needs besides its config; lets tests inject fakes.
struct EngineComponents {
    BehaviorPool pool;
    PersonalityProfile persona;
    KeywordLexicon lexicon;
    HolidayCalendar calendar;
    std::shared_ptr<TextGenerator> generator;
    std::vector<std::shared_ptr<RiskClassifier>> classifiers;
    std::unique_ptr<SentimentClassifier> sentiment;

    /// Loads pool/persona/lexicon/calendar from the config paths and builds
    /// the configured generator and the default classifier ensemble.
    static EngineComponents from_config(const EngineConfig& cfg);
};

inline constexpr int kSnapshotSchemaVersion = 2;

/// One agent's closed loop. All state mutation happens in step()/respond()
/// on a single thread; post_message()/post_reaction() may be called from any
/// thread and only touch the inbound queue.
class Engine {
public:
    explicit Engine(EngineConfig cfg);
    Engine(EngineConfig cfg, EngineComponents components);

    Engine(const Engine&) = delete;
    Engine& operator=(const Engine&) = delete;

    /// Advances one tick and returns the records it produced.
    std::vector<TrajectoryRecord> step();

    /// Handles queued inbound items at the current simulated time without
    /// advancing the clock.
    std::vector<TrajectoryRecord> respond();

    /// Steps until sim_time >= until, writing JSONL records to `log` if given.
    void run(SimTime until, std::ostream* log = nullptr);

    std::int64_t post_message(std::string text, std::optional<double> sentiment_hint = std::nullopt);
    /// Throws Error{not_found} for an unknown post id.
    void post_reaction(const std::string& post_id, const std::string& kind, std::string text = {});
    std::size_t pending_inbound() const;

    void set_script(UserScript script);

    void set_persona(PersonalityProfile persona);
    const PersonalityProfile& persona() const noexcept { return state_.personality; }

    ordered_json snapshot() const;
    void restore(const nlohmann::json& snapshot);
    void save_snapshot(const std::string& path) const;
    /// Returns migration notes (empty when none were needed).
    std::vector<std::string> load_snapshot(const std::string& path);

    std::vector<OutboundEvent> drain_events();

    /// Client view of the state. Without `debug` only labels are exposed.
    nlohmann::json state_view(bool debug) const;
    nlohmann::json timeline_view() const; // newest first

    const EngineConfig& config() const noexcept { return cfg_; }
    const EmotionalState& state() const noexcept { return state_; }
    EmotionalState& mutable_state() noexcept { return state_; }
    const BehaviorInventory& inventory() const noexcept { return inventory_; }
    const MemoryStore& memory() const noexcept { return memory_; }
    const std::vector<TimelinePost>& timeline() const noexcept { return timeline_; }
    const std::optional<FeedbackFeatures>& last_feedback() const noexcept { return last_feedback_; }
    const std::optional<std::string>& last_prompt() const noexcept { return last_prompt_; }
    std::uint64_t tick() const noexcept { return tick_; }
    const RunStats& stats() const noexcept { return stats_; }
    const BehaviorPool& pool() const noexcept { return parts_.pool; }

private:
    struct Inbound {
        enum class Kind { message, reaction } kind = Kind::message;
        std::int64_t turn_id = 0;
        std::string text;
        std::optional<double> sentiment_hint;
        std::string post_id;
        std::string reaction_kind;
    };

    TrajectoryRecord record(EventKind e, ordered_json payload = ordered_json::object()) const;
    void emit(std::vector<TrajectoryRecord>& out, EventKind e, ordered_json payload = ordered_json::object());
    void publish(ordered_json body);

    void roll_day(DayIndex finished_day, std::vector<TrajectoryRecord>& out);
    void sense(std::vector<TrajectoryRecord>& out);
    void plan_and_select(std::vector<TrajectoryRecord>& out);
    bool refill_future(std::vector<TrajectoryRecord>& out, EventKind kind, const char* reason);
    void execute_present(std::vector<TrajectoryRecord>& out);
    void interact(std::vector<TrajectoryRecord>& out);
    void absorb(Inbound item, std::vector<TrajectoryRecord>& out);
    void drain_inbox(std::vector<TrajectoryRecord>& out);
    void answer_pending(std::vector<TrajectoryRecord>& out);
    void maybe_post_timeline(const ScoredBehavior& executed, ordered_json& payload);
    void emit_message(InteractionIntent intent, const SafetyAssessment& safety,
                      std::vector<TrajectoryRecord>& out);
    void note_tone_change();
    void finish_tick(std::vector<TrajectoryRecord>& out);
    std::optional<std::string> resolve_post_locked(const std::string& post_id) const;
    std::vector<ScoredBehavior> candidates_from_future();
    PlanningParams planning_params() const;
    SimTime tick_seconds() const noexcept { return static_cast<SimTime>(cfg_.tick_minutes) * 60; }

    EngineConfig cfg_;
    EngineComponents parts_;
    std::string config_hash_;

    EmotionalState state_;
    BehaviorInventory inventory_;
    SimTime present_started_at_ = 0;
    bool present_is_fallback_ = false;
    MemoryStore memory_;
    std::vector<TimelinePost> timeline_;
    std::optional<FeedbackFeatures> last_feedback_;
    std::optional<SafetyAssessment> last_safety_;
    std::optional<std::string> last_prompt_;
    std::vector<Inbound> unanswered_;
    std::optional<SimTime> last_user_turn_at_;
    SimTime last_exchange_at_ = 0;
    bool pending_like_ = false;
    std::uint64_t tick_ = 0;
    std::int64_t next_post_ = 1;
    std::uint64_t next_event_seq_ = 1;
    ToneLabels last_tones_{};
    RunStats stats_;

    RandomStream selection_rng_;
    RandomStream proactive_rng_;
    RandomStream timeline_rng_;

    UserScript script_;
    std::size_t script_cursor_ = 0;

    mutable std::mutex inbox_mutex_;
    std::deque<Inbound> inbox_;
    std::int64_t next_turn_id_ = 1;
    std::vector<std::string> known_posts_; // guarded by inbox_mutex_

    std::vector<OutboundEvent> outbound_;
};

} // namespace ctem
