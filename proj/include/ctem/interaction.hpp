#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctem/memory.hpp"
#include "ctem/rng.hpp"
#include "ctem/safety.hpp"
#include "ctem/state.hpp"

namespace ctem {

class TextGenerator;

enum class ExplicitSignal { like, confusion, dismissal };

std::string_view to_string(ExplicitSignal s) noexcept;

struct FeedbackFeatures {
    std::set<ExplicitSignal> explicit_signals;
    double sentiment_valence = 0.0;
    double sentiment_arousal = 0.0;
    double engagement = 0.0;
    RiskLevel risk = RiskLevel::none;
};

nlohmann::json to_json(const FeedbackFeatures& f);
FeedbackFeatures feedback_from_json(const nlohmann::json& j);

struct Sentiment {
    double valence = 0.0;
    double arousal = 0.0;
};

class SentimentClassifier {
public:
    virtual ~SentimentClassifier() = default;
    virtual Sentiment classify(std::string_view text) = 0;
};

/// Counts positive and negative lexicon words: valence = (pos - neg) / (pos + neg).
class LexiconSentiment final : public SentimentClassifier {
public:
    Sentiment classify(std::string_view text) override;
};

/// Everything extract_feedback needs besides the turn text.
struct FeedbackContext {
    std::optional<SimTime> previous_turn_at;
    bool reaction_like = false;
    std::optional<double> sentiment_override; // scripted sentiment_hint
    RiskLevel risk = RiskLevel::none;
};

FeedbackFeatures extract_feedback(const DialogTurn& turn, SentimentClassifier& classifier,
                                  const FeedbackContext& ctx);

/// Engagement blend: half message length (280 chars saturates), half recency
/// (1 - gap/1h, floored at 0). No previous turn means zero recency.
double engagement_score(std::size_t text_length, std::optional<SimTime> gap_seconds);

enum class InteractionMode { none, proactive, reactive };
enum class Strategy { active_listening, deep_dialogue, playful, neutral };

std::string_view to_string(InteractionMode m) noexcept;
std::string_view to_string(Strategy s) noexcept;

struct InteractionIntent {
    InteractionMode mode = InteractionMode::none;
    ToneLabels style{};
    Strategy strategy = Strategy::neutral;
};

struct IntentParams {
    double p_base = 0.3;
    SimTime idle_min_seconds = 4 * 3600;
    double distress_valence = -0.3;
    double positive_valence = 0.3;
    ToneThresholds tone;
};

double proactive_probability(const EmotionalState& state, const IntentParams& params = {}) noexcept;

/// Strategy from user feedback (if any) and the agent's own valence.
Strategy choose_strategy(const EmotionalState& state, const std::optional<FeedbackFeatures>& feedback,
                         const IntentParams& params = {}) noexcept;

/// Reactive whenever a user turn is pending. Otherwise, once idle exceeds the
/// minimum, draws exactly one value from `rng` and goes proactive with the
/// familiarity- and arousal-gated probability.
InteractionIntent decide_intent(const EmotionalState& state, SimTime idle, bool pending_user_turn,
                                const std::optional<FeedbackFeatures>& feedback, RandomStream& rng,
                                const IntentParams& params = {});

struct FamiliarityBands {
    double acquaintance_at = 0.2;
    double close_at = 0.6;
};

std::string_view familiarity_band(double familiarity, const FamiliarityBands& bands = {}) noexcept;

std::string build_character_prompt(const PersonalityProfile& profile, std::string_view nickname,
                                   double familiarity, const FamiliarityBands& bands = {});

std::string build_state_prompt(const EmotionalState& state, Strategy strategy,
                               std::optional<std::string_view> current_activity = std::nullopt,
                               const ToneThresholds& thresholds = {});

enum class Section {
    character,
    state,
    memory_context,
    real_world_context,
    safety_constraints,
    dialog_rules,
    conversation_tail,
};

inline constexpr std::size_t kSectionCount = 7;

std::string_view section_name(Section s) noexcept;
std::string section_delimiter(Section s);

struct PromptSections {
    std::string character;
    std::string state;
    std::vector<ContextSnippet> memory_context;
    std::string real_world_context;
    std::string safety_constraints; // empty when risk is none
    std::optional<std::string> dialog_rules;
    std::vector<std::string> conversation_tail; // oldest first
};

struct PromptBundle {
    std::vector<std::pair<Section, std::string>> sections; // fixed order
    std::string rendered;
    std::size_t dropped_memory_items = 0;

    bool has(Section s) const;
};

/// Throws Error{missing_rules} without a dialog_rules section. Oldest memory
/// items are dropped, then the oldest conversation lines, until the rendered
/// text fits `max_chars`.
PromptBundle compose_prompt(PromptSections sections, std::size_t max_chars = 8000);

struct Holiday {
    std::string date; // "MM-DD" recurring or "YYYY-MM-DD"
    std::string name;
};

struct HolidayCalendar {
    std::vector<Holiday> holidays;

    std::optional<std::string> lookup(DayIndex day) const;
};

HolidayCalendar load_calendar(std::string_view document);
HolidayCalendar load_calendar_file(const std::string& path);

std::string real_world_context(SimTime now, SimTime utc_offset_seconds, const HolidayCalendar& calendar);

enum class EmojiTag { good_night, companionship, emo, happy, scared, angry, finger_heart, sad };

std::string_view to_string(EmojiTag t) noexcept;
std::optional<EmojiTag> emoji_from_name(std::string_view name) noexcept;

/// valence band (low/neutral/positive) x arousal band (calm/moderate/excited).
struct EmojiTable {
    std::array<std::array<std::optional<EmojiTag>, 3>, 3> cells;

    static EmojiTable defaults();
    std::optional<EmojiTag> pick(const ToneLabels& tones) const;
};

struct AgentMessage {
    std::string text;
    std::optional<EmojiTag> emoji;
    bool regenerated = false;
    bool stock_reply = false;
    bool generator_failed = false;
    std::size_t generator_calls = 0;
};

struct ResponseParams {
    std::size_t max_length = 600;
    const KeywordLexicon* output_lexicon = nullptr;
    EmojiTable emoji = EmojiTable::defaults();
};

inline constexpr std::string_view kRegenerateNote =
    "\n[REGENERATE] The previous draft broke the content rules. Answer again, gently and safely.\n";

std::string_view stock_reply() noexcept;
std::string_view apology_reply() noexcept;

AgentMessage generate_response(const PromptBundle& bundle, TextGenerator& generator,
                               const SafetyAssessment& safety, const ToneLabels& agent_tone,
                               const ResponseParams& params = {});

} // namespace ctem
