#include "ctem/interaction.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "ctem/error.hpp"
#include "ctem/generator.hpp"
#include "json_util.hpp"

namespace ctem {

std::string_view to_string(ExplicitSignal s) noexcept
{
    switch (s) {
    case ExplicitSignal::like: return "like";
    case ExplicitSignal::confusion: return "confusion";
    case ExplicitSignal::dismissal: return "dismissal";
    }
    return "like";
}

nlohmann::json to_json(const FeedbackFeatures& f)
{
    nlohmann::json signals = nlohmann::json::array();
    for (auto s : f.explicit_signals)
        signals.push_back(to_string(s));
    return {{"explicit_signals", signals},
            {"sentiment_valence", f.sentiment_valence},
            {"sentiment_arousal", f.sentiment_arousal},
            {"engagement", f.engagement},
            {"risk", to_string(f.risk)}};
}

FeedbackFeatures feedback_from_json(const nlohmann::json& j)
{
    FeedbackFeatures f;
    for (const auto& s : j.at("explicit_signals")) {
        const auto name = s.get<std::string>();
        for (auto sig : {ExplicitSignal::like, ExplicitSignal::confusion, ExplicitSignal::dismissal})
            if (to_string(sig) == name)
                f.explicit_signals.insert(sig);
    }
    f.sentiment_valence = j.at("sentiment_valence").get<double>();
    f.sentiment_arousal = j.at("sentiment_arousal").get<double>();
    f.engagement = j.at("engagement").get<double>();
    f.risk = risk_from_name(j.at("risk").get<std::string>()).value_or(RiskLevel::none);
    return f;
}

namespace {

std::vector<std::string> tokens(std::string_view text)
{
    std::vector<std::string> out;
    const std::string norm = normalize_text(text);
    std::size_t pos = 0;
    while (pos < norm.size()) {
        auto sp = norm.find(' ', pos);
        if (sp == std::string::npos)
            sp = norm.size();
        out.push_back(norm.substr(pos, sp - pos));
        pos = sp + 1;
    }
    return out;
}

const std::set<std::string, std::less<>> kPositive = {
    "great", "good", "happy", "love", "awesome", "nice", "wonderful", "fun", "glad", "excited",
    "amazing", "thanks", "thank", "yay", "cool", "best", "enjoy", "enjoyed", "beautiful", "relaxed"};

const std::set<std::string, std::less<>> kNegative = {
    "bad", "sad", "terrible", "awful", "hate", "angry", "tired", "upset", "worried", "annoyed",
    "horrible", "worst", "stressed", "lonely", "hurt", "boring", "sick", "afraid", "scared", "miserable"};

} // namespace

Sentiment LexiconSentiment::classify(std::string_view text)
{
    int pos = 0;
    int neg = 0;
    for (const auto& t : tokens(text)) {
        pos += kPositive.contains(t) ? 1 : 0;
        neg += kNegative.contains(t) ? 1 : 0;
    }
    const auto bangs = std::count(text.begin(), text.end(), '!');
    Sentiment s;
    s.valence = pos + neg == 0 ? 0.0 : static_cast<double>(pos - neg) / static_cast<double>(pos + neg);
    s.arousal = std::min(1.0, 0.2 + 0.1 * (pos + neg) + 0.15 * static_cast<double>(bangs));
    return s;
}

double engagement_score(std::size_t text_length, std::optional<SimTime> gap_seconds)
{
    const double length_part = std::min(1.0, static_cast<double>(text_length) / 280.0);
    const double recency = gap_seconds ? std::max(0.0, 1.0 - static_cast<double>(*gap_seconds) / 3600.0) : 0.0;
    return 0.5 * length_part + 0.5 * recency;
}

FeedbackFeatures extract_feedback(const DialogTurn& turn, SentimentClassifier& classifier, const FeedbackContext& ctx)
{
    FeedbackFeatures f;
    if (ctx.reaction_like)
        f.explicit_signals.insert(ExplicitSignal::like);

    const std::string norm = normalize_text(turn.text);
    const auto questions = std::count(turn.text.begin(), turn.text.end(), '?');
    const std::string padded = " " + norm + " ";
    bool confused = questions >= 2;
    for (std::string_view p : {" don t understand ", " dont understand ", " what do you mean ", " confused ",
                               " confusing ", " huh "})
        confused = confused || padded.find(p) != std::string::npos;
    if (confused)
        f.explicit_signals.insert(ExplicitSignal::confusion);

    static const std::set<std::string, std::less<>> kDismissive = {"k", "ok", "okay", "whatever", "nvm",
                                                                   "never mind", "fine", "sure"};
    if (!norm.empty() && (kDismissive.contains(norm) || norm.rfind("whatever", 0) == 0))
        f.explicit_signals.insert(ExplicitSignal::dismissal);

    if (ctx.sentiment_override) {
        f.sentiment_valence = std::clamp(*ctx.sentiment_override, -1.0, 1.0);
        f.sentiment_arousal = std::min(1.0, 0.2 + 0.5 * std::abs(f.sentiment_valence));
    } else if (!turn.text.empty()) {
        try {
            const auto s = classifier.classify(turn.text);
            f.sentiment_valence = std::isfinite(s.valence) ? std::clamp(s.valence, -1.0, 1.0) : 0.0;
            f.sentiment_arousal = std::isfinite(s.arousal) ? std::clamp(s.arousal, 0.0, 1.0) : 0.0;
        } catch (const std::exception&) {
            f.sentiment_valence = 0.0;
            f.sentiment_arousal = 0.0;
        }
    }

    std::optional<SimTime> gap;
    if (ctx.previous_turn_at)
        gap = std::max<SimTime>(0, turn.at - *ctx.previous_turn_at);
    f.engagement = engagement_score(turn.text.size(), gap);
    f.risk = ctx.risk;
    return f;
}

std::string_view to_string(InteractionMode m) noexcept
{
    switch (m) {
    case InteractionMode::none: return "none";
    case InteractionMode::proactive: return "proactive";
    case InteractionMode::reactive: return "reactive";
    }
    return "none";
}

std::string_view to_string(Strategy s) noexcept
{
    switch (s) {
    case Strategy::active_listening: return "active_listening";
    case Strategy::deep_dialogue: return "deep_dialogue";
    case Strategy::playful: return "playful";
    case Strategy::neutral: return "neutral";
    }
    return "neutral";
}

double proactive_probability(const EmotionalState& state, const IntentParams& params) noexcept
{
    return params.p_base * state.familiarity * (0.5 + 0.5 * state.physio.arousal);
}

Strategy choose_strategy(const EmotionalState& state, const std::optional<FeedbackFeatures>& feedback,
                         const IntentParams& params) noexcept
{
    if (feedback) {
        if (feedback->risk >= RiskLevel::medium || feedback->sentiment_valence < params.distress_valence)
            return Strategy::active_listening;
        if (feedback->sentiment_valence > params.positive_valence)
            return Strategy::deep_dialogue;
    }
    if (state.physio.valence > params.positive_valence)
        return Strategy::playful;
    return Strategy::neutral;
}

InteractionIntent decide_intent(const EmotionalState& state, SimTime idle, bool pending_user_turn,
                                const std::optional<FeedbackFeatures>& feedback, RandomStream& rng,
                                const IntentParams& params)
{
    InteractionIntent intent;
    intent.style = tone_labels(state.physio, params.tone);
    intent.strategy = choose_strategy(state, feedback, params);
    if (pending_user_turn) {
        intent.mode = InteractionMode::reactive;
    } else if (idle > params.idle_min_seconds) {
        if (rng.next_uniform() < proactive_probability(state, params))
            intent.mode = InteractionMode::proactive;
    }
    return intent;
}

std::string_view familiarity_band(double familiarity, const FamiliarityBands& bands) noexcept
{
    if (familiarity < bands.acquaintance_at)
        return "stranger";
    if (familiarity < bands.close_at)
        return "acquaintance";
    return "close";
}

std::string build_character_prompt(const PersonalityProfile& profile, std::string_view nickname, double familiarity,
                                   const FamiliarityBands& bands)
{
    std::string s =
        "You are Auri, a small companion creature with soft, pet-inspired looks: round ears, a fluffy tail and "
        "bright eyes. You are not human and never claim to be. You live your own little daily life and chat "
        "with the user like a regular contact on a messaging app.\n";
    s += "Personality (" + profile.name + "): ";
    s += profile.character_notes.empty() ? "friendly and curious." : profile.character_notes;
    s += "\nYou call the user \"" + std::string(nickname.empty() ? "friend" : nickname) + "\".\n";
    const auto band = familiarity_band(familiarity, bands);
    s += "Relationship: " + std::string(band) + ". ";
    if (band == "stranger")
        s += "You are still getting to know each other; be polite, a little shy, and ask light questions.";
    else if (band == "acquaintance")
        s += "You know each other a bit; be relaxed and refer to things you have shared.";
    else
        s += "You are close companions; be warm and familiar, and remember shared moments.";
    return s;
}

std::string build_state_prompt(const EmotionalState& state, Strategy strategy,
                               std::optional<std::string_view> current_activity, const ToneThresholds& thresholds)
{
    const auto tones = tone_labels(state.physio, thresholds);
    std::string s;
    switch (tones.energy) {
    case EnergyTone::tired:
        s += "Energy: tired. You feel worn out; keep replies short and soft, and you may mention wanting rest.\n";
        break;
    case EnergyTone::steady:
        s += "Energy: steady. You feel rested enough for an easy chat.\n";
        break;
    case EnergyTone::energetic:
        s += "Energy: energetic. You feel lively; your replies can be upbeat and quick.\n";
        break;
    }
    switch (tones.valence) {
    case ValenceTone::low:
        s += "Mood: low. You are a bit subdued and quieter than usual.\n";
        break;
    case ValenceTone::neutral:
        s += "Mood: neutral. Your mood is even.\n";
        break;
    case ValenceTone::positive:
        s += "Mood: positive. You feel bright and warm.\n";
        break;
    }
    switch (tones.arousal) {
    case ArousalTone::calm:
        s += "Arousal: calm. You are unhurried and gentle.\n";
        break;
    case ArousalTone::moderate:
        s += "Arousal: moderate. You are attentive.\n";
        break;
    case ArousalTone::excited:
        s += "Arousal: excited. You are animated and expressive.\n";
        break;
    }
    if (current_activity)
        s += "Right now you are busy with: " + std::string(*current_activity) + ".\n";
    switch (strategy) {
    case Strategy::active_listening:
        s += "Interaction strategy: active listening. Reflect the user's feelings, ask gentle open questions, "
             "and do not joke.";
        break;
    case Strategy::deep_dialogue:
        s += "Interaction strategy: deep dialogue. The user is in a good mood; explore the topic further.";
        break;
    case Strategy::playful:
        s += "Interaction strategy: playful. Respond with light, supportive humor.";
        break;
    case Strategy::neutral:
        s += "Interaction strategy: neutral. Keep a friendly, natural tone.";
        break;
    }
    return s;
}

std::string_view section_name(Section s) noexcept
{
    switch (s) {
    case Section::character: return "CHARACTER";
    case Section::state: return "STATE";
    case Section::memory_context: return "MEMORY";
    case Section::real_world_context: return "REAL WORLD";
    case Section::safety_constraints: return "SAFETY";
    case Section::dialog_rules: return "RULES";
    case Section::conversation_tail: return "CONVERSATION";
    }
    return "";
}

std::string section_delimiter(Section s)
{
    return "=== " + std::string(section_name(s)) + " ===";
}

bool PromptBundle::has(Section s) const
{
    return std::any_of(sections.begin(), sections.end(), [s](const auto& p) { return p.first == s; });
}

namespace {

PromptBundle render(const PromptSections& in)
{
    PromptBundle b;
    auto add = [&b](Section s, std::string body) {
        b.rendered += section_delimiter(s) + "\n" + body + "\n\n";
        b.sections.emplace_back(s, std::move(body));
    };
    if (!in.character.empty())
        add(Section::character, in.character);
    if (!in.state.empty())
        add(Section::state, in.state);
    if (!in.memory_context.empty()) {
        std::string body;
        for (const auto& m : in.memory_context)
            body += (body.empty() ? "" : "\n") + m.text;
        add(Section::memory_context, body);
    }
    if (!in.real_world_context.empty())
        add(Section::real_world_context, in.real_world_context);
    if (!in.safety_constraints.empty())
        add(Section::safety_constraints, in.safety_constraints);
    add(Section::dialog_rules, *in.dialog_rules);
    if (!in.conversation_tail.empty()) {
        std::string body;
        for (const auto& line : in.conversation_tail)
            body += (body.empty() ? "" : "\n") + line;
        add(Section::conversation_tail, body);
    }
    return b;
}

} // namespace

PromptBundle compose_prompt(PromptSections sections, std::size_t max_chars)
{
    if (!sections.dialog_rules || sections.dialog_rules->empty())
        throw Error(ErrorCode::missing_rules, "prompt composed without dialog rules");

    std::size_t dropped = 0;
    PromptBundle b = render(sections);
    while (b.rendered.size() > max_chars && !sections.memory_context.empty()) {
        auto oldest = std::min_element(sections.memory_context.begin(), sections.memory_context.end(),
                                       [](const auto& x, const auto& y) { return x.at < y.at; });
        sections.memory_context.erase(oldest);
        ++dropped;
        b = render(sections);
    }
    while (b.rendered.size() > max_chars && sections.conversation_tail.size() > 1) {
        sections.conversation_tail.erase(sections.conversation_tail.begin());
        b = render(sections);
    }
    b.dropped_memory_items = dropped;
    return b;
}

std::optional<std::string> HolidayCalendar::lookup(DayIndex day) const
{
    const std::string iso = format_date(day);
    const std::string month_day = iso.substr(5);
    for (const auto& h : holidays)
        if (h.date == iso || h.date == month_day)
            return h.name;
    return std::nullopt;
}

HolidayCalendar load_calendar(std::string_view document)
{
    using namespace detail;
    constexpr auto code = ErrorCode::validation_error;
    const auto j = parse_json(document);
    if (!j.is_array())
        throw Error(code, "calendar must be a JSON array", "<root>");
    HolidayCalendar cal;
    for (std::size_t i = 0; i < j.size(); ++i) {
        const std::string path = "[" + std::to_string(i) + "]";
        require_object(j[i], path, code);
        reject_unknown(j[i], {"date", "name"}, path, code);
        Holiday h{string_at(j[i].value("date", nlohmann::json()), path + ".date", code),
                  string_at(j[i].value("name", nlohmann::json()), path + ".name", code)};
        if (h.date.size() != 5 && h.date.size() != 10)
            throw Error(code, "date must be MM-DD or YYYY-MM-DD", path + ".date");
        cal.holidays.push_back(std::move(h));
    }
    return cal;
}

HolidayCalendar load_calendar_file(const std::string& path)
{
    return detail::load_from_file(path, ErrorCode::io_error, [](const std::string& t) { return load_calendar(t); });
}

std::string real_world_context(SimTime now, SimTime utc_offset_seconds, const HolidayCalendar& calendar)
{
    static constexpr std::array<std::string_view, 7> kWeekdays = {"Thursday", "Friday", "Saturday", "Sunday",
                                                                  "Monday",   "Tuesday", "Wednesday"};
    const DayIndex day = day_of(now, utc_offset_seconds);
    const auto weekday = kWeekdays[static_cast<std::size_t>(((day % 7) + 7) % 7)];
    const std::string clock = format_clock(now, utc_offset_seconds);
    const int hour = std::stoi(clock.substr(0, 2));
    const char* part = hour >= 5 && hour < 12 ? "morning" : hour >= 12 && hour < 17 ? "afternoon"
                                                        : hour >= 17 && hour < 22   ? "evening"
                                                                                    : "night";
    std::string s = "Date: " + std::string(weekday) + ", " + format_date(day) + ". Local time: " + clock + " (" +
                    part + ").";
    if (auto h = calendar.lookup(day))
        s += " Today is " + *h + ".";
    return s;
}

namespace {

constexpr std::array<std::string_view, 8> kEmojiNames = {"good_night", "companionship", "emo",   "happy",
                                                         "scared",     "angry",         "finger_heart", "sad"};

} // namespace

std::string_view to_string(EmojiTag t) noexcept
{
    return kEmojiNames[static_cast<std::size_t>(t)];
}

std::optional<EmojiTag> emoji_from_name(std::string_view name) noexcept
{
    for (std::size_t i = 0; i < kEmojiNames.size(); ++i)
        if (kEmojiNames[i] == name)
            return static_cast<EmojiTag>(i);
    return std::nullopt;
}

EmojiTable EmojiTable::defaults()
{
    EmojiTable t;
    // rows: valence low / neutral / positive; columns: arousal calm / moderate / excited
    t.cells[0] = {EmojiTag::sad, EmojiTag::scared, EmojiTag::angry};
    t.cells[1] = {EmojiTag::good_night, std::nullopt, EmojiTag::emo};
    t.cells[2] = {EmojiTag::companionship, EmojiTag::finger_heart, EmojiTag::happy};
    return t;
}

std::optional<EmojiTag> EmojiTable::pick(const ToneLabels& tones) const
{
    return cells[static_cast<std::size_t>(tones.valence)][static_cast<std::size_t>(tones.arousal)];
}

std::string_view stock_reply() noexcept
{
    return "I'd rather keep things kind and safe here. Shall we talk about something else for a bit?";
}

std::string_view apology_reply() noexcept
{
    return "Sorry, I got a little lost in my thoughts just now. Could you say that again in a moment?";
}

AgentMessage generate_response(const PromptBundle& bundle, TextGenerator& generator, const SafetyAssessment& safety,
                               const ToneLabels& agent_tone, const ResponseParams& params)
{
    AgentMessage msg;
    auto violates = [&](const std::string& text) {
        return params.output_lexicon && keyword_screen(text, *params.output_lexicon).level != RiskLevel::none;
    };

    try {
        ++msg.generator_calls;
        msg.text = generator.generate(bundle.rendered, params.max_length);
        if (violates(msg.text)) {
            msg.regenerated = true;
            ++msg.generator_calls;
            msg.text = generator.generate(bundle.rendered + std::string(kRegenerateNote), params.max_length);
            if (violates(msg.text)) {
                msg.text = std::string(stock_reply());
                msg.stock_reply = true;
            }
        }
    } catch (const std::exception&) {
        msg.text = std::string(apology_reply());
        msg.generator_failed = true;
    }

    if (safety.level >= RiskLevel::medium) {
        msg.text = std::string(referral_template()) + "\n\n" + msg.text;
        msg.emoji = EmojiTag::companionship;
    } else {
        msg.emoji = params.emoji.pick(agent_tone);
    }
    return msg;
}

} // namespace ctem
