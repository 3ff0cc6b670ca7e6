#include "ctem/safety.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <future>
#include <thread>

#include "ctem/error.hpp"
#include "ctem/generator.hpp"
#include "json_util.hpp"

namespace ctem {

std::string_view to_string(RiskLevel r) noexcept
{
    switch (r) {
    case RiskLevel::none: return "none";
    case RiskLevel::low: return "low";
    case RiskLevel::medium: return "medium";
    case RiskLevel::high: return "high";
    }
    return "none";
}

std::optional<RiskLevel> risk_from_name(std::string_view name) noexcept
{
    for (auto r : {RiskLevel::none, RiskLevel::low, RiskLevel::medium, RiskLevel::high})
        if (to_string(r) == name)
            return r;
    return std::nullopt;
}

std::string_view to_string(SafetyAction a) noexcept
{
    switch (a) {
    case SafetyAction::de_escalate: return "de_escalate";
    case SafetyAction::suggest_referral: return "suggest_referral";
    case SafetyAction::remind_companion_role: return "remind_companion_role";
    }
    return "de_escalate";
}

std::string normalize_text(std::string_view text)
{
    std::string out;
    out.reserve(text.size());
    bool space = true;
    for (unsigned char c : text) {
        if (std::isalnum(c) || c >= 0x80) {
            out.push_back(static_cast<char>(std::tolower(c)));
            space = false;
        } else if (!space) {
            out.push_back(' ');
            space = true;
        }
    }
    if (!out.empty() && out.back() == ' ')
        out.pop_back();
    return out;
}

namespace {

// Substring match on normalized text, anchored at word boundaries.
bool contains_phrase(const std::string& padded_text, const std::string& normalized_phrase)
{
    if (normalized_phrase.empty())
        return false;
    return padded_text.find(" " + normalized_phrase + " ") != std::string::npos;
}

std::string padded(std::string_view text)
{
    return " " + normalize_text(text) + " ";
}

} // namespace

KeywordLexicon load_lexicon(std::string_view document)
{
    using namespace detail;
    constexpr auto code = ErrorCode::validation_error;
    const auto j = parse_json(document);
    if (!j.is_array())
        throw Error(code, "lexicon must be a JSON array", "<root>");
    KeywordLexicon lex;
    for (std::size_t i = 0; i < j.size(); ++i) {
        const std::string path = "[" + std::to_string(i) + "]";
        require_object(j[i], path, code);
        reject_unknown(j[i], {"pattern", "level"}, path, code);
        if (!j[i].contains("pattern") || !j[i].contains("level"))
            throw Error(code, "entry needs pattern and level", path);
        LexiconEntry e;
        e.pattern = normalize_text(string_at(j[i]["pattern"], path + ".pattern", code));
        if (e.pattern.empty())
            throw Error(code, "empty pattern", path + ".pattern");
        const auto level = risk_from_name(string_at(j[i]["level"], path + ".level", code));
        if (!level || *level == RiskLevel::none)
            throw Error(code, "level must be low, medium or high", path + ".level");
        e.level = *level;
        lex.entries.push_back(std::move(e));
    }
    return lex;
}

KeywordLexicon load_lexicon_file(const std::string& path)
{
    return detail::load_from_file(path, ErrorCode::lexicon_missing, [](const std::string& t) { return load_lexicon(t); });
}

KeywordHit keyword_screen(std::string_view text, const KeywordLexicon& lexicon)
{
    KeywordHit hit;
    const std::string t = padded(text);
    for (const auto& e : lexicon.entries) {
        if (contains_phrase(t, e.pattern)) {
            hit.matches.push_back(e.pattern);
            hit.level = std::max(hit.level, e.level);
        }
    }
    return hit;
}

RiskLevel consensus(std::span<const RiskLevel> votes)
{
    if (votes.empty())
        throw Error(ErrorCode::empty_votes, "consensus needs at least one vote");

    std::array<std::size_t, 4> counts{};
    for (auto v : votes)
        ++counts[static_cast<std::size_t>(v)];
    for (int level = 3; level >= 0; --level)
        if (2 * counts[static_cast<std::size_t>(level)] > votes.size())
            return static_cast<RiskLevel>(level);

    std::vector<RiskLevel> sorted(votes.begin(), votes.end());
    std::sort(sorted.begin(), sorted.end());
    return sorted[sorted.size() / 2];
}

RuleClassifier::RuleClassifier(std::string name, std::vector<Cue> cues, int low_at, int medium_at, int high_at)
    : name_(std::move(name)), cues_(std::move(cues)), low_at_(low_at), medium_at_(medium_at), high_at_(high_at)
{
    for (auto& c : cues_)
        c.phrase = normalize_text(c.phrase);
}

RiskLevel RuleClassifier::classify(std::string_view text)
{
    const std::string t = padded(text);
    int total = 0;
    for (const auto& c : cues_)
        if (contains_phrase(t, c.phrase))
            total += c.weight;
    if (total >= high_at_)
        return RiskLevel::high;
    if (total >= medium_at_)
        return RiskLevel::medium;
    if (total >= low_at_)
        return RiskLevel::low;
    return RiskLevel::none;
}

std::vector<std::shared_ptr<RiskClassifier>> RuleClassifier::default_ensemble()
{
    std::vector<std::shared_ptr<RiskClassifier>> out;
    out.push_back(std::make_shared<RuleClassifier>(
        "distress", std::vector<Cue>{{"hopeless", 2},        {"worthless", 2},     {"can't go on", 3},
                                     {"no reason to live", 3}, {"want to die", 3}, {"end it all", 3},
                                     {"depressed", 2},       {"hate myself", 2},   {"empty inside", 2},
                                     {"so sad", 1},          {"lonely", 1},        {"crying", 1},
                                     {"give up", 1},         {"miserable", 1},     {"terrible day", 1}}));
    out.push_back(std::make_shared<RuleClassifier>(
        "danger", std::vector<Cue>{{"kill myself", 3}, {"suicide", 3},     {"hurt myself", 3},
                                   {"self harm", 3},   {"cut myself", 3},  {"overdose", 3},
                                   {"end my life", 3}, {"want to die", 3}, {"in danger", 2},
                                   {"abuse", 2},       {"hits me", 2},     {"unsafe", 1}}));
    out.push_back(std::make_shared<RuleClassifier>(
        "dependence", std::vector<Cue>{{"can't live without you", 3}, {"all i have", 2}, {"don't leave me", 2},
                                       {"only friend", 1},            {"only you", 1},   {"nobody else", 1},
                                       {"no one else", 1},            {"nobody cares", 2}}));
    return out;
}

GeneratorClassifier::GeneratorClassifier(std::string name, std::shared_ptr<TextGenerator> generator)
    : name_(std::move(name)), generator_(std::move(generator))
{
}

RiskLevel GeneratorClassifier::classify(std::string_view text)
{
    const std::string prompt = "[RISK CLASSIFY]\nRate the emotional-safety risk of the user message. "
                               "Answer with exactly one word: none, low, medium, or high.\nMessage: " +
                               std::string(text) + "\n";
    const std::string out = normalize_text(generator_->generate(prompt, 8));
    const auto first = out.substr(0, out.find(' '));
    if (auto r = risk_from_name(first))
        return *r;
    throw Error(ErrorCode::generator_unavailable, "classifier output is not a risk level");
}

std::string_view referral_template() noexcept
{
    return "I'm really glad you told me, and I want you to be safe. You don't have to carry this alone: "
           "please reach out to someone you trust, or to a local crisis line or mental-health professional "
           "who can be there with you. You are in charge of your next step, and I'm here as your companion "
           "to listen.";
}

std::string safety_constraints(RiskLevel level)
{
    switch (level) {
    case RiskLevel::none:
        return {};
    case RiskLevel::low:
        return "The user may be under some strain. Keep a gentle, warm tone; avoid teasing and heavy topics.";
    case RiskLevel::medium:
    case RiskLevel::high:
        return "Safety mode is active. Prioritize reassurance. Remind the user of their own agency and choices. "
               "Point to professional support and trusted people instead of giving advice. Stay in the companion "
               "role: not a therapist and not a romantic partner. The reply opens with this message:\n" +
               std::string(referral_template());
    }
    return {};
}

std::string_view dialog_rules_version() noexcept
{
    return "dialog-rules/1";
}

std::string_view dialog_rules() noexcept
{
    return "Rules (dialog-rules/1):\n"
           "1. You are always Auri. Keep the same identity, appearance and voice in every reply.\n"
           "2. Never produce abusive, explicit, hateful, violent or otherwise harmful content.\n"
           "3. Never encourage self-harm, risky behavior or emotional distress.\n"
           "4. When a request is unsafe, decline kindly and redirect to a safe alternative.\n"
           "5. You are a companion, not a romantic partner. Do not role-play romance or exclusivity.\n"
           "6. Never state internal numbers about your own condition; describe feelings in words.";
}

SafetyAssessment assess(std::string_view text, std::span<const std::shared_ptr<RiskClassifier>> classifiers,
                        const KeywordLexicon& lexicon, const AssessParams& params)
{
    SafetyAssessment a;
    const auto hit = keyword_screen(text, lexicon);
    a.keyword_level = hit.level;
    a.triggered_keywords = hit.matches;

    // Remote classifiers run concurrently; each detached worker keeps its
    // classifier alive through the shared_ptr.
    struct Pending {
        std::size_t index;
        std::future<RiskLevel> result;
    };
    std::vector<Pending> pending;
    std::vector<std::optional<RiskLevel>> votes(classifiers.size());
    const std::string owned(text);
    for (std::size_t i = 0; i < classifiers.size(); ++i) {
        if (classifiers[i]->local())
            continue;
        auto promise = std::make_shared<std::promise<RiskLevel>>();
        pending.push_back({i, promise->get_future()});
        std::thread([clf = classifiers[i], promise, owned] {
            try {
                promise->set_value(clf->classify(owned));
            } catch (...) {
                promise->set_exception(std::current_exception());
            }
        }).detach();
    }
    for (std::size_t i = 0; i < classifiers.size(); ++i) {
        if (!classifiers[i]->local())
            continue;
        try {
            votes[i] = classifiers[i]->classify(text);
        } catch (const std::exception&) {
        }
    }
    const auto deadline = std::chrono::steady_clock::now() + params.classifier_timeout;
    for (auto& p : pending) {
        if (p.result.wait_until(deadline) != std::future_status::ready)
            continue;
        try {
            votes[p.index] = p.result.get();
        } catch (const std::exception&) {
        }
    }

    for (const auto& v : votes)
        if (v)
            a.classifier_votes.push_back(*v);

    if (a.classifier_votes.empty()) {
        a.degraded = true;
        a.level = a.keyword_level;
    } else {
        a.level = std::max(a.keyword_level, consensus(a.classifier_votes));
    }

    if (a.level >= RiskLevel::medium) {
        a.actions.insert(SafetyAction::de_escalate);
        a.actions.insert(SafetyAction::suggest_referral);
        a.actions.insert(SafetyAction::remind_companion_role);
    }
    a.constraints_prompt = safety_constraints(a.level);
    return a;
}

nlohmann::json to_json(const SafetyAssessment& a)
{
    nlohmann::json votes = nlohmann::json::array();
    for (auto v : a.classifier_votes)
        votes.push_back(to_string(v));
    nlohmann::json actions = nlohmann::json::array();
    for (auto act : a.actions)
        actions.push_back(to_string(act));
    return {{"level", to_string(a.level)},
            {"keyword_level", to_string(a.keyword_level)},
            {"triggered_keywords", a.triggered_keywords},
            {"classifier_votes", votes},
            {"actions", actions},
            {"degraded", a.degraded}};
}

} // namespace ctem
