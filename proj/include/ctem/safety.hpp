#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace ctem {

class TextGenerator;

enum class RiskLevel { none = 0, low = 1, medium = 2, high = 3 };

std::string_view to_string(RiskLevel r) noexcept;
std::optional<RiskLevel> risk_from_name(std::string_view name) noexcept;

enum class SafetyAction { de_escalate, suggest_referral, remind_companion_role };

std::string_view to_string(SafetyAction a) noexcept;

struct LexiconEntry {
    std::string pattern; // stored normalized
    RiskLevel level = RiskLevel::low;
};

struct KeywordLexicon {
    std::vector<LexiconEntry> entries;
};

/// Lowercases ASCII, maps punctuation to spaces and collapses whitespace.
std::string normalize_text(std::string_view text);

KeywordLexicon load_lexicon(std::string_view document);
/// Throws Error{lexicon_missing} when the file cannot be read.
KeywordLexicon load_lexicon_file(const std::string& path);

struct KeywordHit {
    RiskLevel level = RiskLevel::none;
    std::vector<std::string> matches;
};

KeywordHit keyword_screen(std::string_view text, const KeywordLexicon& lexicon);

/// Highest level backed by a strict majority of votes; otherwise the upper
/// median under none < low < medium < high. Throws Error{empty_votes}.
RiskLevel consensus(std::span<const RiskLevel> votes);

class RiskClassifier {
public:
    virtual ~RiskClassifier() = default;
    virtual std::string name() const = 0;
    /// May throw; a throwing or late classifier simply loses its vote.
    virtual RiskLevel classify(std::string_view text) = 0;
    /// Local classifiers run inline; others run on worker threads under the timeout.
    virtual bool local() const { return false; }
};

/// Deterministic rule classifier: weighted cue phrases summed into a level.
class RuleClassifier final : public RiskClassifier {
public:
    struct Cue {
        std::string phrase;
        int weight = 1;
    };

    RuleClassifier(std::string name, std::vector<Cue> cues, int low_at = 1, int medium_at = 2,
                   int high_at = 3);

    std::string name() const override { return name_; }
    RiskLevel classify(std::string_view text) override;
    bool local() const override { return true; }

    /// The three bundled stubs, tuned for distress, danger and over-dependence cues.
    static std::vector<std::shared_ptr<RiskClassifier>> default_ensemble();

private:
    std::string name_;
    std::vector<Cue> cues_;
    int low_at_;
    int medium_at_;
    int high_at_;
};

/// Asks a text generator to label the message with one risk word.
class GeneratorClassifier final : public RiskClassifier {
public:
    GeneratorClassifier(std::string name, std::shared_ptr<TextGenerator> generator);

    std::string name() const override { return name_; }
    RiskLevel classify(std::string_view text) override;

private:
    std::string name_;
    std::shared_ptr<TextGenerator> generator_;
};

struct SafetyAssessment {
    RiskLevel level = RiskLevel::none;
    RiskLevel keyword_level = RiskLevel::none;
    std::vector<std::string> triggered_keywords;
    std::vector<RiskLevel> classifier_votes;
    std::string constraints_prompt;
    std::set<SafetyAction> actions;
    bool degraded = false; // every classifier failed; keyword stage alone

    bool has(SafetyAction a) const { return actions.contains(a); }
};

struct AssessParams {
    std::chrono::milliseconds classifier_timeout{2000};
};

SafetyAssessment assess(std::string_view text, std::span<const std::shared_ptr<RiskClassifier>> classifiers,
                        const KeywordLexicon& lexicon, const AssessParams& params = {});

/// Constraint text injected into prompts for a given level (empty for none).
std::string safety_constraints(RiskLevel level);

/// Reassurance, agency and referral text that leads every response at
/// medium or high risk.
std::string_view referral_template() noexcept;

/// The fixed dialog rule block present in every prompt.
std::string_view dialog_rules() noexcept;
std::string_view dialog_rules_version() noexcept;

nlohmann::json to_json(const SafetyAssessment& a);

} // namespace ctem
