#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ctem/rng.hpp"
#include "ctem/state.hpp"

namespace ctem {

enum class Category { physiological, work, leisure, social, emotional };

inline constexpr std::size_t kCategoryCount = 5;

std::string_view to_string(Category c) noexcept;
std::optional<Category> category_from_name(std::string_view name) noexcept;

struct BehaviorSpec {
    std::string id;
    std::string label;
    Category category = Category::leisure;
    double bio_require = 0.1;
    double bio_consumption = -0.1;
    double valence_effect = 0.0;
    double arousal_effect = 0.0;
    MotivationalVector embedding;
    bool restorative = false;
    int duration_ticks = 0; // 0 = engine default
};

struct BehaviorPool {
    std::vector<BehaviorSpec> behaviors;

    const BehaviorSpec* find(std::string_view id) const;
};

/// Expected state update of a behavior: (energy, valence, arousal) deltas.
struct StateDelta {
    double energy = 0.0;
    double valence = 0.0;
    double arousal = 0.0;
};

struct ScoredBehavior {
    BehaviorSpec behavior;
    double score = 0.0;
    StateDelta expected_delta;
};

struct PastEntry {
    ScoredBehavior entry;
    SimTime executed_at = 0;
    double outcome_quality = 0.0;
    bool completed = true; // false when the behavior was abandoned on replanning
};

struct BehaviorInventory {
    std::vector<PastEntry> past;
    std::optional<ScoredBehavior> present;
    std::vector<ScoredBehavior> future;
};

inline constexpr std::size_t kPlanningHorizon = 3;
inline constexpr double kIneligibleScore = -1.0;

struct ScoringParams {
    double steepness = 8.0;
    double center = 0.5;
};

/// w(e) = 1 - logistic(k (e - c)). Equals 0.5 at the center and falls as
/// energy rises, so low energy favours the biological drives.
double modulation_weight(double energy, const ScoringParams& params = {}) noexcept;

ScoredBehavior score_behavior(const BehaviorSpec& b, const EmotionalState& state,
                              const ScoringParams& params = {});

/// Trailing redundancy window. Empty means "the simulated day containing now".
struct RedundancyWindow {
    std::optional<SimTime> trailing_seconds;
    SimTime utc_offset_seconds = 0;
};

std::vector<ScoredBehavior> filter_redundant(std::vector<ScoredBehavior> candidates,
                                             std::span<const PastEntry> past, SimTime now,
                                             const RedundancyWindow& window = {});

struct PlanningParams {
    ScoringParams scoring;
    RedundancyWindow window;
    std::size_t horizon = kPlanningHorizon;
};

/// Refills `future` with the top-scoring eligible, non-redundant behaviors
/// (score descending, then id ascending). Throws Error{empty_pool} if none
/// qualify. Present and past are left untouched.
BehaviorInventory plan_future(const BehaviorPool& pool, const EmotionalState& state,
                              BehaviorInventory inventory, const PlanningParams& params = {});

/// Softmax sample over candidate scores with temperature `tau`. Consumes
/// exactly one uniform draw from `stream`. Throws Error{no_candidates}.
const ScoredBehavior& select_present(std::span<const ScoredBehavior> candidates,
                                     RandomStream& stream, double tau = 1.0);

/// Softmax probabilities in candidate order, as used by select_present.
std::vector<double> softmax_probabilities(std::span<const ScoredBehavior> candidates,
                                          double tau = 1.0);

bool present_valid(const ScoredBehavior& present, const EmotionalState& state,
                   double threshold = 0.15, const ScoringParams& params = {});

BehaviorPool load_pool(std::string_view document);
BehaviorPool load_pool_file(const std::string& path);
nlohmann::json to_json(const BehaviorSpec& b);
nlohmann::json to_json(const BehaviorPool& pool);

} // namespace ctem
