#pragma once

#include "ctem/behavior.hpp"
#include "ctem/state.hpp"

namespace ctem {

struct RestConfig {
    PhysioState baseline{0.9, 0.0, 0.3};
    double energy_lambda = 0.8;
    double valence_lambda = 0.5;
    double arousal_lambda = 0.6;
};

void validate(const RestConfig& cfg);

/// Energy moves by bio_consumption, valence by valence_effect scaled by the
/// outcome quality, arousal by arousal_effect; the result is clamped.
EmotionalState apply_behavior_effects(EmotionalState state, const ScoredBehavior& b,
                                      double outcome_quality);

/// x' = x + lambda (baseline - x) per dimension, then clamped.
EmotionalState nightly_rest(EmotionalState state, const RestConfig& cfg);

EmotionalState update_familiarity(EmotionalState state, bool active_day, double eta = 0.1);

} // namespace ctem
