#include "ctem/dynamics.hpp"

#include <algorithm>
#include <cmath>

#include "ctem/error.hpp"

namespace ctem {

void validate(const RestConfig& cfg)
{
    auto lambda_ok = [](double l) { return std::isfinite(l) && l >= 0.0 && l <= 1.0; };
    if (!lambda_ok(cfg.energy_lambda))
        throw Error(ErrorCode::config_error, "lambda outside [0, 1]", "rest.lambdas.energy");
    if (!lambda_ok(cfg.valence_lambda))
        throw Error(ErrorCode::config_error, "lambda outside [0, 1]", "rest.lambdas.valence");
    if (!lambda_ok(cfg.arousal_lambda))
        throw Error(ErrorCode::config_error, "lambda outside [0, 1]", "rest.lambdas.arousal");
    if (clamp_physio(cfg.baseline) != cfg.baseline)
        throw Error(ErrorCode::config_error, "baseline outside physio ranges", "rest.baseline");
}

EmotionalState apply_behavior_effects(EmotionalState state, const ScoredBehavior& b, double outcome_quality)
{
    const double q = std::isfinite(outcome_quality) ? std::clamp(outcome_quality, 0.0, 1.0) : 0.0;
    const auto& spec = b.behavior;
    state.physio.energy += spec.bio_consumption;
    state.physio.valence += spec.valence_effect * q;
    state.physio.arousal += spec.arousal_effect;
    state.physio = clamp_physio(state.physio);
    return state;
}

EmotionalState nightly_rest(EmotionalState state, const RestConfig& cfg)
{
    auto regress = [](double x, double baseline, double lambda) { return x + lambda * (baseline - x); };
    state.physio.energy = regress(state.physio.energy, cfg.baseline.energy, cfg.energy_lambda);
    state.physio.valence = regress(state.physio.valence, cfg.baseline.valence, cfg.valence_lambda);
    state.physio.arousal = regress(state.physio.arousal, cfg.baseline.arousal, cfg.arousal_lambda);
    state.physio = clamp_physio(state.physio);
    return state;
}

EmotionalState update_familiarity(EmotionalState state, bool active_day, double eta)
{
    if (active_day) {
        const double next = state.familiarity + eta * (1.0 - state.familiarity);
        state.familiarity = std::clamp(std::max(next, state.familiarity), 0.0, 1.0);
    }
    return state;
}

} // namespace ctem
