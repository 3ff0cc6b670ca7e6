#include "ctem/state.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#include "ctem/error.hpp"
#include "json_util.hpp"

namespace ctem {

namespace {

std::atomic<std::uint64_t> g_nonfinite{0};

double project(double x, double lo, double hi, double fallback) noexcept
{
    if (!std::isfinite(x)) {
        g_nonfinite.fetch_add(1, std::memory_order_relaxed);
        return fallback;
    }
    return std::clamp(x, lo, hi);
}

constexpr std::array<std::string_view, kDriveCount> kDriveNames = {
    "physiological_drive", "pain_avoidance",       "health_preservation", "emotional_reactivity",
    "risk_aversion",       "goal_persistence",     "curiosity_drive",     "norm_adherence",
    "prosocial_motivation", "self_presentation",   "role_duty_sense",     "group_affiliation",
};

} // namespace

PhysioState clamp_physio(PhysioState h) noexcept
{
    h.energy = project(h.energy, 0.0, 1.0, kDefaultPhysio.energy);
    h.valence = project(h.valence, -1.0, 1.0, kDefaultPhysio.valence);
    h.arousal = project(h.arousal, 0.0, 1.0, kDefaultPhysio.arousal);
    return h;
}

std::uint64_t nonfinite_replacements() noexcept
{
    return g_nonfinite.load(std::memory_order_relaxed);
}

std::string_view drive_name(Drive d) noexcept
{
    return kDriveNames[static_cast<std::size_t>(d)];
}

std::optional<Drive> drive_from_name(std::string_view name) noexcept
{
    for (std::size_t i = 0; i < kDriveCount; ++i)
        if (kDriveNames[i] == name)
            return static_cast<Drive>(i);
    return std::nullopt;
}

void validate_profile(const PersonalityProfile& profile)
{
    for (std::size_t i = 0; i < kDriveCount; ++i) {
        const double v = profile.baseline_motivation.values[i];
        if (!std::isfinite(v) || v < 0.0 || v > 1.0)
            throw Error(ErrorCode::invalid_profile, "motivation value out of [0, 1]",
                        "baseline_motivation." + std::string(kDriveNames[i]));
    }
    if (const auto& h = profile.baseline_physio) {
        if (!std::isfinite(h->energy) || h->energy < 0.0 || h->energy > 1.0)
            throw Error(ErrorCode::invalid_profile, "energy out of [0, 1]", "baseline_physio.energy");
        if (!std::isfinite(h->valence) || h->valence < -1.0 || h->valence > 1.0)
            throw Error(ErrorCode::invalid_profile, "valence out of [-1, 1]", "baseline_physio.valence");
        if (!std::isfinite(h->arousal) || h->arousal < 0.0 || h->arousal > 1.0)
            throw Error(ErrorCode::invalid_profile, "arousal out of [0, 1]", "baseline_physio.arousal");
    }
}

EmotionalState init_state(const PersonalityProfile& profile, SimTime start_time)
{
    validate_profile(profile);
    EmotionalState s;
    s.physio = profile.baseline_physio.value_or(kDefaultPhysio);
    s.motivation = profile.baseline_motivation;
    s.personality = profile;
    s.familiarity = 0.0;
    s.sim_time = start_time;
    return s;
}

ToneLabels tone_labels(const PhysioState& h, const ToneThresholds& t) noexcept
{
    // Boundary values belong to the middle band.
    ToneLabels out{};
    out.energy = h.energy < t.energy_low ? EnergyTone::tired
                 : h.energy > t.energy_high ? EnergyTone::energetic
                                            : EnergyTone::steady;
    out.valence = h.valence < t.valence_low ? ValenceTone::low
                  : h.valence > t.valence_high ? ValenceTone::positive
                                               : ValenceTone::neutral;
    out.arousal = h.arousal < t.arousal_low ? ArousalTone::calm
                  : h.arousal > t.arousal_high ? ArousalTone::excited
                                               : ArousalTone::moderate;
    return out;
}

std::string_view to_string(EnergyTone t) noexcept
{
    switch (t) {
    case EnergyTone::tired: return "tired";
    case EnergyTone::steady: return "steady";
    case EnergyTone::energetic: return "energetic";
    }
    return "steady";
}

std::string_view to_string(ValenceTone t) noexcept
{
    switch (t) {
    case ValenceTone::low: return "low";
    case ValenceTone::neutral: return "neutral";
    case ValenceTone::positive: return "positive";
    }
    return "neutral";
}

std::string_view to_string(ArousalTone t) noexcept
{
    switch (t) {
    case ArousalTone::calm: return "calm";
    case ArousalTone::moderate: return "moderate";
    case ArousalTone::excited: return "excited";
    }
    return "moderate";
}

nlohmann::json to_json(const PhysioState& h)
{
    return {{"energy", h.energy}, {"valence", h.valence}, {"arousal", h.arousal}};
}

nlohmann::json to_json(const MotivationalVector& v)
{
    nlohmann::json j = nlohmann::json::object();
    for (std::size_t i = 0; i < kDriveCount; ++i)
        j[std::string(kDriveNames[i])] = v.values[i];
    return j;
}

nlohmann::json to_json(const PersonalityProfile& p)
{
    nlohmann::json j{{"name", p.name},
                     {"character_notes", p.character_notes},
                     {"baseline_motivation", to_json(p.baseline_motivation)}};
    if (p.baseline_physio)
        j["baseline_physio"] = to_json(*p.baseline_physio);
    return j;
}

nlohmann::json to_json(const ToneLabels& t)
{
    return {{"energy", to_string(t.energy)}, {"valence", to_string(t.valence)}, {"arousal", to_string(t.arousal)}};
}

PhysioState physio_from_json(const nlohmann::json& j, const std::string& path)
{
    using namespace detail;
    constexpr auto code = ErrorCode::invalid_profile;
    require_object(j, path, code);
    reject_unknown(j, {"energy", "valence", "arousal"}, path, code);
    PhysioState h = kDefaultPhysio;
    if (j.contains("energy"))
        h.energy = number_in(j["energy"], join_path(path, "energy"), 0.0, 1.0, code);
    if (j.contains("valence"))
        h.valence = number_in(j["valence"], join_path(path, "valence"), -1.0, 1.0, code);
    if (j.contains("arousal"))
        h.arousal = number_in(j["arousal"], join_path(path, "arousal"), 0.0, 1.0, code);
    return h;
}

MotivationalVector motivation_from_json(const nlohmann::json& j, const std::string& path)
{
    using namespace detail;
    constexpr auto code = ErrorCode::invalid_profile;
    require_object(j, path, code);
    MotivationalVector v;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const auto drive = drive_from_name(it.key());
        if (!drive)
            throw Error(code, "unknown motivation dimension", join_path(path, it.key()));
        v[*drive] = number_in(it.value(), join_path(path, it.key()), 0.0, 1.0, code);
    }
    return v;
}

PersonalityProfile persona_from_json(const nlohmann::json& j)
{
    using namespace detail;
    constexpr auto code = ErrorCode::invalid_profile;
    require_object(j, "", code);
    reject_unknown(j, {"name", "character_notes", "baseline_motivation", "baseline_physio"}, "", code);
    PersonalityProfile p;
    if (j.contains("name"))
        p.name = string_at(j["name"], "name", code);
    if (j.contains("character_notes"))
        p.character_notes = string_at(j["character_notes"], "character_notes", code);
    if (j.contains("baseline_motivation"))
        p.baseline_motivation = motivation_from_json(j["baseline_motivation"], "baseline_motivation");
    if (j.contains("baseline_physio"))
        p.baseline_physio = physio_from_json(j["baseline_physio"], "baseline_physio");
    validate_profile(p);
    return p;
}

PersonalityProfile load_persona(std::string_view document)
{
    return persona_from_json(detail::parse_json(document));
}

PersonalityProfile load_persona_file(const std::string& path)
{
    return detail::load_from_file(path, ErrorCode::io_error, [](const std::string& t) { return load_persona(t); });
}

} // namespace ctem
