#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace ctem {

using SimTime = std::int64_t; // seconds since epoch of the simulated clock

/// Physical vitality plus core affect. Energy and arousal live in [0,1],
/// valence in [-1,1].
struct PhysioState {
    double energy = 0.5;
    double valence = 0.0;
    double arousal = 0.5;

    bool operator==(const PhysioState&) const = default;
};

inline constexpr PhysioState kDefaultPhysio{0.5, 0.0, 0.5};

/// Projects every field onto its legal interval. NaN/Inf fields are replaced
/// by the schema default and counted in nonfinite_replacements().
PhysioState clamp_physio(PhysioState h) noexcept;

std::uint64_t nonfinite_replacements() noexcept;

enum class Drive : std::size_t {
    physiological_drive,
    pain_avoidance,
    health_preservation,
    emotional_reactivity,
    risk_aversion,
    goal_persistence,
    curiosity_drive,
    norm_adherence,
    prosocial_motivation,
    self_presentation,
    role_duty_sense,
    group_affiliation,
};

inline constexpr std::size_t kDriveCount = 12;
inline constexpr std::size_t kBioDrives = 3;
inline constexpr std::size_t kPsychoDrives = 4;
inline constexpr std::size_t kSocialDrives = 5;

std::string_view drive_name(Drive d) noexcept;
std::optional<Drive> drive_from_name(std::string_view name) noexcept;

// Twelve motivational drives in a fixed order: bio (3), psycho (4), social (5).
struct MotivationalVector {
    std::array<double, kDriveCount> values{};

    MotivationalVector() { values.fill(0.5); }

    double& operator[](Drive d) { return values[static_cast<std::size_t>(d)]; }
    double operator[](Drive d) const { return values[static_cast<std::size_t>(d)]; }

    bool operator==(const MotivationalVector&) const = default;
};

struct PersonalityProfile {
    std::string name = "default";
    std::string character_notes;
    MotivationalVector baseline_motivation;
    std::optional<PhysioState> baseline_physio;
};

struct EmotionalState {
    PhysioState physio;
    MotivationalVector motivation;
    PersonalityProfile personality;
    double familiarity = 0.0;
    SimTime sim_time = 0;
};

/// Throws Error{invalid_profile} naming the first out-of-range field.
void validate_profile(const PersonalityProfile& profile);

EmotionalState init_state(const PersonalityProfile& profile, SimTime start_time);

enum class EnergyTone { tired, steady, energetic };
enum class ValenceTone { low, neutral, positive };
enum class ArousalTone { calm, moderate, excited };

struct ToneLabels {
    EnergyTone energy;
    ValenceTone valence;
    ArousalTone arousal;

    bool operator==(const ToneLabels&) const = default;
};

struct ToneThresholds {
    double energy_low = 0.3;
    double energy_high = 0.7;
    double valence_low = -0.3;
    double valence_high = 0.3;
    double arousal_low = 0.3;
    double arousal_high = 0.7;
};

ToneLabels tone_labels(const PhysioState& h, const ToneThresholds& t = {}) noexcept;

std::string_view to_string(EnergyTone t) noexcept;
std::string_view to_string(ValenceTone t) noexcept;
std::string_view to_string(ArousalTone t) noexcept;

// JSON codecs. Parsers reject unknown keys and out-of-range values with
// Error{validation_error} (persona: invalid_profile) naming the field path.
nlohmann::json to_json(const PhysioState& h);
nlohmann::json to_json(const MotivationalVector& v);
nlohmann::json to_json(const PersonalityProfile& p);
nlohmann::json to_json(const ToneLabels& t);
PhysioState physio_from_json(const nlohmann::json& j, const std::string& path);
MotivationalVector motivation_from_json(const nlohmann::json& j, const std::string& path);
PersonalityProfile persona_from_json(const nlohmann::json& j);
PersonalityProfile load_persona(std::string_view document);
PersonalityProfile load_persona_file(const std::string& path);

} // namespace ctem
