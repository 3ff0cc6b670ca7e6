#include <cmath>
#include <limits>
#include <map>
#include <random>

#include <doctest.h>

#include "core_helpers.hpp"
#include "ctem/state.hpp"
#include "fixtures.hpp"

using namespace ctem;

namespace {

// Persona tables, transcribed.
const std::map<std::string, std::map<std::string, double>> kPersonaTables = {
    {"learner",
     {{"physiological_drive", 0.35}, {"pain_avoidance", 0.25}, {"health_preservation", 0.4},
      {"emotional_reactivity", 0.3}, {"risk_aversion", 0.3}, {"goal_persistence", 1.0}, {"curiosity_drive", 1.0},
      {"norm_adherence", 0.15}, {"prosocial_motivation", 0.06}, {"self_presentation", 0.06},
      {"role_duty_sense", 0.06}, {"group_affiliation", 0.06}}},
    {"social",
     {{"physiological_drive", 0.4}, {"pain_avoidance", 0.35}, {"health_preservation", 0.4},
      {"emotional_reactivity", 0.5}, {"risk_aversion", 0.4}, {"goal_persistence", 0.5}, {"curiosity_drive", 0.4},
      {"norm_adherence", 0.5}, {"prosocial_motivation", 1.0}, {"self_presentation", 1.0},
      {"role_duty_sense", 1.0}, {"group_affiliation", 1.0}}},
    {"energetic",
     {{"physiological_drive", 0.7}, {"pain_avoidance", 0.25}, {"health_preservation", 0.5},
      {"emotional_reactivity", 0.7}, {"risk_aversion", 0.2}, {"goal_persistence", 1.0}, {"curiosity_drive", 1.0},
      {"norm_adherence", 0.6}, {"prosocial_motivation", 0.8}, {"self_presentation", 0.8},
      {"role_duty_sense", 0.6}, {"group_affiliation", 0.8}}},
};

} // namespace

TEST_CASE("default profile initializes schema defaults")
{
    const auto s = init_state(PersonalityProfile{}, 1000);
    CHECK(s.physio == PhysioState{0.5, 0.0, 0.5});
    for (double v : s.motivation.values)
        CHECK(v == 0.5);
    CHECK(s.familiarity == 0.0);
    CHECK(s.sim_time == 1000);
}

TEST_CASE("bundled personas reproduce the transcribed tables exactly")
{
    for (const auto& [name, table] : kPersonaTables) {
        CAPTURE(name);
        const auto p = load_persona_file(fixtures::source("data/personas/" + name + ".json"));
        const auto s = init_state(p, 0);
        REQUIRE(table.size() == kDriveCount);
        for (const auto& [drive, value] : table) {
            CAPTURE(drive);
            const auto d = drive_from_name(drive);
            REQUIRE(d);
            CHECK(s.motivation[*d] == value);
        }
        CHECK(s.physio == kDefaultPhysio);
    }
    const auto learner = init_state(load_persona_file(fixtures::source("data/personas/learner.json")), 0);
    CHECK(learner.motivation[Drive::goal_persistence] == 1.0);
    CHECK(learner.motivation[Drive::prosocial_motivation] == 0.06);
}

TEST_CASE("persona baseline_physio is used when present")
{
    const auto p = load_persona(R"({"name":"x","baseline_physio":{"energy":0.3,"valence":-0.5,"arousal":0.2}})");
    const auto s = init_state(p, 0);
    CHECK(s.physio == PhysioState{0.3, -0.5, 0.2});
}

TEST_CASE("out-of-range drive is an invalid profile naming the field")
{
    const auto err = helpers::catch_error(
        [] { load_persona(R"({"name":"x","baseline_motivation":{"pain_avoidance":1.3}})"); });
    REQUIRE(err);
    CHECK(err->code() == ErrorCode::invalid_profile);
    CHECK(err->where().find("pain_avoidance") != std::string::npos);

    PersonalityProfile p;
    p.baseline_motivation[Drive::pain_avoidance] = 1.3;
    const auto err2 = helpers::catch_error([&] { init_state(p, 0); });
    REQUIRE(err2);
    CHECK(err2->code() == ErrorCode::invalid_profile);
}

TEST_CASE("persona documents reject unknown keys")
{
    CHECK(helpers::catch_error([] { load_persona(R"({"name":"x","mood":1})"); }));
    CHECK(helpers::catch_error([] { load_persona(R"({"name":"x","baseline_motivation":{"charisma":0.5}})"); }));
}

TEST_CASE("clamp_physio projects onto legal intervals")
{
    CHECK(clamp_physio({1.2, -1.5, 0.5}) == PhysioState{1.0, -1.0, 0.5});
    CHECK(clamp_physio({0.5, 0.0, 0.5}) == PhysioState{0.5, 0.0, 0.5});
    CHECK(clamp_physio({-0.1, 2.0, 1.1}) == PhysioState{0.0, 1.0, 1.0});

    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> wide(-3.0, 3.0);
    for (int i = 0; i < 1000; ++i) {
        const PhysioState h{wide(rng), wide(rng), wide(rng)};
        const auto once = clamp_physio(h);
        CHECK(clamp_physio(once) == once);
    }
}

TEST_CASE("non-finite fields fall back to defaults and are counted")
{
    const auto before = nonfinite_replacements();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const double inf = std::numeric_limits<double>::infinity();
    const auto h = clamp_physio({nan, inf, -inf});
    CHECK(h == kDefaultPhysio);
    CHECK(nonfinite_replacements() == before + 3);
}

TEST_CASE("tone labels follow the three-band thresholds")
{
    CHECK(tone_labels({0.2, -0.5, 0.8}) == ToneLabels{EnergyTone::tired, ValenceTone::low, ArousalTone::excited});
    CHECK(tone_labels({0.5, 0.0, 0.5}) == ToneLabels{EnergyTone::steady, ValenceTone::neutral, ArousalTone::moderate});
    // Boundaries sit in the middle band.
    CHECK(tone_labels({0.3, 0.3, 0.7}) == ToneLabels{EnergyTone::steady, ValenceTone::neutral, ArousalTone::moderate});
    CHECK(tone_labels({0.7, -0.3, 0.3}) == ToneLabels{EnergyTone::steady, ValenceTone::neutral, ArousalTone::moderate});
    CHECK(tone_labels({0.71, 0.31, 0.29}) ==
          ToneLabels{EnergyTone::energetic, ValenceTone::positive, ArousalTone::calm});
}

TEST_CASE("tone labels are a pure function")
{
    std::mt19937_64 rng(9);
    for (int i = 0; i < 200; ++i) {
        const auto s = helpers::random_state(rng);
        CHECK(tone_labels(s.physio) == tone_labels(s.physio));
    }
}

TEST_CASE("clamping after every mutation keeps all fields in range")
{
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> delta(-0.7, 0.7);
    PhysioState h;
    for (int i = 0; i < 100000; ++i) {
        h = clamp_physio({h.energy + delta(rng), h.valence + delta(rng), h.arousal + delta(rng)});
        REQUIRE(h.energy >= 0.0);
        REQUIRE(h.energy <= 1.0);
        REQUIRE(h.valence >= -1.0);
        REQUIRE(h.valence <= 1.0);
        REQUIRE(h.arousal >= 0.0);
        REQUIRE(h.arousal <= 1.0);
    }
}

TEST_CASE("motivation has 12 drives grouped 3/4/5 with stable names")
{
    CHECK(kBioDrives + kPsychoDrives + kSocialDrives == kDriveCount);
    CHECK(drive_name(Drive::physiological_drive) == "physiological_drive");
    CHECK(drive_name(Drive::group_affiliation) == "group_affiliation");
    for (std::size_t i = 0; i < kDriveCount; ++i) {
        const auto d = static_cast<Drive>(i);
        CHECK(drive_from_name(drive_name(d)) == d);
    }
    CHECK_FALSE(drive_from_name("charisma"));
}
