#include <cmath>
#include <map>
#include <random>
#include <set>

#include <doctest.h>

#include "core_helpers.hpp"
#include "ctem/behavior.hpp"
#include "ctem/memory.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace ctem;

namespace {

double oracle_score_of(const BehaviorSpec& b, const EmotionalState& s)
{
    return oracle::score(to_json(s.motivation), to_json(b.embedding), s.physio.energy, b.bio_require);
}

BehaviorSpec uniform_behavior(const std::string& id, double embed)
{
    BehaviorSpec b;
    b.id = id;
    b.label = id;
    b.embedding.values.fill(embed);
    return b;
}

} // namespace

TEST_CASE("modulation weight matches the logistic oracle")
{
    CHECK(modulation_weight(0.5) == 0.5);
    CHECK(modulation_weight(0.0) == doctest::Approx(oracle::weight(0.0)).epsilon(1e-15));
    CHECK(modulation_weight(1.0) == doctest::Approx(oracle::weight(1.0)).epsilon(1e-15));
    CHECK(modulation_weight(0.0) == doctest::Approx(0.9820).epsilon(1e-4));
    CHECK(modulation_weight(1.0) == doctest::Approx(0.0180).epsilon(1e-2));
    for (int i = 0; i <= 100; ++i) {
        const double e = i / 100.0;
        CHECK(modulation_weight(e) == doctest::Approx(oracle::weight(e)).epsilon(1e-15));
        if (i > 0)
            CHECK(modulation_weight(e) < modulation_weight((i - 1) / 100.0));
    }
    ScoringParams steep{12.0, 0.5};
    CHECK(modulation_weight(0.2, steep) == doctest::Approx(oracle::weight(0.2, 12.0)));
}

TEST_CASE("uniform vectors score 0.25 at mid energy")
{
    EmotionalState s;
    s.physio.energy = 0.5;
    const auto scored = score_behavior(uniform_behavior("a", 0.5), s);
    CHECK(scored.score == doctest::Approx(0.25));
}

TEST_CASE("energy below bio_require gives the ineligible sentinel")
{
    EmotionalState s;
    s.physio.energy = 0.05;
    BehaviorSpec b = uniform_behavior("a", 0.5);
    CHECK(b.bio_require == 0.1);
    CHECK(b.bio_consumption == -0.1);
    CHECK(score_behavior(b, s).score == kIneligibleScore);
}

TEST_CASE("social persona against a fully social behavior matches the oracle")
{
    const auto p = load_persona_file(fixtures::source("data/personas/social.json"));
    auto s = init_state(p, 0);
    s.physio.energy = 0.9;
    BehaviorSpec b = uniform_behavior("social_all", 0.0);
    for (std::size_t i = kBioDrives + kPsychoDrives; i < kDriveCount; ++i)
        b.embedding.values[i] = 1.0;
    const double got = score_behavior(b, s).score;
    CHECK(got == oracle_score_of(b, s));
    // Only the psycho+social term contributes: social drives sum to 4.5 over 9 dims.
    CHECK(got == doctest::Approx((1.0 - oracle::weight(0.9)) * 4.5 / 9.0));
}

TEST_CASE("scores equal the brute-force oracle bit for bit on random instances")
{
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 200; ++trial) {
        const auto s = helpers::random_state(rng);
        const std::size_t n = 1 + rng() % 50;
        std::vector<std::pair<std::string, double>> expected;
        std::vector<std::pair<std::string, double>> actual;
        for (std::size_t i = 0; i < n; ++i) {
            const auto b = helpers::random_behavior(rng, "b" + std::to_string(i));
            expected.emplace_back(b.id, oracle_score_of(b, s));
            actual.emplace_back(b.id, score_behavior(b, s).score);
            REQUIRE(actual.back().second == expected.back().second);
        }
        CHECK(oracle::rank(actual) == oracle::rank(expected));
    }
}

TEST_CASE("plan_future takes the top three eligible ids by score then id")
{
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 50; ++trial) {
        BehaviorPool pool;
        for (int i = 0; i < 10; ++i)
            pool.behaviors.push_back(helpers::random_behavior(rng, "b" + std::to_string(i)));
        auto s = helpers::random_state(rng);
        s.physio.energy = 0.7;
        std::vector<std::pair<std::string, double>> eligible;
        for (const auto& b : pool.behaviors) {
            const double sc = oracle_score_of(b, s);
            if (sc >= 0.0)
                eligible.emplace_back(b.id, sc);
        }
        auto ranked = oracle::rank(eligible);
        if (ranked.size() > 3)
            ranked.resize(3);
        const auto inv = plan_future(pool, s, {});
        std::vector<std::string> got;
        for (const auto& f : inv.future)
            got.push_back(f.behavior.id);
        CHECK(got == ranked);
        CHECK(inv.future.size() <= kPlanningHorizon);
    }
}

TEST_CASE("plan_future ties break by id")
{
    BehaviorPool pool;
    for (const char* id : {"d", "b", "c", "a"})
        pool.behaviors.push_back(uniform_behavior(id, 0.5));
    EmotionalState s;
    const auto inv = plan_future(pool, s, {});
    REQUIRE(inv.future.size() == 3);
    CHECK(inv.future[0].behavior.id == "a");
    CHECK(inv.future[1].behavior.id == "b");
    CHECK(inv.future[2].behavior.id == "c");
}

TEST_CASE("plan_future with fewer eligible behaviors than the horizon")
{
    BehaviorPool pool;
    pool.behaviors.push_back(uniform_behavior("a", 0.5));
    pool.behaviors.push_back(uniform_behavior("b", 0.5));
    auto hard = uniform_behavior("c", 0.9);
    hard.bio_require = 0.95;
    pool.behaviors.push_back(hard);
    EmotionalState s;
    CHECK(plan_future(pool, s, {}).future.size() == 2);
}

TEST_CASE("plan_future raises empty-pool when nothing is affordable")
{
    BehaviorPool pool;
    for (const char* id : {"a", "b"}) {
        auto b = uniform_behavior(id, 0.5);
        b.bio_require = 0.8;
        pool.behaviors.push_back(b);
    }
    EmotionalState s;
    s.physio.energy = 0.3;
    const auto err = helpers::catch_error([&] { plan_future(pool, s, {}); });
    REQUIRE(err);
    CHECK(err->code() == ErrorCode::empty_pool);
}

TEST_CASE("softmax of (1, 0) at unit temperature")
{
    std::vector<ScoredBehavior> c(2);
    c[0].score = 1.0;
    c[1].score = 0.0;
    const auto p = softmax_probabilities(c);
    const double e = std::exp(1.0);
    CHECK(p[0] == doctest::Approx(e / (e + 1.0)).epsilon(1e-15));
    CHECK(p[1] == doctest::Approx(1.0 / (e + 1.0)).epsilon(1e-15));
    CHECK(p[0] == doctest::Approx(0.731).epsilon(1e-3));
    const auto o = oracle::softmax({1.0, 0.0});
    CHECK(p[0] == doctest::Approx(o[0]));
    const auto p2 = softmax_probabilities(c, 0.5);
    CHECK(p2[0] == doctest::Approx(oracle::softmax({1.0, 0.0}, 0.5)[0]));
}

TEST_CASE("select_present consumes exactly one draw and honours single candidates")
{
    RandomStream rng(1, "selection");
    std::vector<ScoredBehavior> one(1);
    one[0].behavior.id = "only";
    one[0].score = 0.3;
    for (int i = 0; i < 100; ++i) {
        const auto before = rng.cursor();
        CHECK(select_present(one, rng).behavior.id == "only");
        CHECK(rng.cursor() == before + 1);
    }
    std::vector<ScoredBehavior> none;
    const auto err = helpers::catch_error([&] { select_present(none, rng); });
    REQUIRE(err);
    CHECK(err->code() == ErrorCode::no_candidates);
}

TEST_CASE("select_present frequencies match softmax (chi-square)")
{
    const std::vector<std::vector<double>> fixtures = {{0.3, 0.3, 0.3, 0.3}, {1.0, 0.0}, {0.9, 0.5, 0.2}};
    for (std::size_t f = 0; f < fixtures.size(); ++f) {
        std::vector<ScoredBehavior> c(fixtures[f].size());
        for (std::size_t i = 0; i < c.size(); ++i) {
            c[i].behavior.id = "c" + std::to_string(i);
            c[i].score = fixtures[f][i];
        }
        RandomStream rng(100 + f, "selection");
        std::map<std::string, double> counts;
        const int draws = 10000;
        for (int i = 0; i < draws; ++i)
            counts[select_present(c, rng).behavior.id] += 1;
        const auto target = oracle::softmax(fixtures[f]);
        std::vector<double> obs, exp;
        for (std::size_t i = 0; i < c.size(); ++i) {
            obs.push_back(counts[c[i].behavior.id]);
            exp.push_back(target[i] * draws);
        }
        CAPTURE(f);
        CHECK(oracle::chi_square_p(obs, exp) > 0.01);
    }
}

TEST_CASE("present_valid checks affordability and the threshold")
{
    EmotionalState s;
    s.physio.energy = 0.05;
    auto b = score_behavior(uniform_behavior("a", 0.5), s);
    CHECK_FALSE(present_valid(b, s));

    // Score 0.10: uniform drives 0.5 against uniform embedding 0.2 at mid energy.
    s.physio.energy = 0.5;
    auto low = uniform_behavior("low", 0.2);
    CHECK(score_behavior(low, s).score == doctest::Approx(0.10));
    CHECK_FALSE(present_valid(score_behavior(low, s), s, 0.15));

    s.physio.energy = 0.9;
    auto good = uniform_behavior("good", 0.8);
    CHECK(score_behavior(good, s).score == doctest::Approx(0.4));
    CHECK(present_valid(score_behavior(good, s), s, 0.15));
}

TEST_CASE("filter_redundant drops same-day repeats and keeps older ones")
{
    const SimTime now = 1740816000 + 14 * 3600; // 22:00 on the start day
    std::vector<ScoredBehavior> cands(3);
    cands[0].behavior.id = "x";
    cands[1].behavior.id = "y";
    cands[2].behavior.id = "z";

    std::vector<PastEntry> past(2);
    past[0].entry.behavior.id = "x";
    past[0].executed_at = now - 2 * 3600;
    past[1].entry.behavior.id = "y";
    past[1].executed_at = now - 24 * 3600;

    const auto kept = filter_redundant(cands, past, now);
    REQUIRE(kept.size() == 2);
    CHECK(kept[0].behavior.id == "y");
    CHECK(kept[1].behavior.id == "z");

    CHECK(filter_redundant(cands, {}, now).size() == 3);

    RedundancyWindow trailing{3600, 0};
    CHECK(filter_redundant(cands, past, now, trailing).size() == 3);
    RedundancyWindow wide{3 * 86400, 0};
    CHECK(filter_redundant(cands, past, now, wide).size() == 1);
}

TEST_CASE("energy sweep flips the argmax from bio to social exactly once")
{
    EmotionalState s;
    BehaviorSpec bio = uniform_behavior("bio", 0.0);
    BehaviorSpec soc = uniform_behavior("soc", 0.0);
    bio.bio_require = 0.0;
    soc.bio_require = 0.0;
    for (std::size_t i = 0; i < kBioDrives; ++i)
        bio.embedding.values[i] = 1.0;
    for (std::size_t i = kBioDrives; i < kDriveCount; ++i)
        soc.embedding.values[i] = 1.0;
    int crossings = 0;
    std::string prev;
    for (int i = 0; i <= 1000; ++i) {
        s.physio.energy = i / 1000.0;
        const double a = score_behavior(bio, s).score;
        const double b = score_behavior(soc, s).score;
        const std::string best = a > b ? "bio" : (b > a ? "soc" : prev);
        if (i == 0)
            CHECK(best == "bio");
        if (!prev.empty() && best != prev)
            ++crossings;
        prev = best;
    }
    CHECK(prev == "soc");
    CHECK(crossings == 1);
}

TEST_CASE("bundled pool loads with every category")
{
    const auto pool = load_pool_file(fixtures::source("data/pool/default_pool.json"));
    CHECK(pool.behaviors.size() >= 30);
    std::set<Category> cats;
    std::set<std::string> ids;
    for (const auto& b : pool.behaviors) {
        cats.insert(b.category);
        ids.insert(b.id);
    }
    CHECK(cats.size() == kCategoryCount);
    CHECK(ids.size() == pool.behaviors.size());
}

TEST_CASE("pool validation names the offending id or field")
{
    BehaviorPool pool;
    pool.behaviors.push_back(uniform_behavior("dup", 0.5));
    pool.behaviors.push_back(uniform_behavior("dup", 0.5));
    const auto dup = helpers::catch_error([&] { load_pool(to_json(pool).dump()); });
    REQUIRE(dup);
    CHECK(dup->code() == ErrorCode::validation_error);
    CHECK(std::string(dup->what()).find("dup") != std::string::npos);

    pool.behaviors.pop_back();
    pool.behaviors[0].bio_consumption = 2.0;
    const auto range = helpers::catch_error([&] { load_pool(to_json(pool).dump()); });
    REQUIRE(range);
    CHECK(range->code() == ErrorCode::validation_error);
    CHECK(range->where().find("bio_consumption") != std::string::npos);

    const auto parse = helpers::catch_error([] { load_pool("{not json"); });
    REQUIRE(parse);
    CHECK(parse->code() == ErrorCode::parse_error);
}
