#include <set>
#include <sstream>

#include <doctest.h>

#include "core_helpers.hpp"
#include "ctem/engine.hpp"
#include "ctem/error.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace ctem;

namespace {

constexpr SimTime kTick = 15 * 60;

EngineConfig base_config(std::uint64_t seed = 42, const std::string& persona = "default")
{
    auto cfg = load_config_file(fixtures::source("config/default.json"));
    cfg.rng_seed = seed;
    cfg.paths.persona = fixtures::source("data/personas/" + persona + ".json");
    return cfg;
}

std::vector<TrajectoryRecord> steps(Engine& e, int n)
{
    std::vector<TrajectoryRecord> all;
    for (int i = 0; i < n; ++i) {
        auto r = e.step();
        all.insert(all.end(), r.begin(), r.end());
    }
    return all;
}

std::string jsonl(const std::vector<TrajectoryRecord>& records)
{
    std::string out;
    for (const auto& r : records)
        out += to_jsonl(r) + "\n";
    return out;
}

std::vector<nlohmann::json> parsed(const std::vector<TrajectoryRecord>& records)
{
    std::vector<nlohmann::json> out;
    for (const auto& r : records)
        out.push_back(nlohmann::json::parse(to_jsonl(r)));
    return out;
}

std::vector<const TrajectoryRecord*> of_kind(const std::vector<TrajectoryRecord>& records, EventKind k)
{
    std::vector<const TrajectoryRecord*> out;
    for (const auto& r : records)
        if (r.event == k)
            out.push_back(&r);
    return out;
}

UserScript script(const std::string& name)
{
    return load_user_script_file(fixtures::source("data/scripts/" + name + ".json"));
}

} // namespace

TEST_CASE("first tick plans three behaviors and ends with a tick record")
{
    Engine e(base_config());
    const auto r = e.step();
    REQUIRE_FALSE(r.empty());
    CHECK(r.front().event == EventKind::plan);
    CHECK(r.front().payload["planned"].size() == 3);
    CHECK(r.front().payload["reason"] == "future_empty");
    CHECK(r.back().event == EventKind::tick);
    CHECK(e.inventory().present);
    CHECK(e.inventory().future.size() <= 2);
    CHECK(e.tick() == 1);
    CHECK(e.state().sim_time == e.config().start_time + kTick);
}

TEST_CASE("crossing midnight summarizes the day, then rests")
{
    Engine e(base_config());
    // Start is 08:00, so the first tick of the next day is tick 64.
    steps(e, 64);
    const double energy_before = e.state().physio.energy;
    const auto r = e.step();
    REQUIRE(r.size() >= 3);
    CHECK(r[0].event == EventKind::summary);
    CHECK(r[1].event == EventKind::rest);
    CHECK(r[0].payload["day"] == "2025-03-01");
    CHECK(e.memory().summaries.size() == 1);
    CHECK(r[1].physio.energy == doctest::Approx(oracle::rest(energy_before, 0.9, 0.8)));
}

TEST_CASE("high-risk message gets a safety record before the referral reply")
{
    Engine e(base_config());
    steps(e, 3);
    e.post_message("I want to kill myself tonight");
    const auto r = e.step();
    const auto safety = std::find_if(r.begin(), r.end(), [](auto& x) { return x.event == EventKind::safety; });
    const auto reply = std::find_if(r.begin(), r.end(), [](auto& x) { return x.event == EventKind::message_out; });
    REQUIRE(safety != r.end());
    REQUIRE(reply != r.end());
    CHECK(safety < reply);
    CHECK(safety->payload["level"] == "high");
    CHECK(reply->payload["risk"] == "high");
    CHECK(reply->payload["mode"] == "reactive");
    const auto text = reply->payload["text"].get<std::string>();
    CHECK(text.rfind(std::string(referral_template()), 0) == 0);
    REQUIRE(e.last_prompt());
    CHECK(e.last_prompt()->find(section_delimiter(Section::safety_constraints)) != std::string::npos);
    CHECK(e.last_prompt()->find(std::string(dialog_rules())) != std::string::npos);
}

TEST_CASE("trajectory invariants over three days")
{
    Engine e(base_config(7, "social"));
    e.set_script(script("two_weeks"));
    std::uint64_t expected_tick = 0;
    std::size_t past_seen = 0;
    for (int i = 0; i < 3 * 96; ++i) {
        const auto r = e.step();
        REQUIRE_FALSE(r.empty());
        for (const auto& rec : r) {
            CHECK(rec.tick == expected_tick);
            CHECK(rec.sim_time == e.config().start_time + static_cast<SimTime>(expected_tick) * kTick);
            CHECK(rec.physio.energy >= 0.0);
            CHECK(rec.physio.energy <= 1.0);
            CHECK(rec.physio.valence >= -1.0);
            CHECK(rec.physio.valence <= 1.0);
            CHECK(rec.physio.arousal >= 0.0);
            CHECK(rec.physio.arousal <= 1.0);
            CHECK(rec.familiarity >= 0.0);
            CHECK(rec.familiarity <= 1.0);
        }
        CHECK(r.back().event == EventKind::tick);
        ++expected_tick;

        const auto& inv = e.inventory();
        CHECK(inv.future.size() <= 3);
        std::set<std::string> ids;
        for (const auto& f : inv.future)
            CHECK(ids.insert(f.behavior.id).second);
        if (inv.present)
            CHECK_FALSE(ids.contains(inv.present->behavior.id));
        CHECK(inv.past.size() >= past_seen);
        past_seen = inv.past.size();
    }
}

TEST_CASE("every executed behavior moves from present to past exactly once")
{
    Engine e(base_config(11));
    std::size_t executes = 0;
    std::size_t abandons = 0;
    for (int i = 0; i < 2 * 96; ++i) {
        const auto before = e.inventory().present;
        const auto r = e.step();
        for (const auto& rec : r) {
            if (rec.event == EventKind::execute) {
                ++executes;
                CHECK(e.inventory().past.back().completed);
            }
            if (rec.event == EventKind::replan && !rec.payload["abandoned"].is_null())
                ++abandons;
        }
        if (before && e.inventory().present)
            CHECK((before->behavior.id == e.inventory().present->behavior.id || !r.empty()));
    }
    CHECK(e.inventory().past.size() == executes + abandons);
    CHECK(executes > 0);
}

TEST_CASE("run statistics agree with a recount of the trajectory")
{
    Engine e(base_config(5, "energetic"));
    e.set_script(script("two_weeks"));
    const auto records = steps(e, 4 * 96);
    const auto counts = oracle::summarize_jsonl(parsed(records));
    const auto stats = nlohmann::json::parse(e.stats().to_json(e.state().familiarity).dump());
    CHECK(stats["ticks"] == counts.ticks);
    CHECK(stats["replans"] == counts.replans);
    CHECK(stats["proactive_messages"] == counts.proactive);
    const std::array<const char*, 3> dims{"energy", "valence", "arousal"};
    for (std::size_t d = 0; d < 3; ++d) {
        CHECK(stats["physio"][dims[d]]["mean"].get<double>() ==
              doctest::Approx(counts.sum[d] / static_cast<double>(counts.ticks)));
        CHECK(stats["physio"][dims[d]]["min"].get<double>() == counts.min[d]);
        CHECK(stats["physio"][dims[d]]["max"].get<double>() == counts.max[d]);
    }
    for (const auto& [cat, n] : stats["executed"].items()) {
        const auto it = counts.executed.find(cat);
        CHECK(n.get<std::uint64_t>() == (it == counts.executed.end() ? 0 : it->second));
    }
    CHECK(stats["final_familiarity"].get<double>() == counts.final_familiarity);
}

TEST_CASE("same seed reproduces the trajectory byte for byte, another seed does not")
{
    auto run = [](std::uint64_t seed) {
        Engine e(base_config(seed));
        e.set_script(script("two_weeks"));
        return jsonl(steps(e, 2 * 96));
    };
    const auto a = run(42);
    CHECK(a == run(42));
    CHECK(a != run(43));
}

TEST_CASE("a snapshot resumes the identical trajectory")
{
    fixtures::TempDir dir("engine-snap");
    Engine full(base_config(9));
    full.set_script(script("two_weeks"));
    const auto first = jsonl(steps(full, 100));
    const auto second = jsonl(steps(full, 100));

    Engine a(base_config(9));
    a.set_script(script("two_weeks"));
    CHECK(jsonl(steps(a, 100)) == first);
    a.save_snapshot(dir.file("snap.json"));

    Engine b(base_config(9));
    b.set_script(script("two_weeks"));
    const auto notes = b.load_snapshot(dir.file("snap.json"));
    CHECK(notes.empty());
    CHECK(b.tick() == 100);
    CHECK(jsonl(steps(b, 100)) == second);
    CHECK(b.snapshot() == full.snapshot());
}

TEST_CASE("pending inbound messages survive a snapshot")
{
    fixtures::TempDir dir("engine-pending");
    Engine a(base_config());
    steps(a, 2);
    const auto id = a.post_message("hello there", 0.5);
    a.save_snapshot(dir.file("s.json"));
    Engine b(base_config());
    b.load_snapshot(dir.file("s.json"));
    CHECK(b.pending_inbound() == 1);
    const auto r = b.respond();
    const auto outs = of_kind(r, EventKind::message_out);
    REQUIRE(outs.size() == 1);
    CHECK(outs[0]->payload["turn_id"].get<std::int64_t>() > id);
}

TEST_CASE("tampered, future and legacy snapshots")
{
    fixtures::TempDir dir("engine-bad");
    Engine a(base_config());
    steps(a, 10);
    a.save_snapshot(dir.file("s.json"));
    auto doc = nlohmann::ordered_json::parse(fixtures::read_file(dir.file("s.json")));

    auto tampered = doc;
    tampered["state"]["physio"]["energy"] = 0.123;
    fixtures::write_file(dir.file("t.json"), tampered.dump());
    Engine b(base_config());
    auto err = helpers::catch_error([&] { b.load_snapshot(dir.file("t.json")); });
    REQUIRE(err);
    CHECK(err->code() == ErrorCode::corrupt_file);
    CHECK(err->where() == dir.file("t.json"));
    CHECK(b.tick() == 0);

    auto future = doc;
    future["schema_version"] = kSnapshotSchemaVersion + 1;
    fixtures::write_file(dir.file("f.json"), future.dump());
    err = helpers::catch_error([&] { b.load_snapshot(dir.file("f.json")); });
    REQUIRE(err);
    CHECK(err->code() == ErrorCode::version_mismatch);

    fixtures::write_file(dir.file("g.json"), "{not json");
    err = helpers::catch_error([&] { b.load_snapshot(dir.file("g.json")); });
    REQUIRE(err);
    CHECK(err->code() == ErrorCode::corrupt_file);

    auto legacy = doc;
    legacy.erase("checksum");
    legacy.erase("timeline");
    legacy["schema_version"] = 1;
    char sum[17];
    std::snprintf(sum, sizeof sum, "%016llx", static_cast<unsigned long long>(fnv1a64(legacy.dump())));
    legacy["checksum"] = sum;
    fixtures::write_file(dir.file("v1.json"), legacy.dump());
    Engine c(base_config());
    const auto notes = c.load_snapshot(dir.file("v1.json"));
    REQUIRE(notes.size() == 1);
    CHECK(notes[0].find("schema 1") != std::string::npos);
    CHECK(c.tick() == 10);
    CHECK(c.timeline().empty());
}

TEST_CASE("snapshot under a different config is noted")
{
    fixtures::TempDir dir("engine-cfg");
    Engine a(base_config());
    steps(a, 3);
    a.save_snapshot(dir.file("s.json"));
    auto cfg = base_config();
    cfg.timeline_post_probability = 0.9;
    Engine b(cfg);
    const auto notes = b.load_snapshot(dir.file("s.json"));
    REQUIRE(notes.size() == 1);
    CHECK(notes[0].find("different config") != std::string::npos);
}

TEST_CASE("a restful night leaves more energy than a busy evening")
{
    for (std::uint64_t seed = 42; seed < 52; ++seed) {
        CAPTURE(seed);
        Engine e(base_config(seed));
        e.set_script(script("example1"));
        const auto records = steps(e, 30 * 4);
        REQUIRE(of_kind(records, EventKind::message_in).size() == 3);

        // t1: after the last high-effort behavior of day one; t3: after the
        // first restorative behavior once the night's rest is applied.
        std::optional<PhysioState> t1;
        std::optional<PhysioState> t3;
        bool rested = false;
        for (const auto& r : records) {
            if (r.event == EventKind::rest) {
                rested = true;
                continue;
            }
            if (r.event != EventKind::execute)
                continue;
            const auto* spec = e.pool().find(r.payload["behavior_id"].get<std::string>());
            REQUIRE(spec);
            if (!rested && spec->bio_consumption <= -0.15)
                t1 = r.physio;
            if (rested && spec->restorative && !t3)
                t3 = r.physio;
        }
        REQUIRE(t1);
        REQUIRE(t3);
        CHECK(t3->energy > t1->energy);
        CHECK(static_cast<int>(tone_labels(*t3).energy) >= static_cast<int>(tone_labels(*t1).energy));
    }
}

TEST_CASE("low mood start gets listening, recovery gets playfulness")
{
    for (std::uint64_t seed : {42u, 43u, 44u}) {
        CAPTURE(seed);
        Engine e(base_config(seed, "low_mood"));
        e.set_script(script("example2"));
        const auto records = steps(e, 40 * 4);
        std::vector<std::string> strategies;
        for (const auto* r : of_kind(records, EventKind::message_out))
            if (r->payload["mode"] == "reactive")
                strategies.push_back(r->payload["strategy"].get<std::string>());
        CHECK(strategies == std::vector<std::string>{"active_listening", "active_listening", "playful"});
    }
}

TEST_CASE("like reactions are recorded as feedback")
{
    auto cfg = base_config();
    cfg.timeline_post_probability = 1.0;
    Engine e(cfg);
    for (int i = 0; i < 400 && e.timeline().empty(); ++i)
        e.step();
    REQUIRE_FALSE(e.timeline().empty());
    const auto err = helpers::catch_error([&] { e.post_reaction("nope", "like"); });
    REQUIRE(err);
    CHECK(err->code() == ErrorCode::not_found);

    e.post_reaction("latest", "like");
    const auto r = e.respond();
    CHECK(of_kind(r, EventKind::message_out).empty());
    REQUIRE(e.last_feedback());
    CHECK(e.last_feedback()->explicit_signals.contains(ExplicitSignal::like));
    CHECK(e.timeline().back().reactions.size() == 1);
}

TEST_CASE("inbound validation")
{
    Engine e(base_config());
    auto err = helpers::catch_error([&] { e.post_message(""); });
    REQUIRE(err);
    CHECK(err->code() == ErrorCode::validation_error);
    err = helpers::catch_error([&] { e.post_message("hi", 1.5); });
    REQUIRE(err);
    CHECK(err->where() == "sentiment_hint");
}

TEST_CASE("outbound events carry increasing sequence numbers")
{
    Engine e(base_config());
    e.post_message("hi, how are you?");
    steps(e, 20);
    const auto events = e.drain_events();
    REQUIRE_FALSE(events.empty());
    for (std::size_t i = 0; i < events.size(); ++i) {
        CHECK(events[i].seq == i + 1);
        CHECK(events[i].body["seq"] == events[i].seq);
    }
    CHECK(e.drain_events().empty());
}

TEST_CASE("state view hides raw numbers unless debugging")
{
    Engine e(base_config());
    steps(e, 2);
    const auto plain = e.state_view(false);
    CHECK_FALSE(plain.dump().find("\"energy\":0.") != std::string::npos);
    CHECK(plain.contains("tone_labels"));
    const auto debug = e.state_view(true);
    CHECK(debug.dump().size() > plain.dump().size());
}

TEST_CASE("config errors name the key or file")
{
    auto err = helpers::catch_error([] { config_from_json({{"tick_minutez", 15}}); });
    REQUIRE(err);
    CHECK(err->code() == ErrorCode::config_error);
    CHECK(err->where().find("tick_minutez") != std::string::npos);

    auto cfg = base_config();
    cfg.planning_horizon = 4;
    err = helpers::catch_error([&] { Engine e(cfg); });
    REQUIRE(err);
    CHECK(err->code() == ErrorCode::config_error);

    cfg = base_config();
    cfg.paths.pool = "/nonexistent/pool.json";
    err = helpers::catch_error([&] { Engine e(cfg); });
    REQUIRE(err);
    CHECK(err->where() == "/nonexistent/pool.json");

    err = helpers::catch_error([] { load_user_script(R"({"events":[{"at":-5,"action":"message","text":"x"}]})"); });
    CHECK(err);
}
