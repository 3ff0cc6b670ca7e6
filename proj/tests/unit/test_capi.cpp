#include <cstring>
#include <set>
#include <sstream>
#include <thread>

#include <doctest.h>
#include <nlohmann/json.hpp>

#include "ctem/ctem.h"
#include "ctem/ctem.hpp"
#include "fixtures.hpp"

namespace {

std::string config_path()
{
    return fixtures::source("config/default.json");
}

ctem_engine* open_default()
{
    ctem_engine* e = nullptr;
    REQUIRE(ctem_engine_open(config_path().c_str(), nullptr, &e) == CTEM_OK);
    REQUIRE(e);
    return e;
}

std::string take(char* s)
{
    std::string out = s ? s : "";
    ctem_string_free(s);
    return out;
}

} // namespace

TEST_CASE("status names are stable")
{
    CHECK(std::string(ctem_status_name(CTEM_OK)) == "ok");
    CHECK(std::string(ctem_status_name(CTEM_ERR_CONFIG)) == "config-error");
    CHECK(std::string(ctem_status_name(CTEM_ERR_CORRUPT)) == "corrupt-file");
    CHECK(std::string(ctem_status_name(CTEM_ERR_CONFLICT)) == "conflict");
    CHECK(std::strlen(ctem_version()) > 0);
    CHECK(std::strlen(ctem_default_data_root()) > 0);
}

TEST_CASE("null arguments are rejected without crashing")
{
    CHECK(ctem_engine_open(nullptr, nullptr, nullptr) == CTEM_ERR_INVALID_ARGUMENT);
    CHECK(std::strlen(ctem_last_error()) > 0);
    CHECK(ctem_engine_step(nullptr, nullptr) == CTEM_ERR_INVALID_ARGUMENT);
    CHECK(ctem_engine_post_message(nullptr, "x", nullptr, nullptr) == CTEM_ERR_INVALID_ARGUMENT);
    ctem_engine* e = open_default();
    CHECK(ctem_engine_post_message(e, nullptr, nullptr, nullptr) == CTEM_ERR_INVALID_ARGUMENT);
    CHECK(ctem_engine_load_snapshot(e, nullptr, nullptr) == CTEM_ERR_INVALID_ARGUMENT);
    ctem_engine_destroy(e);
    ctem_engine_destroy(nullptr);
}

TEST_CASE("config failures map to status codes with the offending location")
{
    ctem_engine* e = nullptr;
    CHECK(ctem_engine_open("/nonexistent/config.json", nullptr, &e) != CTEM_OK);
    CHECK(e == nullptr);

    CHECK(ctem_engine_open(config_path().c_str(), R"({"tick_minutez": 5})", &e) == CTEM_ERR_CONFIG);
    CHECK(std::string(ctem_last_error_where()).find("tick_minutez") != std::string::npos);

    CHECK(ctem_engine_open(config_path().c_str(), R"({"paths": {"pool": "/nonexistent/p.json"}})", &e) ==
          CTEM_ERR_CONFIG);
    CHECK(std::string(ctem_last_error_where()) == "/nonexistent/p.json");

    CHECK(ctem_engine_open(config_path().c_str(), "{broken", &e) == CTEM_ERR_CONFIG);
    CHECK(std::string(ctem_last_error_where()) == "<overrides>");
}

TEST_CASE("built-in defaults open without a config file")
{
    ctem_engine* e = nullptr;
    REQUIRE(ctem_engine_open(nullptr, nullptr, &e) == CTEM_OK);
    char* out = nullptr;
    REQUIRE(ctem_engine_step(e, &out) == CTEM_OK);
    const auto text = take(out);
    CHECK(text.find("\"event\":\"tick\"") != std::string::npos);
    CHECK(ctem_engine_tick(e) == 1);
    ctem_engine_destroy(e);
}

TEST_CASE("stepping returns JSONL and advances the clock")
{
    ctem_engine* e = open_default();
    const auto t0 = ctem_engine_sim_time(e);
    char* out = nullptr;
    REQUIRE(ctem_engine_step(e, &out) == CTEM_OK);
    std::istringstream in(take(out));
    std::string line;
    int lines = 0;
    while (std::getline(in, line)) {
        const auto j = nlohmann::json::parse(line);
        CHECK(j["tick"] == 0);
        ++lines;
    }
    CHECK(lines >= 2);
    CHECK(ctem_engine_sim_time(e) == t0 + 900);
    REQUIRE(ctem_engine_step(e, nullptr) == CTEM_OK);
    CHECK(ctem_engine_tick(e) == 2);
    ctem_engine_destroy(e);
}

TEST_CASE("messages, events, state and persona through the C layer")
{
    ctem_engine* e = open_default();
    const double hint = 0.5;
    std::int64_t id = 0;
    REQUIRE(ctem_engine_post_message(e, "Hello! How are you?", &hint, &id) == CTEM_OK);
    CHECK(id > 0);
    CHECK(ctem_engine_pending_inbound(e) == 1);
    CHECK(ctem_engine_post_message(e, "bad", nullptr, nullptr) == CTEM_OK);
    const double bad = 3.0;
    CHECK(ctem_engine_post_message(e, "x", &bad, nullptr) == CTEM_ERR_VALIDATION);
    CHECK(std::string(ctem_last_error_where()) == "sentiment_hint");

    char* out = nullptr;
    REQUIRE(ctem_engine_respond(e, &out) == CTEM_OK);
    CHECK(take(out).find("message_out") != std::string::npos);
    REQUIRE(ctem_engine_drain_events(e, &out) == CTEM_OK);
    const auto events = nlohmann::json::parse(take(out));
    REQUIRE(events.is_array());
    bool saw_reply = false;
    for (const auto& ev : events)
        saw_reply = saw_reply || ev["type"] == "agent_message";
    CHECK(saw_reply);

    REQUIRE(ctem_engine_state_json(e, 0, &out) == CTEM_OK);
    CHECK(nlohmann::json::parse(take(out)).contains("tone_labels"));
    REQUIRE(ctem_engine_timeline_json(e, &out) == CTEM_OK);
    CHECK(nlohmann::json::parse(take(out)).is_array());
    REQUIRE(ctem_engine_summary_json(e, &out) == CTEM_OK);
    CHECK(nlohmann::json::parse(take(out)).contains("ticks"));

    REQUIRE(ctem_engine_persona_json(e, &out) == CTEM_OK);
    auto persona = nlohmann::json::parse(take(out));
    persona["character_notes"] = "gentle";
    CHECK(ctem_engine_set_persona_json(e, persona.dump().c_str()) == CTEM_OK);
    persona["baseline_motivation"]["curiosity_drive"] = 2.0;
    CHECK(ctem_engine_set_persona_json(e, persona.dump().c_str()) == CTEM_ERR_VALIDATION);
    CHECK(std::string(ctem_last_error_where()).find("curiosity_drive") != std::string::npos);

    CHECK(ctem_engine_post_reaction(e, "p999", "like", nullptr) == CTEM_ERR_NOT_FOUND);
    ctem_engine_destroy(e);
}

TEST_CASE("snapshots round trip and report corruption")
{
    fixtures::TempDir dir("capi");
    ctem_engine* a = open_default();
    for (int i = 0; i < 20; ++i)
        REQUIRE(ctem_engine_step(a, nullptr) == CTEM_OK);
    REQUIRE(ctem_engine_save_snapshot(a, dir.file("s.json").c_str()) == CTEM_OK);

    ctem_engine* b = open_default();
    char* notes = nullptr;
    REQUIRE(ctem_engine_load_snapshot(b, dir.file("s.json").c_str(), &notes) == CTEM_OK);
    CHECK(take(notes).empty());
    CHECK(ctem_engine_tick(b) == 20);
    char* ra = nullptr;
    char* rb = nullptr;
    REQUIRE(ctem_engine_step(a, &ra) == CTEM_OK);
    REQUIRE(ctem_engine_step(b, &rb) == CTEM_OK);
    CHECK(take(ra) == take(rb));

    auto text = fixtures::read_file(dir.file("s.json"));
    text[text.find("\"tick\"") + 8] = '9';
    fixtures::write_file(dir.file("bad.json"), text);
    CHECK(ctem_engine_load_snapshot(b, dir.file("bad.json").c_str(), nullptr) == CTEM_ERR_CORRUPT);
    CHECK(std::string(ctem_last_error_where()) == dir.file("bad.json"));
    CHECK(ctem_engine_load_snapshot(b, dir.file("missing.json").c_str(), nullptr) == CTEM_ERR_IO);
    ctem_engine_destroy(a);
    ctem_engine_destroy(b);
}

TEST_CASE("last error is per thread")
{
    ctem_engine* e = nullptr;
    CHECK(ctem_engine_open(config_path().c_str(), "{broken", &e) == CTEM_ERR_CONFIG);
    const std::string here = ctem_last_error();
    std::string there = "unset";
    std::thread t([&] { there = ctem_last_error(); });
    t.join();
    CHECK_FALSE(here.empty());
    CHECK(there.empty());
}

TEST_CASE("messages can be posted while another thread steps")
{
    ctem_engine* e = open_default();
    std::thread stepper([&] {
        for (int i = 0; i < 200; ++i)
            ctem_engine_step(e, nullptr);
    });
    std::vector<std::int64_t> ids;
    for (int i = 0; i < 100; ++i) {
        std::int64_t id = 0;
        REQUIRE(ctem_engine_post_message(e, "ping", nullptr, &id) == CTEM_OK);
        ids.push_back(id);
    }
    stepper.join();
    CHECK(std::set<std::int64_t>(ids.begin(), ids.end()).size() == ids.size());
    ctem_engine_destroy(e);
}

TEST_CASE("C++ wrapper raises failures with status and location")
{
    ctem::api::Engine e(config_path());
    e.step();
    try {
        e.load_snapshot("/nonexistent/snap.json");
        FAIL("expected failure");
    } catch (const ctem::api::Failure& f) {
        CHECK(f.status() == CTEM_ERR_IO);
    }
}
