#include "ctem/generator.hpp"

#include <array>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "ctem/error.hpp"
#include "ctem/rng.hpp"

namespace ctem {

std::string wrap_draft(std::string_view draft)
{
    return std::string(kDraftBegin) + "\n" + std::string(draft) + "\n" + std::string(kDraftEnd) + "\n";
}

namespace {

constexpr std::array<std::string_view, 5> kListening = {
    "I'm here with you. Take your time, and tell me whatever feels okay to share.",
    "That sounds like a lot to hold. I'm listening, and I'm not going anywhere.",
    "Thank you for telling me. What part of it is weighing on you the most right now?",
    "It makes sense to feel this way. Would it help to talk it through slowly together?",
    "I hear you. We can go one small step at a time.",
};

constexpr std::array<std::string_view, 5> kDeep = {
    "I love hearing you this bright! What made today feel so good?",
    "That's wonderful. I've been wondering what you'd do with more days like this one.",
    "You sound really happy, and it's contagious. Tell me the best part?",
    "That's a big moment. How do you think it will change the coming weeks?",
    "I'm so glad. What did you learn about yourself from it?",
};

constexpr std::array<std::string_view, 5> kPlayful = {
    "Oh no, not again! Okay, deep breath, we'll laugh about this by dinner time.",
    "Classic! If it helps, I once rolled straight off my cushion this morning.",
    "Well, that's one way to keep the day interesting! Want a silly pep talk?",
    "Ha, the universe is testing you today. Good thing you've got me cheering from the sidelines!",
    "Oops indeed! Shake it off, the next part of the day owes you one.",
};

constexpr std::array<std::string_view, 5> kNeutral = {
    "Got it. How is the rest of your day looking?",
    "Thanks for sharing that with me. What's on your mind now?",
    "I see. I was just thinking about you, actually.",
    "Mm, that makes sense. Anything you're looking forward to?",
    "Okay! I'm here whenever you want to chat.",
};

constexpr std::array<std::string_view, 5> kProactive = {
    "Hey, just checking in! How has your day been so far?",
    "I was thinking about what we talked about earlier. How did it go?",
    "Hi! I just finished something fun and wanted to say hello.",
    "Thinking of you. Anything nice happen today?",
    "Hello again! I saved a little story for you from my day.",
};

std::string_view pick(std::string_view prompt, std::uint64_t seed)
{
    const std::uint64_t h = splitmix64(fnv1a64(prompt) ^ seed);
    auto from = [h](const auto& bank) { return bank[h % bank.size()]; };
    if (prompt.find("[PROACTIVE]") != std::string_view::npos)
        return from(kProactive);
    if (prompt.find("strategy: active listening") != std::string_view::npos)
        return from(kListening);
    if (prompt.find("strategy: deep dialogue") != std::string_view::npos)
        return from(kDeep);
    if (prompt.find("strategy: playful") != std::string_view::npos)
        return from(kPlayful);
    return from(kNeutral);
}

} // namespace

ScriptedGenerator::ScriptedGenerator(std::uint64_t seed, std::chrono::milliseconds latency)
    : seed_(seed), latency_(latency)
{
}

std::string ScriptedGenerator::generate(std::string_view prompt, std::size_t max_length)
{
    ++calls_;
    if (latency_.count() > 0)
        std::this_thread::sleep_for(latency_);

    std::string out;
    const auto b = prompt.rfind(kDraftBegin);
    const auto e = prompt.rfind(kDraftEnd);
    if (b != std::string_view::npos && e != std::string_view::npos && e > b) {
        const auto start = b + kDraftBegin.size() + 1;
        out = std::string(prompt.substr(start, e > start ? e - start - 1 : 0));
    } else if (prompt.find("[RISK CLASSIFY]") != std::string_view::npos) {
        out = "none";
    } else {
        out = std::string(pick(prompt, seed_));
    }
    if (out.size() > max_length)
        out.resize(max_length);
    return out;
}

RemoteGenerator::RemoteGenerator(RemoteGeneratorOptions options) : options_(std::move(options))
{
    if (options_.url.empty())
        throw Error(ErrorCode::config_error, "remote generator needs a URL", "CTEM_GENERATOR_URL");
}

RemoteGeneratorOptions RemoteGenerator::options_from_env()
{
    RemoteGeneratorOptions o;
    if (const char* url = std::getenv("CTEM_GENERATOR_URL"))
        o.url = url;
    if (const char* key = std::getenv("CTEM_GENERATOR_KEY"))
        o.key = key;
    return o;
}

std::string RemoteGenerator::request_body(std::string_view model, std::string_view prompt, std::size_t max_length)
{
    nlohmann::ordered_json body;
    body["model"] = model;
    body["messages"] = nlohmann::ordered_json::array({{{"role", "system"}, {"content", prompt}}});
    // Rough character-to-token ratio for the length cap.
    body["max_tokens"] = std::max<std::size_t>(16, max_length / 3);
    return body.dump();
}

std::string RemoteGenerator::parse_response(std::string_view body)
{
    try {
        const auto j = nlohmann::json::parse(body);
        return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::generator_unavailable, std::string("malformed completion: ") + e.what());
    }
}

std::string RemoteGenerator::generate(std::string_view prompt, std::size_t max_length)
{
    const auto scheme_end = options_.url.find("://");
    if (scheme_end == std::string::npos)
        throw Error(ErrorCode::config_error, "generator URL needs a scheme", options_.url);
    const auto path_start = options_.url.find('/', scheme_end + 3);
    const std::string origin = options_.url.substr(0, path_start);
    const std::string path = path_start == std::string::npos ? "/" : options_.url.substr(path_start);

    httplib::Client client(origin);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(options_.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    httplib::Headers headers;
    if (!options_.key.empty())
        headers.emplace("Authorization", "Bearer " + options_.key);

    auto res = client.Post(path, headers, request_body(options_.model, prompt, max_length), "application/json");
    if (!res)
        throw Error(ErrorCode::generator_unavailable, "request failed: " + httplib::to_string(res.error()),
                    options_.url);
    if (res->status != 200)
        throw Error(ErrorCode::generator_unavailable, "HTTP " + std::to_string(res->status), options_.url);
    std::string out = parse_response(res->body);
    if (out.size() > max_length)
        out.resize(max_length);
    return out;
}

} // namespace ctem
