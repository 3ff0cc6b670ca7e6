#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>

namespace ctem {

/// Text generation backend. Implementations throw Error{generator_unavailable}
/// when they cannot produce output within their latency budget.
class TextGenerator {
public:
    virtual ~TextGenerator() = default;
    virtual std::string generate(std::string_view prompt, std::size_t max_length) = 0;
};

// Prompts may carry a pre-rendered draft between these markers. The scripted
// generator returns the draft verbatim; a model is asked to polish it.
inline constexpr std::string_view kDraftBegin = "<<DRAFT>>";
inline constexpr std::string_view kDraftEnd = "<</DRAFT>>";

std::string wrap_draft(std::string_view draft);

/// Deterministic stand-in for a foundation model: output is a pure function
/// of (prompt hash, seed). Optional latency simulates a slow backend without
/// changing the output.
class ScriptedGenerator final : public TextGenerator {
public:
    explicit ScriptedGenerator(std::uint64_t seed, std::chrono::milliseconds latency = {});

    std::string generate(std::string_view prompt, std::size_t max_length) override;

    std::uint64_t calls() const noexcept { return calls_; }

private:
    std::uint64_t seed_;
    std::chrono::milliseconds latency_;
    std::uint64_t calls_ = 0;
};

struct RemoteGeneratorOptions {
    std::string url;   // e.g. https://host/v1/chat/completions
    std::string key;
    std::string model = "default";
    std::chrono::milliseconds timeout{20000};
};

/// JSON-over-HTTP chat-completion client.
class RemoteGenerator final : public TextGenerator {
public:
    explicit RemoteGenerator(RemoteGeneratorOptions options);

    /// Reads CTEM_GENERATOR_URL / CTEM_GENERATOR_KEY.
    static RemoteGeneratorOptions options_from_env();

    std::string generate(std::string_view prompt, std::size_t max_length) override;

    /// Request body sent for a prompt (exposed for wire-format tests).
    static std::string request_body(std::string_view model, std::string_view prompt,
                                    std::size_t max_length);
    /// Extracts choices[0].message.content; throws generator_unavailable.
    static std::string parse_response(std::string_view body);

private:
    RemoteGeneratorOptions options_;
};

} // namespace ctem
