#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace ctem {

// Counter-based random stream. Each draw is a pure function of
// (seed, stream name, cursor), so a stream can be checkpointed by its cursor
// alone and adding a new stream never perturbs the others.
class RandomStream {
public:
    RandomStream(std::uint64_t seed, std::string name);

    std::uint64_t next_u64();
    /// Uniform in [0, 1) with 53 bits of resolution.
    double next_uniform();

    std::uint64_t cursor() const noexcept { return cursor_; }
    void set_cursor(std::uint64_t c) noexcept { cursor_ = c; }
    const std::string& name() const noexcept { return name_; }

private:
    std::uint64_t seed_;
    std::uint64_t key_;
    std::uint64_t cursor_ = 0;
    std::string name_;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;
std::uint64_t fnv1a64(std::string_view bytes) noexcept;

} // namespace ctem
