#include "ctem/rng.hpp"

namespace ctem {

std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view bytes) noexcept
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

RandomStream::RandomStream(std::uint64_t seed, std::string name)
    : seed_(seed), key_(splitmix64(seed ^ fnv1a64(name))), name_(std::move(name))
{
}

std::uint64_t RandomStream::next_u64()
{
    // Two rounds so that neighbouring (key, cursor) pairs decorrelate.
    const std::uint64_t c = cursor_++;
    return splitmix64(splitmix64(key_ + c * 0xd1342543de82ef95ULL) ^ seed_);
}

double RandomStream::next_uniform()
{
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

} // namespace ctem
