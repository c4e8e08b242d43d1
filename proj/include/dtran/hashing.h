#pragma once

#include <cstdint>
#include <string_view>

namespace dtran {

/// SplitMix64 finalizer. Used as a stateless counter-based generator so that
/// every random draw in the simulator is addressable by (seed, entity, index).
constexpr std::uint64_t
splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t
hash_combine(std::uint64_t a, std::uint64_t b)
{
    return splitmix64(a ^ splitmix64(b + 0x632be59bd9b4e019ULL));
}

template <typename... Rest>
constexpr std::uint64_t
hash_combine(std::uint64_t a, std::uint64_t b, Rest... rest)
{
    return hash_combine(hash_combine(a, b), static_cast<std::uint64_t>(rest)...);
}

/// Maps 64 random bits onto [0, 1) with 53 bits of precision.
constexpr double
unit_double(std::uint64_t bits)
{
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

constexpr std::uint64_t
fnv1a64(std::string_view data, std::uint64_t h = 0xcbf29ce484222325ULL)
{
    for (unsigned char c : data)
    {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace dtran
