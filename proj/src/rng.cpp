#include "catpol/rng.hpp"

#include <bit>
#include <cmath>
#include <numbers>

namespace catpol {

namespace {

std::uint64_t splitmix64(std::uint64_t& x)
{
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view s)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace

Rng Rng::stream(std::uint64_t seed, std::string_view name)
{
    std::uint64_t x = seed;
    std::uint64_t mixed = splitmix64(x) ^ fnv1a(name);
    return Rng(mixed);
}

void Rng::reseed(std::uint64_t seed)
{
    std::uint64_t x = seed;
    for (auto& w : s_)
        w = splitmix64(x);
}

Rng::result_type Rng::operator()()
{
    const std::uint64_t result = std::rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = std::rotl(s_[3], 45);
    return result;
}

double Rng::uniform()
{
    return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
}

double Rng::normal()
{
    // 1 - uniform() lies in (0, 1], so the log is finite.
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

} // namespace catpol
