#include "copiv/rng.hpp"

#include <cmath>

#include "copiv/gauss.hpp"

namespace copiv {

namespace {
constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += kGolden;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t key)
    : state_(splitmix64(splitmix64(seed) ^ splitmix64(key ^ 0x5851f42d4c957f2dULL))) {}

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t key1, std::uint64_t key2)
    : CounterRng(splitmix64(seed) ^ key1, key2 * 0xd1342543de82ef95ULL + 1) {}

std::uint64_t CounterRng::next() {
    state_ += kGolden;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double CounterRng::uniform() { return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53; }

double CounterRng::normal() { return Phi_inv(uniform()); }

double CounterRng::exponential() { return -std::log(uniform()); }

std::uint64_t CounterRng::below(std::uint64_t n) {
    // Lemire's multiply-shift with rejection.
    std::uint64_t x = next();
    __uint128_t m = static_cast<__uint128_t>(x) * n;
    std::uint64_t l = static_cast<std::uint64_t>(m);
    if (l < n) {
        const std::uint64_t t = -n % n;
        while (l < t) {
            x = next();
            m = static_cast<__uint128_t>(x) * n;
            l = static_cast<std::uint64_t>(m);
        }
    }
    return static_cast<std::uint64_t>(m >> 64);
}

}  // namespace copiv
