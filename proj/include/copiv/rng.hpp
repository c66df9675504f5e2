#pragma once

#include <cstdint>

namespace copiv {

// Counter-based generator: the stream is a pure function of (seed, key...),
// so draws do not depend on thread scheduling or call order across streams.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t key);
    CounterRng(std::uint64_t seed, std::uint64_t key1, std::uint64_t key2);

    std::uint64_t next();
    // Uniform on the open interval (0, 1).
    double uniform();
    double normal();
    double exponential();
    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);

private:
    std::uint64_t state_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace copiv
