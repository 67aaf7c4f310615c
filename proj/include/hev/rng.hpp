#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string_view>

namespace hev {

// FNV-1a, used for stream names and config hashes.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

std::uint64_t splitmix64(std::uint64_t x);

// Seed of the named sub-stream `name` under `root`. Cycle shuffling, network
// initialization, exploration noise and minibatch sampling each draw from
// their own stream so that perturbing one leaves the others untouched.
std::uint64_t derive_seed(std::uint64_t root, std::string_view name);

// mt19937_64 has a standard-defined output sequence; the std distributions do
// not, so the variates are produced here to keep runs bit-reproducible across
// standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, n).
    std::uint64_t below(std::uint64_t n);

    // Standard normal via the Marsaglia polar method.
    double normal();

    std::mt19937_64& engine() { return engine_; }
    const std::mt19937_64& engine() const { return engine_; }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;

    friend std::ostream& operator<<(std::ostream&, const Rng&);
    friend std::istream& operator>>(std::istream&, Rng&);
};

std::ostream& operator<<(std::ostream& os, const Rng& rng);
std::istream& operator>>(std::istream& is, Rng& rng);

}  // namespace hev
