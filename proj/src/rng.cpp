#include "hev/rng.hpp"

#include <cmath>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <string>

namespace hev {

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t root, std::string_view name) {
    return splitmix64(splitmix64(root) ^ fnv1a64(name));
}

std::uint64_t Rng::below(std::uint64_t n) {
    if (n <= 1) return 0;
    // Rejection on the top of the range keeps every residue equally likely.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return x % n;
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u, v, s;
    do {
        u = 2.0 * uniform() - 1.0;
        v = 2.0 * uniform() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    has_spare_ = true;
    return u * m;
}

std::ostream& operator<<(std::ostream& os, const Rng& rng) {
    auto flags = os.flags();
    os << rng.engine_ << ' ' << rng.has_spare_ << ' ' << std::hexfloat << rng.spare_;
    os.flags(flags);
    return os;
}

std::istream& operator>>(std::istream& is, Rng& rng) {
    std::string spare;
    is >> rng.engine_ >> rng.has_spare_ >> spare;
    rng.spare_ = std::strtod(spare.c_str(), nullptr);
    return is;
}

}  // namespace hev
