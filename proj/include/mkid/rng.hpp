#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace mkid {

// Counter-based generator built on splitmix64. Streams are splittable by
// label so that per-plant / per-stage substreams stay independent and a
// given seed always reproduces the same data regardless of draw order
// elsewhere.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    Rng split(std::string_view label) const {
        std::uint64_t h = 1469598103934665603ull;  // FNV-1a
        for (char ch : label) {
            h ^= static_cast<unsigned char>(ch);
            h *= 1099511628211ull;
        }
        return Rng(mix(state_ ^ mix(h)));
    }
    Rng split(std::uint64_t idx) const { return Rng(mix(state_ + 0x9e3779b97f4a7c15ull * (idx + 1))); }

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        return mix(state_);
    }

    // uniform in [0, 1)
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // standard normal, Box-Muller with a cached spare
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1, u2;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double th = 2.0 * M_PI * u2;
        spare_ = r * std::sin(th);
        has_spare_ = true;
        return r * std::cos(th);
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z ^= z >> 30;
        z *= 0xbf58476d1ce4e5b9ull;
        z ^= z >> 27;
        z *= 0x94d049bb133111ebull;
        z ^= z >> 31;
        return z;
    }

    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace mkid
