#pragma once

#include "adampnp/types.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace adampnp {

// One step of the splitmix64 generator. Used to derive independent
// sub-stream seeds from a base seed; the state advances in place.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Deterministic seed for a named sub-stream (e.g. one sweep cell or one
// modality). Mixes an FNV-1a hash of the tag into the base seed so that
// distinct tags give unrelated streams and the mapping is stable across
// platforms and runs.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : tag) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::uint64_t state = base ^ h;
    return splitmix64(state);
}

// Gaussian/uniform stream with an explicit Box-Muller transform on top of
// mt19937_64. std::normal_distribution is implementation-defined, which
// would break byte-identical outputs across standard libraries, so the
// transform is spelled out here.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    // Uniform in [0, 1).
    double uniform() {
        return (gen_() >> 11) * 0x1.0p-53;
    }

    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        // u1 in (0, 1] so the log is finite.
        double u1 = 1.0 - uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    Vec gaussian_vec(Eigen::Index n) {
        Vec out(n);
        for (Eigen::Index i = 0; i < n; ++i) out[i] = gaussian();
        return out;
    }

    std::uint64_t next_u64() { return gen_(); }

private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace adampnp
