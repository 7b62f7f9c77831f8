#ifndef NESCOPE_RNG_HPP
#define NESCOPE_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

namespace nescope {

/// Seedable, cross-platform random source.
///
/// The engine is std::mt19937_64 (bit-exact by the standard) and every
/// distribution below is hand-rolled on top of the raw 64-bit stream, so the
/// same (seed, stream) pair produces the same numbers on any platform or
/// compiler.
///
/// Stream splitting: substream s of master seed m is seeded with
/// splitmix64(m xor golden * (s + 1)). Generators derive one substream per
/// role (component draws, noise draws, per-trial sampling, ...), so adding
/// draws to one role never shifts another role's sequence.
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
        : engine_(mix(seed ^ (0x9e3779b97f4a7c15ull * (stream + 1)))) {}

    static Rng substream(std::uint64_t seed, std::uint64_t stream) { return Rng(seed, stream); }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller; one spare value is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    /// Index draw by CDF inversion; weights need not be normalized.
    template <typename Weights>
    int discrete(const Weights& w) {
        double total = 0.0;
        for (double v : w) total += v;
        double u = uniform() * total;
        int i = 0;
        const int last = static_cast<int>(w.size()) - 1;
        for (double v : w) {
            if (u < v || i == last) return i;
            u -= v;
            ++i;
        }
        return last;
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        // splitmix64 finalizer
        z += 0x9e3779b97f4a7c15ull;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace nescope

#endif
