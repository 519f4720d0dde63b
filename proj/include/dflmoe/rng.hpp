#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace dflmoe {

/// Deterministic random source used everywhere in the artifact.
///
/// Algorithm: std::mt19937_64 (bit-exact per the C++ standard) seeded
/// directly with the 64-bit seed. All distributions are derived here from
/// raw engine output with fixed arithmetic; the std::*_distribution
/// classes are never used because their draw sequences are
/// implementation-defined. Identical seed => identical draw sequence.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1): top 53 bits of one engine draw.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be positive. Plain modulo; the
    /// bias is irrelevant at the scales used here and the draw count per
    /// call is fixed at one.
    std::uint64_t uniform_below(std::uint64_t n) { return next_u64() % n; }

    /// Standard normal via the Marsaglia polar method (two cached values
    /// per acceptance; draw count depends only on the engine stream).
    double normal();

    /// Gamma(alpha, 1) via Marsaglia-Tsang; alpha < 1 handled with the
    /// Gamma(alpha+1) * U^(1/alpha) boost.
    double gamma(double alpha);

    /// Dirichlet(alpha) over `dim` components: normalized gamma draws.
    std::vector<double> dirichlet(double alpha, std::size_t dim);

    /// In-place Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

  private:
    std::mt19937_64 engine_;
    std::uint64_t seed_;
    bool has_cached_normal_ = false;
    double cached_normal_ = 0.0;
};

/// SplitMix64 mixing step; used only for deriving sub-stream seeds.
std::uint64_t splitmix64(std::uint64_t x);

/// Derives an independent child seed from (seed, tag). Distinct tags give
/// decorrelated streams; the mapping is fixed for the whole artifact.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag);

}  // namespace dflmoe
