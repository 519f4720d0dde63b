#include "dflmoe/rng.hpp"

#include <cmath>

#include "dflmoe/errors.hpp"

namespace dflmoe {

double Rng::normal() {
    if (has_cached_normal_) {
        has_cached_normal_ = false;
        return cached_normal_;
    }
    while (true) {
        double u = 2.0 * uniform() - 1.0;
        double v = 2.0 * uniform() - 1.0;
        double s = u * u + v * v;
        if (s >= 1.0 || s == 0.0) continue;
        double f = std::sqrt(-2.0 * std::log(s) / s);
        cached_normal_ = v * f;
        has_cached_normal_ = true;
        return u * f;
    }
}

double Rng::gamma(double alpha) {
    if (alpha <= 0.0) throw Error(ErrorCode::InvalidParams, "gamma shape must be positive");
    if (alpha < 1.0) {
        double u = uniform();
        return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
    }
    double d = alpha - 1.0 / 3.0;
    double c = 1.0 / std::sqrt(9.0 * d);
    while (true) {
        double x = normal();
        double t = 1.0 + c * x;
        if (t <= 0.0) continue;
        double v = t * t * t;
        double u = uniform();
        double x2 = x * x;
        if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
        if (u > 0.0 && std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
    }
}

std::vector<double> Rng::dirichlet(double alpha, std::size_t dim) {
    if (dim == 0) throw Error(ErrorCode::InvalidParams, "dirichlet dimension must be positive");
    std::vector<double> draws(dim);
    double total = 0.0;
    for (auto& g : draws) {
        g = gamma(alpha);
        total += g;
    }
    if (total <= 0.0) {
        // All gammas underflowed (tiny alpha); fall back to a one-hot draw.
        std::fill(draws.begin(), draws.end(), 0.0);
        draws[static_cast<std::size_t>(uniform_below(dim))] = 1.0;
        return draws;
    }
    for (auto& g : draws) g /= total;
    return draws;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
    return splitmix64(splitmix64(seed) ^ splitmix64(tag));
}

}  // namespace dflmoe
