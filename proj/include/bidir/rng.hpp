#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "bidir/errors.hpp"
#include "bidir/tensor.hpp"

namespace bidir {

/// Seeded random source. The generator is fixed to std::mt19937_64 and the
/// value transforms below are written out explicitly, so a given seed yields
/// the same stream on every platform (std::*_distribution would not).
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : seed_(seed), gen_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform double in [0, 1), 53-bit resolution.
    double next_unit() { return double(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) {
        if (!(lo < hi)) throw ValueError("rng.uniform: requires lo < hi");
        return lo + (hi - lo) * next_unit();
    }

    /// Standard normal via Box-Muller; consumes exactly two uniforms per draw.
    double normal(double mean, double stddev) {
        if (!(stddev > 0)) throw ValueError("rng.normal: requires stddev > 0");
        double u1 = next_unit();
        double u2 = next_unit();
        while (u1 == 0.0) u1 = next_unit();
        double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
        return mean + stddev * z;
    }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw ValueError("rng.below: n must be positive");
        // Rejection sampling keeps the draw unbiased.
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x = gen_();
        while (x >= limit) x = gen_();
        return x % n;
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 gen_;
};

template <typename Scalar>
Tensor<Scalar> sample_uniform(Rng& rng, Scalar lo, Scalar hi, Shape shape) {
    if (!(lo < hi)) throw ValueError("sample_uniform: requires lo < hi");
    Tensor<Scalar> t(std::move(shape));
    for (Index i = 0; i < t.size(); ++i) t[i] = Scalar(rng.uniform(double(lo), double(hi)));
    return t;
}

template <typename Scalar>
Tensor<Scalar> sample_normal(Rng& rng, Scalar mean, Scalar stddev, Shape shape) {
    if (!(stddev > 0)) throw ValueError("sample_normal: requires stddev > 0");
    Tensor<Scalar> t(std::move(shape));
    for (Index i = 0; i < t.size(); ++i) t[i] = Scalar(rng.normal(double(mean), double(stddev)));
    return t;
}

/// Seeded Fisher-Yates shuffle.
template <typename T>
void shuffle(Rng& rng, std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
        size_t j = size_t(rng.below(i));
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace bidir
