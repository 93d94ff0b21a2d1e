#include "sip/rng.hpp"

#include <cmath>
#include <numbers>

#include "sip/errors.hpp"

namespace sip {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(std::uint64_t seed, std::uint64_t stream) : seed_(seed) {
    // Mix seed and stream so that nearby (seed, stream) pairs decorrelate.
    std::uint64_t s = seed ^ (0x6a09e667f3bcc909ULL * (stream + 1));
    state_[0] = splitmix64(s);
    state_[1] = splitmix64(s);
    state_[2] = splitmix64(s);
    state_[3] = splitmix64(s);
}

Rng Rng::stream(std::uint64_t stream_id) const { return Rng(seed_, stream_id); }

std::uint64_t Rng::next_u64() {
    // xoshiro256++
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double Rng::next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
    if (!(lo < hi)) {
        throw ContractError("rng::uniform: lo must be < hi, got [" +
                            std::to_string(lo) + ", " + std::to_string(hi) + ")");
    }
    return lo + (hi - lo) * next_double();
}

double Rng::normal(double mean, double std) {
    if (std < 0.0) {
        throw ContractError("rng::normal: std must be >= 0, got " + std::to_string(std));
    }
    if (has_spare_) {
        has_spare_ = false;
        return mean + std * spare_normal_;
    }
    // Box-Muller. u1 in (0, 1] keeps the log finite.
    const double u1 = 1.0 - next_double();
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_normal_ = r * std::sin(a);
    has_spare_ = true;
    return mean + std * (r * std::cos(a));
}

Tensor Rng::uniform(double lo, double hi, std::vector<std::size_t> shape) {
    if (!(lo < hi)) {
        throw ContractError("rng::uniform: lo must be < hi, got [" +
                            std::to_string(lo) + ", " + std::to_string(hi) + ")");
    }
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = lo + (hi - lo) * next_double();
    return t;
}

Tensor Rng::normal(double mean, double std, std::vector<std::size_t> shape) {
    if (std < 0.0) {
        throw ContractError("rng::normal: std must be >= 0, got " + std::to_string(std));
    }
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = normal(mean, std);
    return t;
}

Tensor Rng::bernoulli_mask(double p, std::vector<std::size_t> shape) {
    if (p < 0.0 || p > 1.0) {
        throw ContractError("rng::bernoulli_mask: p must be in [0,1], got " +
                            std::to_string(p));
    }
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = next_double() < p ? 1.0 : 0.0;
    return t;
}

std::vector<std::size_t> Rng::permutation(std::size_t n) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = n; i > 1; --i) {
        std::size_t j = next_u64() % i;
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

std::vector<std::size_t> Rng::sample_without_replacement(std::size_t n, std::size_t k) {
    if (k > n) {
        throw ContractError("rng::sample_without_replacement: k=" + std::to_string(k) +
                            " exceeds n=" + std::to_string(n));
    }
    std::vector<std::size_t> idx = permutation(n);
    idx.resize(k);
    return idx;
}

}  // namespace sip
