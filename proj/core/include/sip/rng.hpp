#pragma once

#include <cstdint>
#include <vector>

#include "sip/tensor.hpp"

namespace sip {

// Purpose tags for stream splitting. Each (seed, stream) pair yields an
// independent deterministic stream, so e.g. changing the number of
// posterior samples never perturbs the generated dataset.
namespace streams {
inline constexpr std::uint64_t kDataTrain = 1;
inline constexpr std::uint64_t kDataTest = 2;
inline constexpr std::uint64_t kPriorInit = 3;
inline constexpr std::uint64_t kPriorDraws = 4;
inline constexpr std::uint64_t kPosteriorDraws = 5;
inline constexpr std::uint64_t kDiscShuffle = 6;
inline constexpr std::uint64_t kInducingInit = 7;
inline constexpr std::uint64_t kGpFit = 8;
inline constexpr std::uint64_t kPredict = 9;
inline constexpr std::uint64_t kPosteriorInit = 10;
inline constexpr std::uint64_t kBatchShuffle = 11;
inline constexpr std::uint64_t kDiscInit = 12;
inline constexpr std::uint64_t kFigures = 13;
inline constexpr std::uint64_t kMetricDraws = 14;
}  // namespace streams

// Deterministic seeded generator (xoshiro256++ seeded by SplitMix64 over
// the (seed, stream) pair). Same seed and stream give the same sequence
// on every platform. Normals use Box-Muller so the draw count per sample
// is fixed, keeping streams alignment-stable.
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

    // Derive an independent stream from the same base seed.
    Rng stream(std::uint64_t stream_id) const;

    std::uint64_t next_u64();
    double next_double();  // [0, 1)

    double uniform(double lo, double hi);
    double normal(double mean = 0.0, double std = 1.0);

    Tensor uniform(double lo, double hi, std::vector<std::size_t> shape);
    Tensor normal(double mean, double std, std::vector<std::size_t> shape);
    Tensor bernoulli_mask(double p, std::vector<std::size_t> shape);

    // Fisher-Yates shuffle of 0..n-1.
    std::vector<std::size_t> permutation(std::size_t n);
    // k distinct indices in [0, n), in draw order.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

private:
    std::uint64_t state_[4];
    std::uint64_t seed_;
    double spare_normal_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace sip
