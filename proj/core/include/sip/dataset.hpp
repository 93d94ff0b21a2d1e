#pragma once

#include <cstdint>
#include <string>

#include "sip/rng.hpp"
#include "sip/tensor.hpp"

namespace sip {

// Training-split statistics used to map between raw and standardized
// coordinates. Metrics are always reported on the raw scale.
struct Standardization {
    double x_mean = 0.0;
    double x_std = 1.0;
    double y_mean = 0.0;
    double y_std = 1.0;
};

struct Dataset {
    std::string name;  // "bimodal" or "heteroscedastic"
    std::uint64_t seed = 0;
    Tensor x_train;  // [N, 1]
    Tensor y_train;  // [N]
    Tensor x_test;   // [N, 1]
    Tensor y_test;   // [N]
    bool standardized = false;
    Standardization stats;  // captured from the raw training split
};

// Two-branch regression task: y = 10 cos(x - 0.5) + eps or
// y = 10 sin(x - 0.5) + eps with equal probability, eps ~ N(0,1),
// x ~ U(-4, 4). Train and test splits come from separate streams of the
// generator's base seed.
Dataset generate_bimodal(Rng& rng, std::size_t n);

// Input-dependent noise task: y = 7 sin(x) + eps sin(x) + 10 with
// eps ~ N(0, 2), x ~ U(-4, 4). Conditional std is 2|sin(x)|.
Dataset generate_heteroscedastic(Rng& rng, std::size_t n);

// Transform both splits by the training split's statistics. Throws on
// zero variance. The inverse is destandardize().
Dataset standardize(const Dataset& ds);
Dataset destandardize(const Dataset& ds);

// Training split as CSV with columns x,y (17 significant digits, LF).
void export_csv(const Dataset& ds, const std::string& path);

}  // namespace sip
