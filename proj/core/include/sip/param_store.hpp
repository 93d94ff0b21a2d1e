#pragma once

#include <map>
#include <string>
#include <vector>

#include "sip/tensor.hpp"

namespace sip {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Named trainable tensors with accumulated gradients and per-entry Adam
// moment state. Each entry carries a group tag (e.g. "phi", "theta",
// "omega", "lik") so alternating updates can address disjoint parameter
// sets. Gradients accumulate with += and are cleared by the Adam step or
// explicitly; that keeps the discriminator/generator alternation's
// gradients separate by construction.
class ParamStore {
public:
    void create(const std::string& name, Tensor init, std::string group);
    bool has(const std::string& name) const;

    Tensor& value(const std::string& name);
    const Tensor& value(const std::string& name) const;
    const Tensor& grad(const std::string& name) const;
    const std::string& group_of(const std::string& name) const;
    long step_count(const std::string& name) const;

    // All names, alphabetical (deterministic iteration order).
    std::vector<std::string> names() const;
    std::vector<std::string> names_in_group(const std::string& group) const;

    void accumulate_grad(const std::string& name, const Tensor& g);
    void zero_grad(const std::string& name);
    void zero_all_grads();

    // Bias-corrected Adam step, minimizing: moves against the gradient.
    // Increments the entry's step count and clears its gradient.
    void adam_update(const std::string& name, const AdamConfig& cfg);
    void adam_update_group(const std::string& group, const AdamConfig& cfg);

    // Elementwise projection of one entry's value into [lo, hi].
    void clamp_value(const std::string& name, double lo, double hi);

private:
    struct Entry {
        Tensor value;
        Tensor grad;
        Tensor adam_m;
        Tensor adam_v;
        long step = 0;
        std::string group;
    };
    Entry& at(const std::string& name);
    const Entry& at(const std::string& name) const;

    std::map<std::string, Entry> entries_;
};

}  // namespace sip
