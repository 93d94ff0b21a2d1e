#include "sip/param_store.hpp"

#include <algorithm>
#include <cmath>

#include "sip/errors.hpp"

namespace sip {

ParamStore::Entry& ParamStore::at(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) {
        throw ContractError("param_store: unknown parameter '" + name + "'");
    }
    return it->second;
}

const ParamStore::Entry& ParamStore::at(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) {
        throw ContractError("param_store: unknown parameter '" + name + "'");
    }
    return it->second;
}

void ParamStore::create(const std::string& name, Tensor init, std::string group) {
    if (entries_.count(name)) {
        throw ContractError("param_store: duplicate parameter '" + name + "'");
    }
    Entry e;
    e.grad = Tensor::zeros(init.shape());
    e.adam_m = Tensor::zeros(init.shape());
    e.adam_v = Tensor::zeros(init.shape());
    e.value = std::move(init);
    e.group = std::move(group);
    entries_.emplace(name, std::move(e));
}

bool ParamStore::has(const std::string& name) const { return entries_.count(name) > 0; }

Tensor& ParamStore::value(const std::string& name) { return at(name).value; }
const Tensor& ParamStore::value(const std::string& name) const { return at(name).value; }
const Tensor& ParamStore::grad(const std::string& name) const { return at(name).grad; }
const std::string& ParamStore::group_of(const std::string& name) const {
    return at(name).group;
}
long ParamStore::step_count(const std::string& name) const { return at(name).step; }

std::vector<std::string> ParamStore::names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [k, v] : entries_) out.push_back(k);
    return out;
}

std::vector<std::string> ParamStore::names_in_group(const std::string& group) const {
    std::vector<std::string> out;
    for (const auto& [k, v] : entries_) {
        if (v.group == group) out.push_back(k);
    }
    return out;
}

void ParamStore::accumulate_grad(const std::string& name, const Tensor& g) {
    Entry& e = at(name);
    if (!e.value.same_shape(g)) {
        throw ShapeError("param_store: gradient shape " + g.shape_str() +
                         " does not match value shape " + e.value.shape_str() +
                         " for '" + name + "'");
    }
    for (std::size_t i = 0; i < g.numel(); ++i) e.grad[i] += g[i];
}

void ParamStore::zero_grad(const std::string& name) {
    Entry& e = at(name);
    std::fill(e.grad.vec().begin(), e.grad.vec().end(), 0.0);
}

void ParamStore::zero_all_grads() {
    for (auto& [k, e] : entries_) {
        std::fill(e.grad.vec().begin(), e.grad.vec().end(), 0.0);
    }
}

void ParamStore::adam_update(const std::string& name, const AdamConfig& cfg) {
    Entry& e = at(name);
    e.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(e.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(e.step));
    for (std::size_t i = 0; i < e.value.numel(); ++i) {
        const double g = e.grad[i];
        e.adam_m[i] = cfg.beta1 * e.adam_m[i] + (1.0 - cfg.beta1) * g;
        e.adam_v[i] = cfg.beta2 * e.adam_v[i] + (1.0 - cfg.beta2) * g * g;
        const double mhat = e.adam_m[i] / bc1;
        const double vhat = e.adam_v[i] / bc2;
        e.value[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
    std::fill(e.grad.vec().begin(), e.grad.vec().end(), 0.0);
}

void ParamStore::adam_update_group(const std::string& group, const AdamConfig& cfg) {
    for (auto& [k, e] : entries_) {
        if (e.group == group) adam_update(k, cfg);
    }
}

void ParamStore::clamp_value(const std::string& name, double lo, double hi) {
    Entry& e = at(name);
    for (std::size_t i = 0; i < e.value.numel(); ++i) {
        e.value[i] = std::clamp(e.value[i], lo, hi);
    }
}

}  // namespace sip
