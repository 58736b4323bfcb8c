#include "stadm/param_store.hpp"

#include <cmath>

namespace stadm {

Array& ParamStore::create(const std::string& path, Array init, bool trainable) {
    if (entries_.count(path) != 0) throw ConfigError("duplicate parameter path: " + path);
    Entry e;
    e.grad = Array::zeros(init.shape());
    e.value = std::move(init);
    e.trainable = trainable;
    auto [it, ok] = entries_.emplace(path, std::move(e));
    (void)ok;
    return it->second.value;
}

ParamStore::Entry& ParamStore::at(const std::string& path) {
    auto it = entries_.find(path);
    if (it == entries_.end()) throw ConfigError("unknown parameter path: " + path);
    return it->second;
}

const ParamStore::Entry& ParamStore::at(const std::string& path) const {
    auto it = entries_.find(path);
    if (it == entries_.end()) throw ConfigError("unknown parameter path: " + path);
    return it->second;
}

void ParamStore::zero_grads() {
    for (auto& [path, e] : entries_)
        for (std::size_t i = 0; i < e.grad.numel(); ++i) e.grad[i] = 0.0;
}

std::size_t ParamStore::trainable_scalar_count() const {
    std::size_t n = 0;
    for (const auto& [path, e] : entries_)
        if (e.trainable) n += e.value.numel();
    return n;
}

Var ParamBinder::operator()(const std::string& path) {
    auto it = bound_.find(path);
    if (it != bound_.end()) return it->second;
    Var v = tape_->leaf(store_->at(path).value);
    bound_.emplace(path, v);
    return v;
}

void ParamBinder::accumulate_grads() {
    for (auto& [path, var] : bound_) {
        const Array& g = var.grad();
        Array& acc = store_->at(path).grad;
        for (std::size_t i = 0; i < acc.numel(); ++i) acc[i] += g[i];
    }
}

void AdamOptimizer::step(ParamStore& store) {
    ++steps_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
    for (auto& [path, e] : store) {
        if (!e.trainable) continue;
        auto it = slots_.find(path);
        if (it == slots_.end())
            it = slots_.emplace(path, Slot{Array::zeros(e.value.shape()),
                                           Array::zeros(e.value.shape())}).first;
        Slot& s = it->second;
        for (std::size_t i = 0; i < e.value.numel(); ++i) {
            const double g = e.grad[i];
            s.m[i] = beta1_ * s.m[i] + (1.0 - beta1_) * g;
            s.v[i] = beta2_ * s.v[i] + (1.0 - beta2_) * g * g;
            const double mhat = s.m[i] / bc1;
            const double vhat = s.v[i] / bc2;
            e.value[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

}  // namespace stadm
