#pragma once

#include <map>
#include <string>

#include "stadm/array.hpp"
#include "stadm/tape.hpp"

namespace stadm {

/// Named parameters with matching gradient accumulators. Entries marked
/// non-trainable (batch-norm running statistics) are carried through
/// checkpoints but skipped by optimizers and gradient checks.
class ParamStore {
public:
    struct Entry {
        Array value;
        Array grad;
        bool trainable = true;
    };

    Array& create(const std::string& path, Array init, bool trainable = true);
    bool has(const std::string& path) const { return entries_.count(path) != 0; }
    Entry& at(const std::string& path);
    const Entry& at(const std::string& path) const;
    Array& value(const std::string& path) { return at(path).value; }
    Array& grad(const std::string& path) { return at(path).grad; }

    void zero_grads();
    std::size_t size() const { return entries_.size(); }
    std::size_t trainable_scalar_count() const;

    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

private:
    std::map<std::string, Entry> entries_;  // ordered: deterministic iteration
};

/// Binds store entries to tape leaves for one forward pass and routes leaf
/// gradients back into the store afterwards.
class ParamBinder {
public:
    ParamBinder(Tape& tape, ParamStore& store) : tape_(&tape), store_(&store) {}

    /// Leaf for a trainable entry (created once per pass per path).
    Var operator()(const std::string& path);

    /// Adds each bound leaf's tape gradient into the store accumulator.
    void accumulate_grads();

    ParamStore& store() { return *store_; }

private:
    Tape* tape_;
    ParamStore* store_;
    std::map<std::string, Var> bound_;
};

class AdamOptimizer {
public:
    explicit AdamOptimizer(double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
                           double eps = 1e-8)
        : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    /// One update from the current gradient accumulators. Does not zero grads.
    void step(ParamStore& store);

private:
    struct Slot {
        Array m, v;
    };
    double lr_, beta1_, beta2_, eps_;
    long steps_ = 0;
    std::map<std::string, Slot> slots_;
};

}  // namespace stadm
