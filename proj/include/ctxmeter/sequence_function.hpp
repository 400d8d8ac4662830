#pragma once

#include <cstdint>
#include <vector>

#include "ctxmeter/tape.hpp"
#include "ctxmeter/tensor.hpp"

namespace ctxmeter {

// A frame-in, frame-out function whose intermediate outputs can be measured.
// Implementations record their forward pass on the tape so the measurement
// code can run vector-Jacobian products against the input. Output index 0 is
// the shallowest exposed layer; num_outputs() - 1 the deepest.
//
// start_position is the global index of the first input frame; functions with
// restart positional semantics ignore it.
class SequenceFunction {
public:
    virtual ~SequenceFunction() = default;

    virtual int64_t input_dim() const = 0;
    virtual int64_t num_outputs() const = 0;
    virtual std::vector<autodiff::Var> build(autodiff::Tape& tape, autodiff::Var input,
                                             int64_t start_position) const = 0;

    // Plain forward pass (no gradients requested on the input).
    std::vector<Tensor> evaluate(const Tensor& frames, int64_t start_position = 0) const;
    Tensor evaluate_layer(const Tensor& frames, int64_t layer, int64_t start_position = 0) const;

    // Maps a possibly negative layer index (-1 = deepest) to [0, num_outputs).
    int64_t resolve_layer(int64_t layer) const;
};

// Wraps another function and scales every exposed output by a constant.
// Used to check that normalized influence curves are scale invariant.
class ScaledFunction : public SequenceFunction {
public:
    ScaledFunction(const SequenceFunction& inner, double factor)
        : inner_(inner), factor_(factor) {}

    int64_t input_dim() const override { return inner_.input_dim(); }
    int64_t num_outputs() const override { return inner_.num_outputs(); }
    std::vector<autodiff::Var> build(autodiff::Tape& tape, autodiff::Var input,
                                     int64_t start_position) const override {
        std::vector<autodiff::Var> outs = inner_.build(tape, input, start_position);
        for (auto& v : outs) v = autodiff::scale(v, factor_);
        return outs;
    }

private:
    const SequenceFunction& inner_;
    double factor_;
};

}  // namespace ctxmeter
