#pragma once

// Small analytic SequenceFunction fixtures with receptive fields known in
// closed form, shared by the unit and acceptance suites.

#include <vector>

#include "ctxmeter/rng.hpp"
#include "ctxmeter/sequence_function.hpp"
#include "ctxmeter/tape.hpp"
#include "ctxmeter/tensor.hpp"

namespace ctxmeter::fixtures {

// f(x) = x. Influence is sqrt(K) on the diagonal, zero elsewhere.
class IdentityFunction : public SequenceFunction {
public:
    explicit IdentityFunction(int64_t input_dim) : input_dim_(input_dim) {}
    int64_t input_dim() const override { return input_dim_; }
    int64_t num_outputs() const override { return 1; }
    std::vector<autodiff::Var> build(autodiff::Tape& tape, autodiff::Var input,
                                     int64_t) const override {
        // scale-by-1 keeps the exposed output a distinct node from the leaf
        (void)tape;
        return {autodiff::scale(input, 1.0)};
    }

private:
    int64_t input_dim_;
};

// Depthwise 3-tap convolution with zero padding: out[t] = wm1 * x[t-1] +
// w0 * x[t] + wp1 * x[t+1]. Receptive field radius is exactly 1.
class DepthwiseConv3 : public SequenceFunction {
public:
    DepthwiseConv3(int64_t input_dim, double wm1, double w0, double wp1)
        : input_dim_(input_dim), wm1_(wm1), w0_(w0), wp1_(wp1) {}

    int64_t input_dim() const override { return input_dim_; }
    int64_t num_outputs() const override { return 1; }

    std::vector<autodiff::Var> build(autodiff::Tape& tape, autodiff::Var input,
                                     int64_t) const override {
        const int64_t t = input.value().rows();
        const int64_t k = input.value().cols();
        autodiff::Var center = autodiff::scale(input, w0_);
        if (t == 1) return {center};

        autodiff::Var zero_row = tape.constant(Tensor({1, k}));
        // row t of "prev" holds x[t-1]; row t of "next" holds x[t+1]
        autodiff::Var prev =
            autodiff::concat_rows({zero_row, autodiff::slice_rows(input, 0, t - 1)});
        autodiff::Var next =
            autodiff::concat_rows({autodiff::slice_rows(input, 1, t), zero_row});
        autodiff::Var out = autodiff::add(
            center, autodiff::add(autodiff::scale(prev, wm1_), autodiff::scale(next, wp1_)));
        return {out};
    }

private:
    int64_t input_dim_;
    double wm1_, w0_, wp1_;
};

// Per-frame 2-layer MLP with random weights; used to cross-check the two
// Jacobian routes on something nonlinear but cheap.
class TwoLayerMlp : public SequenceFunction {
public:
    TwoLayerMlp(int64_t input_dim, int64_t hidden_dim, int64_t output_dim, uint64_t seed)
        : input_dim_(input_dim) {
        Rng rng(seed);
        w1_ = Tensor({input_dim, hidden_dim});
        b1_ = Tensor({hidden_dim});
        w2_ = Tensor({hidden_dim, output_dim});
        b2_ = Tensor({output_dim});
        for (int64_t i = 0; i < w1_.numel(); ++i) w1_[i] = rng.normal() * 0.5;
        for (int64_t i = 0; i < b1_.numel(); ++i) b1_[i] = rng.normal() * 0.1;
        for (int64_t i = 0; i < w2_.numel(); ++i) w2_[i] = rng.normal() * 0.5;
        for (int64_t i = 0; i < b2_.numel(); ++i) b2_[i] = rng.normal() * 0.1;
    }

    int64_t input_dim() const override { return input_dim_; }
    int64_t num_outputs() const override { return 2; }

    std::vector<autodiff::Var> build(autodiff::Tape& tape, autodiff::Var input,
                                     int64_t) const override {
        autodiff::Var h = autodiff::gelu(autodiff::add_rowvec(
            autodiff::matmul(input, tape.constant(w1_)), tape.constant(b1_)));
        autodiff::Var out = autodiff::add_rowvec(autodiff::matmul(h, tape.constant(w2_)),
                                                 tape.constant(b2_));
        return {h, out};
    }

private:
    int64_t input_dim_;
    Tensor w1_, b1_, w2_, b2_;
};

inline Tensor random_frames(int64_t t, int64_t k, uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    Tensor x({t, k});
    for (int64_t i = 0; i < x.numel(); ++i) x[i] = rng.normal() * scale;
    return x;
}

}  // namespace ctxmeter::fixtures
