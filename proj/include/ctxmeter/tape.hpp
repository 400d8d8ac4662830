#pragma once

#include <cstdint>
#include <vector>

#include "ctxmeter/tensor.hpp"

namespace ctxmeter::autodiff {

// Reverse-mode autodiff over a tape of eagerly evaluated ops.
//
// The tape and its forward values are immutable once built, and backward
// passes write only into caller-local buffers, so any number of vjp() calls
// with different seed vectors can run concurrently on the same tape without
// re-running the forward pass.

constexpr double kLayerNormEps = 1e-5;

enum class Op : uint8_t {
    kLeaf,
    kMatmul,
    kTranspose,
    kAdd,
    kAddRowVec,
    kMul,
    kScale,
    kSoftmaxRows,
    kLayerNormRows,
    kGelu,
    kRelu,
    kSliceRows,
    kSliceCols,
    kConcatRows,
    kConcatCols,
    kAddPositionEncoding,
    kCrossEntropyMean,
    kMseMean,
};

class Tape;

// Cheap handle to a node on a tape.
class Var {
public:
    Var() = default;
    const Tensor& value() const;
    const std::vector<int64_t>& shape() const { return value().shape(); }
    int32_t id() const { return id_; }
    Tape* tape() const { return tape_; }
    bool valid() const { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* tape, int32_t id) : tape_(tape), id_(id) {}
    Tape* tape_ = nullptr;
    int32_t id_ = -1;
};

struct Node {
    Op op = Op::kLeaf;
    bool needs_grad = false;
    std::vector<int32_t> parents;
    Tensor value;
    Tensor saved;                // op-specific forward cache (softmax output, ...)
    Tensor saved2;               // second cache slot (layer norm inv-std, ...)
    std::vector<int64_t> iargs;  // op-specific integers (slice bounds, labels, ...)
    double darg = 0.0;           // op-specific scalar (scale factor)
};

class Tape {
public:
    Var leaf(Tensor value, bool requires_grad = false);
    Var constant(Tensor value) { return leaf(std::move(value), false); }

    // Vector-Jacobian product: seed^T * d(output)/d(wrt). The seed must have
    // the shape of output. If wrt is not on the path to output the result is
    // a zero tensor of wrt's shape (a disconnected input has zero influence;
    // this is not an error). Thread-safe on a fixed tape.
    Tensor vjp(Var output, const Tensor& seed, Var wrt) const;

    // Same backward sweep, gradients for several leaves at once.
    std::vector<Tensor> vjp_multi(Var output, const Tensor& seed,
                                  const std::vector<Var>& wrts) const;

    const Node& node(int32_t id) const { return nodes_[id]; }
    int32_t size() const { return static_cast<int32_t>(nodes_.size()); }

    // Op builders; validate shapes and record the node. Free-function wrappers
    // below are the public spelling.
    Var emit(Node node);

private:
    void backward(int32_t output_id, const Tensor& seed, std::vector<Tensor>& grads) const;

    std::vector<Node> nodes_;
};

// ---- forward ops ----------------------------------------------------------

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var add_rowvec(Var a, Var bias);  // bias shape {cols(a)}, broadcast over rows
Var mul(Var a, Var b);            // elementwise
Var scale(Var a, double c);
Var softmax_rows(Var a);
Var layer_norm_rows(Var x, Var gamma, Var beta, double eps = kLayerNormEps);
Var gelu(Var a);  // exact erf form
Var relu(Var a);
Var slice_rows(Var a, int64_t row_begin, int64_t row_end);
Var slice_cols(Var a, int64_t col_begin, int64_t col_end);
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
// Adds the sinusoidal table for positions [start, start + rows) to a.
Var add_position_encoding(Var a, int64_t start_position);
// Mean negative log-likelihood over frames; labels are class ids per row.
Var cross_entropy_mean(Var logits, const std::vector<int64_t>& labels);
// Mean squared error over all entries; target is a tape node (normally a
// constant leaf).
Var mse_mean(Var pred, Var target);

// The positional table itself, exposed for tests and for the model module.
Tensor sinusoidal_position_encoding(int64_t frames, int64_t dim, int64_t start_position);

}  // namespace ctxmeter::autodiff
