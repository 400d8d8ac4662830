#include "ctxmeter/tape.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ctxmeter::autodiff {

namespace {

constexpr double kSqrt2 = 1.4142135623730950488;
constexpr double kSqrt2Pi = 2.5066282746310005024;

[[noreturn]] void shape_error(const std::string& op, const Tensor& a, const Tensor& b) {
    throw std::invalid_argument(op + ": incompatible shapes " + a.shape_str() + " and " +
                                b.shape_str());
}

void require_matrix(const std::string& op, const Tensor& t) {
    if (t.ndim() != 2) {
        throw std::invalid_argument(op + ": expected a matrix, got shape " + t.shape_str());
    }
}

Tape* same_tape(const std::string& op, Var a, Var b) {
    if (!a.valid() || !b.valid() || a.tape() != b.tape()) {
        throw std::invalid_argument(op + ": operands live on different tapes");
    }
    return a.tape();
}

// out(MxN) += a(MxK) * b(KxN)
void matmul_acc(const double* a, const double* b, double* out, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* orow = out + i * n;
        for (int64_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + p * n;
            for (int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
}

// out(MxK) += g(MxN) * b(KxN)^T
void matmul_nt_acc(const double* g, const double* b, double* out, int64_t m, int64_t n, int64_t k) {
    for (int64_t i = 0; i < m; ++i) {
        const double* grow = g + i * n;
        double* orow = out + i * k;
        for (int64_t p = 0; p < k; ++p) {
            const double* brow = b + p * n;
            double s = 0.0;
            for (int64_t j = 0; j < n; ++j) s += grow[j] * brow[j];
            orow[p] += s;
        }
    }
}

// out(KxN) += a(MxK)^T * g(MxN)
void matmul_tn_acc(const double* a, const double* g, double* out, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        const double* grow = g + i * n;
        for (int64_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            double* orow = out + p * n;
            for (int64_t j = 0; j < n; ++j) orow[j] += av * grow[j];
        }
    }
}

}  // namespace

const Tensor& Var::value() const { return tape_->node(id_).value; }

Var Tape::leaf(Tensor value, bool requires_grad) {
    Node n;
    n.op = Op::kLeaf;
    n.needs_grad = requires_grad;
    n.value = std::move(value);
    return emit(std::move(n));
}

Var Tape::emit(Node node) {
    nodes_.push_back(std::move(node));
    return Var(this, static_cast<int32_t>(nodes_.size()) - 1);
}

// ---- op builders -----------------------------------------------------------

namespace {

Node make_node(Op op, std::initializer_list<Var> parents, Tensor value) {
    Node n;
    n.op = op;
    n.value = std::move(value);
    for (Var p : parents) {
        n.parents.push_back(p.id());
        n.needs_grad = n.needs_grad || p.tape()->node(p.id()).needs_grad;
    }
    return n;
}

}  // namespace

Var matmul(Var a, Var b) {
    Tape* tape = same_tape("matmul", a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    require_matrix("matmul", av);
    require_matrix("matmul", bv);
    if (av.cols() != bv.rows()) shape_error("matmul", av, bv);
    Tensor out({av.rows(), bv.cols()});
    matmul_acc(av.data(), bv.data(), out.data(), av.rows(), av.cols(), bv.cols());
    return tape->emit(make_node(Op::kMatmul, {a, b}, std::move(out)));
}

Var transpose(Var a) {
    const Tensor& av = a.value();
    require_matrix("transpose", av);
    Tensor out({av.cols(), av.rows()});
    for (int64_t i = 0; i < av.rows(); ++i)
        for (int64_t j = 0; j < av.cols(); ++j) out(j, i) = av(i, j);
    return a.tape()->emit(make_node(Op::kTranspose, {a}, std::move(out)));
}

Var add(Var a, Var b) {
    Tape* tape = same_tape("add", a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (!av.same_shape(bv)) shape_error("add", av, bv);
    Tensor out = av;
    out.add_scaled(bv, 1.0);
    return tape->emit(make_node(Op::kAdd, {a, b}, std::move(out)));
}

Var add_rowvec(Var a, Var bias) {
    Tape* tape = same_tape("add_rowvec", a, bias);
    const Tensor& av = a.value();
    const Tensor& bv = bias.value();
    require_matrix("add_rowvec", av);
    if (bv.ndim() != 1 || bv.numel() != av.cols()) shape_error("add_rowvec", av, bv);
    Tensor out = av;
    for (int64_t i = 0; i < av.rows(); ++i)
        for (int64_t j = 0; j < av.cols(); ++j) out(i, j) += bv[j];
    return tape->emit(make_node(Op::kAddRowVec, {a, bias}, std::move(out)));
}

Var mul(Var a, Var b) {
    Tape* tape = same_tape("mul", a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (!av.same_shape(bv)) shape_error("mul", av, bv);
    Tensor out = av;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= bv[i];
    return tape->emit(make_node(Op::kMul, {a, b}, std::move(out)));
}

Var scale(Var a, double c) {
    Tensor out = a.value();
    out.scale_inplace(c);
    Node n = make_node(Op::kScale, {a}, std::move(out));
    n.darg = c;
    return a.tape()->emit(std::move(n));
}

Var softmax_rows(Var a) {
    const Tensor& av = a.value();
    require_matrix("softmax_rows", av);
    Tensor out = av;
    for (int64_t i = 0; i < av.rows(); ++i) {
        double m = out(i, 0);
        for (int64_t j = 1; j < av.cols(); ++j) m = std::max(m, out(i, j));
        double z = 0.0;
        for (int64_t j = 0; j < av.cols(); ++j) {
            out(i, j) = std::exp(out(i, j) - m);
            z += out(i, j);
        }
        for (int64_t j = 0; j < av.cols(); ++j) out(i, j) /= z;
    }
    return a.tape()->emit(make_node(Op::kSoftmaxRows, {a}, std::move(out)));
}

Var layer_norm_rows(Var x, Var gamma, Var beta, double eps) {
    Tape* tape = same_tape("layer_norm_rows", x, gamma);
    same_tape("layer_norm_rows", x, beta);
    const Tensor& xv = x.value();
    require_matrix("layer_norm_rows", xv);
    const int64_t c = xv.cols();
    if (gamma.value().ndim() != 1 || gamma.value().numel() != c)
        shape_error("layer_norm_rows(gamma)", xv, gamma.value());
    if (beta.value().ndim() != 1 || beta.value().numel() != c)
        shape_error("layer_norm_rows(beta)", xv, beta.value());

    Tensor normalized({xv.rows(), c});
    Tensor inv_std({xv.rows()});
    Tensor out({xv.rows(), c});
    for (int64_t i = 0; i < xv.rows(); ++i) {
        double mean = 0.0;
        for (int64_t j = 0; j < c; ++j) mean += xv(i, j);
        mean /= static_cast<double>(c);
        double var = 0.0;
        for (int64_t j = 0; j < c; ++j) {
            const double d = xv(i, j) - mean;
            var += d * d;
        }
        var /= static_cast<double>(c);
        const double inv = 1.0 / std::sqrt(var + eps);
        inv_std[i] = inv;
        for (int64_t j = 0; j < c; ++j) {
            normalized(i, j) = (xv(i, j) - mean) * inv;
            out(i, j) = gamma.value()[j] * normalized(i, j) + beta.value()[j];
        }
    }
    Node n = make_node(Op::kLayerNormRows, {x, gamma, beta}, std::move(out));
    n.saved = std::move(normalized);
    n.saved2 = std::move(inv_std);
    n.darg = eps;
    return tape->emit(std::move(n));
}

Var gelu(Var a) {
    const Tensor& av = a.value();
    Tensor out = av;
    for (int64_t i = 0; i < out.numel(); ++i) {
        out[i] = 0.5 * av[i] * (1.0 + std::erf(av[i] / kSqrt2));
    }
    return a.tape()->emit(make_node(Op::kGelu, {a}, std::move(out)));
}

Var relu(Var a) {
    const Tensor& av = a.value();
    Tensor out = av;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = av[i] > 0.0 ? av[i] : 0.0;
    return a.tape()->emit(make_node(Op::kRelu, {a}, std::move(out)));
}

Var slice_rows(Var a, int64_t row_begin, int64_t row_end) {
    const Tensor& av = a.value();
    require_matrix("slice_rows", av);
    if (row_begin < 0 || row_end > av.rows() || row_begin >= row_end) {
        throw std::invalid_argument("slice_rows: range [" + std::to_string(row_begin) + ", " +
                                    std::to_string(row_end) + ") invalid for shape " +
                                    av.shape_str());
    }
    Tensor out({row_end - row_begin, av.cols()});
    for (int64_t i = 0; i < out.rows(); ++i)
        for (int64_t j = 0; j < av.cols(); ++j) out(i, j) = av(row_begin + i, j);
    Node n = make_node(Op::kSliceRows, {a}, std::move(out));
    n.iargs = {row_begin, row_end};
    return a.tape()->emit(std::move(n));
}

Var slice_cols(Var a, int64_t col_begin, int64_t col_end) {
    const Tensor& av = a.value();
    require_matrix("slice_cols", av);
    if (col_begin < 0 || col_end > av.cols() || col_begin >= col_end) {
        throw std::invalid_argument("slice_cols: range [" + std::to_string(col_begin) + ", " +
                                    std::to_string(col_end) + ") invalid for shape " +
                                    av.shape_str());
    }
    Tensor out({av.rows(), col_end - col_begin});
    for (int64_t i = 0; i < av.rows(); ++i)
        for (int64_t j = 0; j < out.cols(); ++j) out(i, j) = av(i, col_begin + j);
    Node n = make_node(Op::kSliceCols, {a}, std::move(out));
    n.iargs = {col_begin, col_end};
    return a.tape()->emit(std::move(n));
}

Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: no operands");
    Tape* tape = parts[0].tape();
    int64_t rows = 0;
    const int64_t cols = parts[0].value().cols();
    for (Var p : parts) {
        same_tape("concat_rows", parts[0], p);
        require_matrix("concat_rows", p.value());
        if (p.value().cols() != cols) shape_error("concat_rows", parts[0].value(), p.value());
        rows += p.value().rows();
    }
    Tensor out({rows, cols});
    Node n;
    n.op = Op::kConcatRows;
    int64_t off = 0;
    for (Var p : parts) {
        const Tensor& pv = p.value();
        for (int64_t i = 0; i < pv.rows(); ++i)
            for (int64_t j = 0; j < cols; ++j) out(off + i, j) = pv(i, j);
        off += pv.rows();
        n.parents.push_back(p.id());
        n.needs_grad = n.needs_grad || tape->node(p.id()).needs_grad;
    }
    n.value = std::move(out);
    return tape->emit(std::move(n));
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no operands");
    Tape* tape = parts[0].tape();
    int64_t cols = 0;
    const int64_t rows = parts[0].value().rows();
    for (Var p : parts) {
        same_tape("concat_cols", parts[0], p);
        require_matrix("concat_cols", p.value());
        if (p.value().rows() != rows) shape_error("concat_cols", parts[0].value(), p.value());
        cols += p.value().cols();
    }
    Tensor out({rows, cols});
    Node n;
    n.op = Op::kConcatCols;
    int64_t off = 0;
    for (Var p : parts) {
        const Tensor& pv = p.value();
        for (int64_t i = 0; i < rows; ++i)
            for (int64_t j = 0; j < pv.cols(); ++j) out(i, off + j) = pv(i, j);
        off += pv.cols();
        n.parents.push_back(p.id());
        n.needs_grad = n.needs_grad || tape->node(p.id()).needs_grad;
    }
    n.value = std::move(out);
    return tape->emit(std::move(n));
}

Tensor sinusoidal_position_encoding(int64_t frames, int64_t dim, int64_t start_position) {
    Tensor pe({frames, dim});
    const double log_base = std::log(10000.0);
    for (int64_t t = 0; t < frames; ++t) {
        const double pos = static_cast<double>(start_position + t);
        for (int64_t d = 0; d < dim; ++d) {
            const int64_t pair = d / 2;
            const double freq = std::exp(-log_base * static_cast<double>(2 * pair) /
                                         static_cast<double>(dim));
            const double angle = pos * freq;
            pe(t, d) = (d % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    }
    return pe;
}

Var add_position_encoding(Var a, int64_t start_position) {
    const Tensor& av = a.value();
    require_matrix("add_position_encoding", av);
    Tensor pe = sinusoidal_position_encoding(av.rows(), av.cols(), start_position);
    Tensor out = av;
    out.add_scaled(pe, 1.0);
    Node n = make_node(Op::kAddPositionEncoding, {a}, std::move(out));
    n.iargs = {start_position};
    return a.tape()->emit(std::move(n));
}

Var cross_entropy_mean(Var logits, const std::vector<int64_t>& labels) {
    const Tensor& lv = logits.value();
    require_matrix("cross_entropy_mean", lv);
    if (static_cast<int64_t>(labels.size()) != lv.rows()) {
        throw std::invalid_argument("cross_entropy_mean: " + std::to_string(labels.size()) +
                                    " labels for logits " + lv.shape_str());
    }
    const int64_t t = lv.rows();
    const int64_t c = lv.cols();
    Tensor probs({t, c});
    double loss = 0.0;
    for (int64_t i = 0; i < t; ++i) {
        if (labels[i] < 0 || labels[i] >= c) {
            throw std::invalid_argument("cross_entropy_mean: label " + std::to_string(labels[i]) +
                                        " out of range for " + std::to_string(c) + " classes");
        }
        double m = lv(i, 0);
        for (int64_t j = 1; j < c; ++j) m = std::max(m, lv(i, j));
        double z = 0.0;
        for (int64_t j = 0; j < c; ++j) z += std::exp(lv(i, j) - m);
        const double log_z = m + std::log(z);
        loss += log_z - lv(i, labels[i]);
        for (int64_t j = 0; j < c; ++j) probs(i, j) = std::exp(lv(i, j) - log_z);
    }
    Tensor out({1});
    out[0] = loss / static_cast<double>(t);
    Node n = make_node(Op::kCrossEntropyMean, {logits}, std::move(out));
    n.saved = std::move(probs);
    n.iargs = labels;
    return logits.tape()->emit(std::move(n));
}

Var mse_mean(Var pred, Var target) {
    Tape* tape = same_tape("mse_mean", pred, target);
    const Tensor& pv = pred.value();
    const Tensor& tv = target.value();
    if (!pv.same_shape(tv)) shape_error("mse_mean", pv, tv);
    double acc = 0.0;
    for (int64_t i = 0; i < pv.numel(); ++i) {
        const double d = pv[i] - tv[i];
        acc += d * d;
    }
    Tensor out({1});
    out[0] = acc / static_cast<double>(pv.numel());
    return tape->emit(make_node(Op::kMseMean, {pred, target}, std::move(out)));
}

// ---- backward ---------------------------------------------------------------

namespace {

Tensor& grad_slot(std::vector<Tensor>& grads, const Node& parent, int32_t id) {
    if (grads[id].empty()) grads[id] = Tensor::zeros(parent.value.shape());
    return grads[id];
}

}  // namespace

void Tape::backward(int32_t output_id, const Tensor& seed, std::vector<Tensor>& grads) const {
    grads.assign(nodes_.size(), Tensor());
    grads[output_id] = seed;

    for (int32_t i = output_id; i >= 0; --i) {
        const Node& n = nodes_[i];
        if (grads[i].empty() || n.parents.empty() || !n.needs_grad) continue;
        const Tensor& g = grads[i];

        auto parent_needs = [&](int pi) { return nodes_[n.parents[pi]].needs_grad; };
        auto slot = [&](int pi) -> Tensor& {
            return grad_slot(grads, nodes_[n.parents[pi]], n.parents[pi]);
        };

        switch (n.op) {
            case Op::kLeaf:
                break;
            case Op::kMatmul: {
                const Tensor& a = nodes_[n.parents[0]].value;
                const Tensor& b = nodes_[n.parents[1]].value;
                if (parent_needs(0)) {
                    matmul_nt_acc(g.data(), b.data(), slot(0).data(), a.rows(), b.cols(),
                                  a.cols());
                }
                if (parent_needs(1)) {
                    matmul_tn_acc(a.data(), g.data(), slot(1).data(), a.rows(), a.cols(),
                                  b.cols());
                }
                break;
            }
            case Op::kTranspose: {
                if (parent_needs(0)) {
                    Tensor& da = slot(0);
                    for (int64_t r = 0; r < g.rows(); ++r)
                        for (int64_t c = 0; c < g.cols(); ++c) da(c, r) += g(r, c);
                }
                break;
            }
            case Op::kAdd: {
                if (parent_needs(0)) slot(0).add_scaled(g, 1.0);
                if (parent_needs(1)) slot(1).add_scaled(g, 1.0);
                break;
            }
            case Op::kAddRowVec: {
                if (parent_needs(0)) slot(0).add_scaled(g, 1.0);
                if (parent_needs(1)) {
                    Tensor& db = slot(1);
                    for (int64_t r = 0; r < g.rows(); ++r)
                        for (int64_t c = 0; c < g.cols(); ++c) db[c] += g(r, c);
                }
                break;
            }
            case Op::kMul: {
                const Tensor& a = nodes_[n.parents[0]].value;
                const Tensor& b = nodes_[n.parents[1]].value;
                if (parent_needs(0)) {
                    Tensor& da = slot(0);
                    for (int64_t j = 0; j < g.numel(); ++j) da[j] += g[j] * b[j];
                }
                if (parent_needs(1)) {
                    Tensor& db = slot(1);
                    for (int64_t j = 0; j < g.numel(); ++j) db[j] += g[j] * a[j];
                }
                break;
            }
            case Op::kScale: {
                if (parent_needs(0)) slot(0).add_scaled(g, n.darg);
                break;
            }
            case Op::kSoftmaxRows: {
                if (parent_needs(0)) {
                    const Tensor& y = n.value;  // softmax output
                    Tensor& dx = slot(0);
                    for (int64_t r = 0; r < y.rows(); ++r) {
                        double dot = 0.0;
                        for (int64_t c = 0; c < y.cols(); ++c) dot += g(r, c) * y(r, c);
                        for (int64_t c = 0; c < y.cols(); ++c)
                            dx(r, c) += y(r, c) * (g(r, c) - dot);
                    }
                }
                break;
            }
            case Op::kLayerNormRows: {
                const Tensor& normalized = n.saved;
                const Tensor& inv_std = n.saved2;
                const Tensor& gamma = nodes_[n.parents[1]].value;
                const int64_t rows = normalized.rows();
                const int64_t cols = normalized.cols();
                if (parent_needs(0)) {
                    Tensor& dx = slot(0);
                    for (int64_t r = 0; r < rows; ++r) {
                        double m1 = 0.0, m2 = 0.0;
                        for (int64_t c = 0; c < cols; ++c) {
                            const double gg = g(r, c) * gamma[c];
                            m1 += gg;
                            m2 += gg * normalized(r, c);
                        }
                        m1 /= static_cast<double>(cols);
                        m2 /= static_cast<double>(cols);
                        for (int64_t c = 0; c < cols; ++c) {
                            const double gg = g(r, c) * gamma[c];
                            dx(r, c) += inv_std[r] * (gg - m1 - normalized(r, c) * m2);
                        }
                    }
                }
                if (parent_needs(1)) {
                    Tensor& dgamma = slot(1);
                    for (int64_t r = 0; r < rows; ++r)
                        for (int64_t c = 0; c < cols; ++c)
                            dgamma[c] += g(r, c) * normalized(r, c);
                }
                if (parent_needs(2)) {
                    Tensor& dbeta = slot(2);
                    for (int64_t r = 0; r < rows; ++r)
                        for (int64_t c = 0; c < cols; ++c) dbeta[c] += g(r, c);
                }
                break;
            }
            case Op::kGelu: {
                if (parent_needs(0)) {
                    const Tensor& x = nodes_[n.parents[0]].value;
                    Tensor& dx = slot(0);
                    for (int64_t j = 0; j < g.numel(); ++j) {
                        const double xv = x[j];
                        const double d = 0.5 * (1.0 + std::erf(xv / kSqrt2)) +
                                         xv * std::exp(-0.5 * xv * xv) / kSqrt2Pi;
                        dx[j] += g[j] * d;
                    }
                }
                break;
            }
            case Op::kRelu: {
                if (parent_needs(0)) {
                    const Tensor& x = nodes_[n.parents[0]].value;
                    Tensor& dx = slot(0);
                    for (int64_t j = 0; j < g.numel(); ++j) {
                        if (x[j] > 0.0) dx[j] += g[j];
                    }
                }
                break;
            }
            case Op::kSliceRows: {
                if (parent_needs(0)) {
                    Tensor& da = slot(0);
                    const int64_t r0 = n.iargs[0];
                    for (int64_t r = 0; r < g.rows(); ++r)
                        for (int64_t c = 0; c < g.cols(); ++c) da(r0 + r, c) += g(r, c);
                }
                break;
            }
            case Op::kSliceCols: {
                if (parent_needs(0)) {
                    Tensor& da = slot(0);
                    const int64_t c0 = n.iargs[0];
                    for (int64_t r = 0; r < g.rows(); ++r)
                        for (int64_t c = 0; c < g.cols(); ++c) da(r, c0 + c) += g(r, c);
                }
                break;
            }
            case Op::kConcatRows: {
                int64_t off = 0;
                for (size_t pi = 0; pi < n.parents.size(); ++pi) {
                    const Tensor& pv = nodes_[n.parents[pi]].value;
                    if (nodes_[n.parents[pi]].needs_grad) {
                        Tensor& dp = grad_slot(grads, nodes_[n.parents[pi]], n.parents[pi]);
                        for (int64_t r = 0; r < pv.rows(); ++r)
                            for (int64_t c = 0; c < pv.cols(); ++c) dp(r, c) += g(off + r, c);
                    }
                    off += pv.rows();
                }
                break;
            }
            case Op::kConcatCols: {
                int64_t off = 0;
                for (size_t pi = 0; pi < n.parents.size(); ++pi) {
                    const Tensor& pv = nodes_[n.parents[pi]].value;
                    if (nodes_[n.parents[pi]].needs_grad) {
                        Tensor& dp = grad_slot(grads, nodes_[n.parents[pi]], n.parents[pi]);
                        for (int64_t r = 0; r < pv.rows(); ++r)
                            for (int64_t c = 0; c < pv.cols(); ++c) dp(r, c) += g(r, off + c);
                    }
                    off += pv.cols();
                }
                break;
            }
            case Op::kAddPositionEncoding: {
                if (parent_needs(0)) slot(0).add_scaled(g, 1.0);
                break;
            }
            case Op::kCrossEntropyMean: {
                if (parent_needs(0)) {
                    const Tensor& probs = n.saved;
                    Tensor& dl = slot(0);
                    const double scale = g[0] / static_cast<double>(probs.rows());
                    for (int64_t r = 0; r < probs.rows(); ++r) {
                        for (int64_t c = 0; c < probs.cols(); ++c)
                            dl(r, c) += scale * probs(r, c);
                        dl(r, n.iargs[r]) -= scale;
                    }
                }
                break;
            }
            case Op::kMseMean: {
                const Tensor& p = nodes_[n.parents[0]].value;
                const Tensor& t = nodes_[n.parents[1]].value;
                const double scale = 2.0 * g[0] / static_cast<double>(p.numel());
                if (parent_needs(0)) {
                    Tensor& dp = slot(0);
                    for (int64_t j = 0; j < p.numel(); ++j) dp[j] += scale * (p[j] - t[j]);
                }
                if (parent_needs(1)) {
                    Tensor& dt = slot(1);
                    for (int64_t j = 0; j < p.numel(); ++j) dt[j] -= scale * (p[j] - t[j]);
                }
                break;
            }
        }
    }
}

Tensor Tape::vjp(Var output, const Tensor& seed, Var wrt) const {
    if (output.tape() != this || wrt.tape() != this) {
        throw std::invalid_argument("vjp: output/wrt do not belong to this tape");
    }
    if (!seed.same_shape(output.value())) {
        throw std::invalid_argument("vjp: seed shape " + seed.shape_str() +
                                    " does not match output shape " +
                                    output.value().shape_str());
    }
    std::vector<Tensor> grads;
    backward(output.id(), seed, grads);
    if (grads[wrt.id()].empty()) return Tensor::zeros(wrt.value().shape());
    return std::move(grads[wrt.id()]);
}

std::vector<Tensor> Tape::vjp_multi(Var output, const Tensor& seed,
                                    const std::vector<Var>& wrts) const {
    if (!seed.same_shape(output.value())) {
        throw std::invalid_argument("vjp_multi: seed shape " + seed.shape_str() +
                                    " does not match output shape " +
                                    output.value().shape_str());
    }
    std::vector<Tensor> grads;
    backward(output.id(), seed, grads);
    std::vector<Tensor> result;
    result.reserve(wrts.size());
    for (Var w : wrts) {
        if (w.tape() != this) throw std::invalid_argument("vjp_multi: wrt on different tape");
        if (grads[w.id()].empty()) {
            result.push_back(Tensor::zeros(w.value().shape()));
        } else {
            result.push_back(std::move(grads[w.id()]));
        }
    }
    return result;
}

}  // namespace ctxmeter::autodiff
