#include "ctxmeter/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ctxmeter {

namespace {

int64_t shape_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        if (d < 0) throw std::invalid_argument("tensor shape has negative dimension");
        n *= d;
    }
    return n;
}

}  // namespace

Tensor::Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<size_t>(shape_numel(shape_)), 0.0);
    cols_cached_ = shape_.empty() ? 0 : shape_.back();
}

Tensor::Tensor(std::vector<int64_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != static_cast<int64_t>(data_.size())) {
        throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                    " does not match shape " + shape_str());
    }
    cols_cached_ = shape_.empty() ? 0 : shape_.back();
}

Tensor Tensor::full(std::vector<int64_t> shape, double value) {
    Tensor t(std::move(shape));
    t.fill(value);
    return t;
}

Tensor Tensor::vector(std::vector<double> values) {
    const int64_t n = static_cast<int64_t>(values.size());
    return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(int64_t rows, int64_t cols, std::vector<double> data) {
    return Tensor({rows, cols}, std::move(data));
}

Tensor Tensor::identity(int64_t n) {
    Tensor t({n, n});
    for (int64_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
}

int64_t Tensor::rows() const {
    if (ndim() != 2) throw std::invalid_argument("rows() on non-matrix tensor " + shape_str());
    return shape_[0];
}

int64_t Tensor::cols() const {
    if (ndim() != 2) throw std::invalid_argument("cols() on non-matrix tensor " + shape_str());
    return shape_[1];
}

std::string Tensor::shape_str() const {
    if (shape_.empty()) return "scalar";
    std::string s;
    for (size_t i = 0; i < shape_.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape_[i]);
    }
    return s;
}

void Tensor::fill(double value) {
    for (double& v : data_) v = value;
}

void Tensor::add_scaled(const Tensor& other, double alpha) {
    if (!same_shape(other)) {
        throw std::invalid_argument("add_scaled shape mismatch: " + shape_str() + " vs " +
                                    other.shape_str());
    }
    for (size_t i = 0; i < data_.size(); ++i) data_[i] += alpha * other.data_[i];
}

void Tensor::scale_inplace(double alpha) {
    for (double& v : data_) v *= alpha;
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

double l2_distance(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument("l2_distance shape mismatch: " + a.shape_str() + " vs " +
                                    b.shape_str());
    }
    double acc = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

Tensor slice_rows_copy(const Tensor& m, int64_t row_begin, int64_t row_end) {
    if (m.ndim() != 2 || row_begin < 0 || row_end > m.rows() || row_begin >= row_end) {
        throw std::invalid_argument("slice_rows_copy: range [" + std::to_string(row_begin) +
                                    ", " + std::to_string(row_end) + ") invalid for " +
                                    m.shape_str());
    }
    Tensor out({row_end - row_begin, m.cols()});
    for (int64_t r = 0; r < out.rows(); ++r)
        for (int64_t c = 0; c < m.cols(); ++c) out(r, c) = m(row_begin + r, c);
    return out;
}

Tensor row_copy(const Tensor& m, int64_t r) {
    Tensor out({m.cols()});
    for (int64_t c = 0; c < m.cols(); ++c) out[c] = m(r, c);
    return out;
}

double max_abs(const Tensor& a) {
    double m = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i]));
    return m;
}

double max_rel_error(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument("max_rel_error shape mismatch: " + a.shape_str() + " vs " +
                                    b.shape_str());
    }
    const double floor = 1e-6 * std::max({max_abs(a), max_abs(b), 1e-30});
    double worst = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
        worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
    }
    return worst;
}

}  // namespace ctxmeter
