#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ctxmeter {

// Dense row-major tensor of doubles. Rank 1 (vectors) and rank 2 (frame
// matrices) cover everything in this project; the shape is kept as a vector
// so gradients always mirror their tensor exactly. All measurement-path
// arithmetic is 64-bit.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int64_t> shape);
    Tensor(std::vector<int64_t> shape, std::vector<double> data);

    static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int64_t> shape, double value);
    static Tensor vector(std::vector<double> values);
    static Tensor matrix(int64_t rows, int64_t cols, std::vector<double> data);
    static Tensor identity(int64_t n);

    int64_t ndim() const { return static_cast<int64_t>(shape_.size()); }
    const std::vector<int64_t>& shape() const { return shape_; }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    // 2-D accessors; throw on rank mismatch so shape bugs fail loudly.
    int64_t rows() const;
    int64_t cols() const;
    double& operator()(int64_t r, int64_t c) { return data_[r * cols_cached_ + c]; }
    double operator()(int64_t r, int64_t c) const { return data_[r * cols_cached_ + c]; }

    double& operator[](int64_t i) { return data_[i]; }
    double operator[](int64_t i) const { return data_[i]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    std::string shape_str() const;  // e.g. "3x4"

    void fill(double value);
    void add_scaled(const Tensor& other, double alpha);  // this += alpha * other
    void scale_inplace(double alpha);

    bool all_finite() const;

    bool operator==(const Tensor& other) const {
        return shape_ == other.shape_ && data_ == other.data_;
    }

private:
    std::vector<int64_t> shape_;
    std::vector<double> data_;
    int64_t cols_cached_ = 0;  // last dim, for operator()
};

// Flat Euclidean distance; shapes must match.
double l2_distance(const Tensor& a, const Tensor& b);
double max_abs(const Tensor& a);

// Copy of rows [row_begin, row_end) of a matrix.
Tensor slice_rows_copy(const Tensor& m, int64_t row_begin, int64_t row_end);
// Copy of row r as a shape-{cols} vector.
Tensor row_copy(const Tensor& m, int64_t r);

// Max over entries of |a - b| / max(|a_i|, |b_i|, floor) where the floor is
// 1e-6 of the larger magnitude in either tensor. The floor keeps structural
// zeros from blowing up against finite-difference noise.
double max_rel_error(const Tensor& a, const Tensor& b);

}  // namespace ctxmeter
