#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "eg/errors.hpp"

namespace eg {

/// Dense n-dimensional array, row-major. 4-D tensors are NCHW, 2-D are
/// rows x cols. Extents are always >= 1 and product(shape) == size().
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
        validate_shape();
        data_.assign(count(), T{0});
    }

    Tensor(std::vector<std::size_t> shape, std::vector<T> values)
        : shape_(std::move(shape)), data_(std::move(values)) {
        validate_shape();
        if (data_.size() != count()) {
            throw DimError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape product " + std::to_string(count()));
        }
    }

    static Tensor full(std::vector<std::size_t> shape, T value) {
        Tensor t(std::move(shape));
        for (auto& v : t.data_) v = value;
        return t;
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t extent(std::size_t axis) const { return shape_.at(axis); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    // 2-D / 4-D element access used by the kernels; no bounds checks.
    T& at2(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    const T& at2(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
    T& at4(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }
    const T& at4(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    /// Same data, new shape with equal element count.
    Tensor reshaped(std::vector<std::size_t> shape) const {
        Tensor t;
        t.shape_ = std::move(shape);
        t.validate_shape();
        if (t.count() != data_.size()) {
            throw DimError("reshape to incompatible element count");
        }
        t.data_ = data_;
        return t;
    }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.size());
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return Tensor<U>(shape_, std::move(out));
    }

private:
    std::size_t count() const {
        std::size_t n = 1;
        for (auto e : shape_) n *= e;
        return shape_.empty() ? 0 : n;
    }

    void validate_shape() const {
        if (shape_.empty()) throw DimError("tensor shape must have at least one axis");
        for (std::size_t i = 0; i < shape_.size(); ++i) {
            if (shape_[i] == 0) {
                throw DimError("tensor extent must be >= 1, got 0 at axis " + std::to_string(i));
            }
        }
    }

    std::vector<std::size_t> shape_;
    std::vector<T> data_;
};

std::string shape_str(const std::vector<std::size_t>& shape);

// ---- dense linear algebra ----

/// out[m,n] = a[m,k] . b[k,n], accumulated in 64-bit.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> transpose(const Tensor<T>& a);

// ---- elementwise ----

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s);

// ---- reductions (64-bit accumulation, fixed order) ----

template <typename T>
double reduce_sum(const Tensor<T>& t);

template <typename T>
double reduce_mean(const Tensor<T>& t);

/// Population standard deviation over all elements.
template <typename T>
double reduce_std(const Tensor<T>& t);

/// Sum over one axis; the result drops that axis (keeps rank >= 1).
template <typename T>
Tensor<T> reduce_sum_axis(const Tensor<T>& t, std::size_t axis);

template <typename T>
bool has_nonfinite(const Tensor<T>& t);

}  // namespace eg
