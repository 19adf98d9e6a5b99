#include "eg/tensor.hpp"

#include <cmath>

#include "eg/parallel.hpp"

namespace eg {

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2) {
        throw DimError("matmul requires 2-D tensors, got " + shape_str(a.shape()) + " and " +
                       shape_str(b.shape()));
    }
    if (a.extent(1) != b.extent(0)) {
        throw DimError("matmul inner extents differ at axis 1 of lhs / axis 0 of rhs: " +
                       std::to_string(a.extent(1)) + " vs " + std::to_string(b.extent(0)));
    }
    const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
    Tensor<T> out({m, n});
    parallel_for(m, [&](std::size_t r0, std::size_t r1) {
        for (std::size_t i = r0; i < r1; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                double acc = 0.0;
                for (std::size_t l = 0; l < k; ++l) {
                    acc += static_cast<double>(a.at2(i, l)) * static_cast<double>(b.at2(l, j));
                }
                out.at2(i, j) = static_cast<T>(acc);
            }
        }
    });
    return out;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
    if (a.rank() != 2) throw DimError("transpose requires a 2-D tensor, got " + shape_str(a.shape()));
    const std::size_t m = a.extent(0), n = a.extent(1);
    Tensor<T> out({n, m});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) out.at2(j, i) = a.at2(i, j);
    }
    return out;
}

namespace {

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.same_shape(b)) return;
    if (a.rank() != b.rank()) {
        throw DimError(std::string(op) + ": rank mismatch " + shape_str(a.shape()) + " vs " +
                       shape_str(b.shape()));
    }
    for (std::size_t i = 0; i < a.rank(); ++i) {
        if (a.extent(i) != b.extent(i)) {
            throw DimError(std::string(op) + ": extents differ at axis " + std::to_string(i) +
                           ": " + std::to_string(a.extent(i)) + " vs " + std::to_string(b.extent(i)));
        }
    }
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a, b, "add");
    Tensor<T> out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a, b, "mul");
    Tensor<T> out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
    Tensor<T> out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * s;
    return out;
}

template <typename T>
double reduce_sum(const Tensor<T>& t) {
    double acc = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) acc += static_cast<double>(t[i]);
    return acc;
}

template <typename T>
double reduce_mean(const Tensor<T>& t) {
    return reduce_sum(t) / static_cast<double>(t.size());
}

template <typename T>
double reduce_std(const Tensor<T>& t) {
    const double m = reduce_mean(t);
    double acc = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double d = static_cast<double>(t[i]) - m;
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(t.size()));
}

template <typename T>
Tensor<T> reduce_sum_axis(const Tensor<T>& t, std::size_t axis) {
    if (axis >= t.rank()) {
        throw DimError("reduce_sum_axis: axis " + std::to_string(axis) + " out of range for " +
                       shape_str(t.shape()));
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= t.extent(i);
    for (std::size_t i = axis + 1; i < t.rank(); ++i) inner *= t.extent(i);
    const std::size_t mid = t.extent(axis);

    std::vector<std::size_t> out_shape;
    for (std::size_t i = 0; i < t.rank(); ++i) {
        if (i != axis) out_shape.push_back(t.extent(i));
    }
    if (out_shape.empty()) out_shape.push_back(1);

    Tensor<T> out(out_shape);
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            double acc = 0.0;
            for (std::size_t m = 0; m < mid; ++m) {
                acc += static_cast<double>(t[(o * mid + m) * inner + in]);
            }
            out[o * inner + in] = static_cast<T>(acc);
        }
    }
    return out;
}

template <typename T>
bool has_nonfinite(const Tensor<T>& t) {
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (!std::isfinite(static_cast<double>(t[i]))) return true;
    }
    return false;
}

#define EG_INSTANTIATE_TENSOR_OPS(T)                                        \
    template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);      \
    template Tensor<T> transpose<T>(const Tensor<T>&);                     \
    template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);         \
    template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);         \
    template Tensor<T> scale<T>(const Tensor<T>&, T);                      \
    template double reduce_sum<T>(const Tensor<T>&);                       \
    template double reduce_mean<T>(const Tensor<T>&);                      \
    template double reduce_std<T>(const Tensor<T>&);                       \
    template Tensor<T> reduce_sum_axis<T>(const Tensor<T>&, std::size_t);  \
    template bool has_nonfinite<T>(const Tensor<T>&);

EG_INSTANTIATE_TENSOR_OPS(float)
EG_INSTANTIATE_TENSOR_OPS(double)

}  // namespace eg
