#pragma once

#include <utility>

#include "eg/tensor.hpp"

namespace eg {

/// Output spatial extent of a convolution along one axis, validated:
/// (in + 2*pad - k) must be a nonnegative multiple of stride.
std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad,
                            const char* axis);

/// Cross-correlation of input[N,Cin,H,W] with kernel[Cout,Cin,K,K], zero
/// padding. No bias, no activation.
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& kernel, std::size_t stride,
                         std::size_t pad);

/// Gradient of conv2d_forward w.r.t. its input: full convolution of
/// delta_out with the 180-degree-rotated, channel-swapped kernel. The kernel
/// argument is whatever modulatory matrix the backward pass uses; it only has
/// to match the forward kernel's shape.
template <typename T>
Tensor<T> conv2d_input_grad(const Tensor<T>& delta_out, const Tensor<T>& kernel,
                            std::size_t stride, std::size_t pad);

/// Gradient of conv2d_forward w.r.t. the kernel, summed over the batch.
template <typename T>
Tensor<T> conv2d_weight_grad(const Tensor<T>& input, const Tensor<T>& delta_out,
                             std::size_t stride, std::size_t pad);

/// Max pooling over kxk windows. Returns the pooled tensor and the flat
/// input index of each window maximum (first occurrence wins ties).
template <typename T>
std::pair<Tensor<T>, std::vector<std::size_t>> maxpool_forward(const Tensor<T>& input,
                                                               std::size_t k, std::size_t stride);

/// Routes delta_out back to the recorded argmax positions.
template <typename T>
Tensor<T> maxpool_backward(const Tensor<T>& delta_out, const std::vector<std::size_t>& argmax,
                           const std::vector<std::size_t>& input_shape);

}  // namespace eg
