#include "eg/conv.hpp"

#include <algorithm>

#include "eg/parallel.hpp"

namespace eg {

std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad,
                            const char* axis) {
    if (stride == 0) throw DimError("stride must be >= 1");
    const std::size_t padded = in + 2 * pad;
    if (padded < k) {
        throw DimError(std::string("kernel larger than padded input along axis ") + axis + ": " +
                       std::to_string(k) + " vs " + std::to_string(padded));
    }
    if ((padded - k) % stride != 0) {
        throw DimError(std::string("conv geometry does not tile along axis ") + axis + ": (" +
                       std::to_string(in) + " + 2*" + std::to_string(pad) + " - " +
                       std::to_string(k) + ") is not a multiple of stride " +
                       std::to_string(stride));
    }
    return (padded - k) / stride + 1;
}

namespace {

template <typename T>
void check_conv_args(const Tensor<T>& input, const Tensor<T>& kernel) {
    if (input.rank() != 4) {
        throw DimError("conv input must be 4-D [N,C,H,W], got " + shape_str(input.shape()));
    }
    if (kernel.rank() != 4) {
        throw DimError("conv kernel must be 4-D [Cout,Cin,K,K], got " + shape_str(kernel.shape()));
    }
    if (input.extent(1) != kernel.extent(1)) {
        throw DimError("conv channel mismatch at axis 1: input has " +
                       std::to_string(input.extent(1)) + ", kernel expects " +
                       std::to_string(kernel.extent(1)));
    }
    if (kernel.extent(2) != kernel.extent(3)) {
        throw DimError("conv kernel must be square, got " + shape_str(kernel.shape()));
    }
}

// Kernel taps t for output position o such that the padded coordinate
// o*stride + t - pad lands inside [0, extent). Returns [lo, hi).
std::pair<std::size_t, std::size_t> taps_in_range(std::size_t o, std::size_t stride,
                                                  std::size_t pad, std::size_t k,
                                                  std::size_t extent) {
    const std::ptrdiff_t base =
        static_cast<std::ptrdiff_t>(o * stride) - static_cast<std::ptrdiff_t>(pad);
    std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -base);
    std::ptrdiff_t hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(k),
                                                 static_cast<std::ptrdiff_t>(extent) - base);
    if (hi < lo) hi = lo;
    return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

// Output positions o for kernel tap t such that o*stride + t - pad lands
// inside [0, extent), clipped to [0, out_extent). Returns [lo, hi).
std::pair<std::size_t, std::size_t> lanes_in_range(std::size_t t, std::size_t stride,
                                                   std::size_t pad, std::size_t extent,
                                                   std::size_t out_extent) {
    const std::ptrdiff_t off =
        static_cast<std::ptrdiff_t>(t) - static_cast<std::ptrdiff_t>(pad);
    const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(stride);
    std::ptrdiff_t lo = off < 0 ? (-off + s - 1) / s : 0;
    const std::ptrdiff_t last = static_cast<std::ptrdiff_t>(extent) - 1 - off;
    std::ptrdiff_t hi = last < 0 ? lo
                                 : std::min<std::ptrdiff_t>(
                                       static_cast<std::ptrdiff_t>(out_extent), last / s + 1);
    if (hi < lo) hi = lo;
    return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

}  // namespace

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& kernel, std::size_t stride,
                         std::size_t pad) {
    check_conv_args(input, kernel);
    const std::size_t n_batch = input.extent(0), cin = input.extent(1);
    const std::size_t h = input.extent(2), w = input.extent(3);
    const std::size_t cout = kernel.extent(0), k = kernel.extent(2);
    const std::size_t hout = conv_out_extent(h, k, stride, pad, "H");
    const std::size_t wout = conv_out_extent(w, k, stride, pad, "W");

    std::vector<std::size_t> wlo(k), whi(k);
    for (std::size_t kw = 0; kw < k; ++kw) {
        const auto [lo, hi] = lanes_in_range(kw, stride, pad, w, wout);
        wlo[kw] = lo;
        whi[kw] = hi;
    }

    const T* in_base = input.data();
    const T* ker_base = kernel.data();
    Tensor<T> out({n_batch, cout, hout, wout});
    T* out_base = out.data();

    parallel_for(n_batch * cout, [&](std::size_t begin, std::size_t end) {
        std::vector<double> acc(wout);
        for (std::size_t idx = begin; idx < end; ++idx) {
            const std::size_t n = idx / cout, co = idx % cout;
            for (std::size_t ho = 0; ho < hout; ++ho) {
                std::fill(acc.begin(), acc.end(), 0.0);
                const auto [kh_lo, kh_hi] = taps_in_range(ho, stride, pad, k, h);
                for (std::size_t ci = 0; ci < cin; ++ci) {
                    const T* in_plane = in_base + (n * cin + ci) * h * w;
                    const T* ker_plane = ker_base + (co * cin + ci) * k * k;
                    for (std::size_t kh = kh_lo; kh < kh_hi; ++kh) {
                        const T* in_row = in_plane + (ho * stride + kh - pad) * w;
                        const T* ker_row = ker_plane + kh * k;
                        for (std::size_t kw = 0; kw < k; ++kw) {
                            const std::size_t lo = wlo[kw], hi = whi[kw];
                            if (lo >= hi) continue;
                            const double kv = static_cast<double>(ker_row[kw]);
                            const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(kw) -
                                                       static_cast<std::ptrdiff_t>(pad);
                            if (stride == 1) {
                                const T* src =
                                    in_row + (static_cast<std::ptrdiff_t>(lo) + off);
                                double* a = acc.data() + lo;
                                const std::size_t len = hi - lo;
                                for (std::size_t i = 0; i < len; ++i)
                                    a[i] += static_cast<double>(src[i]) * kv;
                            } else {
                                for (std::size_t wo = lo; wo < hi; ++wo)
                                    acc[wo] += static_cast<double>(
                                                   in_row[static_cast<std::ptrdiff_t>(
                                                              wo * stride) +
                                                          off]) *
                                               kv;
                            }
                        }
                    }
                }
                T* out_row = out_base + ((n * cout + co) * hout + ho) * wout;
                for (std::size_t wo = 0; wo < wout; ++wo)
                    out_row[wo] = static_cast<T>(acc[wo]);
            }
        }
    });
    return out;
}

template <typename T>
Tensor<T> conv2d_input_grad(const Tensor<T>& delta_out, const Tensor<T>& kernel,
                            std::size_t stride, std::size_t pad) {
    if (delta_out.rank() != 4) {
        throw DimError("conv delta must be 4-D [N,Cout,Hout,Wout], got " +
                       shape_str(delta_out.shape()));
    }
    if (kernel.rank() != 4) {
        throw DimError("conv kernel must be 4-D [Cout,Cin,K,K], got " + shape_str(kernel.shape()));
    }
    if (delta_out.extent(1) != kernel.extent(0)) {
        throw DimError("conv output-channel mismatch at axis 1: delta has " +
                       std::to_string(delta_out.extent(1)) + ", kernel has " +
                       std::to_string(kernel.extent(0)));
    }
    const std::size_t n_batch = delta_out.extent(0), cout = kernel.extent(0);
    const std::size_t cin = kernel.extent(1), k = kernel.extent(2);
    const std::size_t hout = delta_out.extent(2), wout = delta_out.extent(3);
    // The forward geometry is exact, so the input extent is recoverable.
    const std::size_t h = (hout - 1) * stride + k - 2 * pad;
    const std::size_t w = (wout - 1) * stride + k - 2 * pad;

    std::vector<std::size_t> wlo(k), whi(k);
    for (std::size_t kw = 0; kw < k; ++kw) {
        const auto [lo, hi] = lanes_in_range(kw, stride, pad, w, wout);
        wlo[kw] = lo;
        whi[kw] = hi;
    }

    const T* d_base = delta_out.data();
    const T* ker_base = kernel.data();
    Tensor<T> din({n_batch, cin, h, w});
    T* din_base = din.data();

    // Scatter form of the transposed convolution. Each batch item is owned by
    // one worker and the inner order is fixed, so results are independent of
    // the thread count. For a fixed kernel tap, distinct output columns write
    // distinct input columns, so the innermost loop has no self-overlap.
    parallel_for(n_batch, [&](std::size_t begin, std::size_t end) {
        for (std::size_t n = begin; n < end; ++n) {
            for (std::size_t co = 0; co < cout; ++co) {
                const T* d_plane = d_base + (n * cout + co) * hout * wout;
                const T* ker_co = ker_base + co * cin * k * k;
                for (std::size_t ho = 0; ho < hout; ++ho) {
                    const T* d_row = d_plane + ho * wout;
                    const auto [kh_lo, kh_hi] = taps_in_range(ho, stride, pad, k, h);
                    for (std::size_t ci = 0; ci < cin; ++ci) {
                        T* din_plane = din_base + (n * cin + ci) * h * w;
                        const T* ker_plane = ker_co + ci * k * k;
                        for (std::size_t kh = kh_lo; kh < kh_hi; ++kh) {
                            T* din_row = din_plane + (ho * stride + kh - pad) * w;
                            const T* ker_row = ker_plane + kh * k;
                            for (std::size_t kw = 0; kw < k; ++kw) {
                                const std::size_t lo = wlo[kw], hi = whi[kw];
                                if (lo >= hi) continue;
                                const T kv = ker_row[kw];
                                const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(kw) -
                                                           static_cast<std::ptrdiff_t>(pad);
                                if (stride == 1) {
                                    T* dst =
                                        din_row + (static_cast<std::ptrdiff_t>(lo) + off);
                                    const T* src = d_row + lo;
                                    const std::size_t len = hi - lo;
                                    for (std::size_t i = 0; i < len; ++i)
                                        dst[i] += src[i] * kv;
                                } else {
                                    for (std::size_t wo = lo; wo < hi; ++wo)
                                        din_row[static_cast<std::ptrdiff_t>(wo * stride) +
                                                off] += d_row[wo] * kv;
                                }
                            }
                        }
                    }
                }
            }
        }
    });
    return din;
}

template <typename T>
Tensor<T> conv2d_weight_grad(const Tensor<T>& input, const Tensor<T>& delta_out,
                             std::size_t stride, std::size_t pad) {
    if (input.rank() != 4 || delta_out.rank() != 4) {
        throw DimError("conv weight grad requires 4-D input and delta, got " +
                       shape_str(input.shape()) + " and " + shape_str(delta_out.shape()));
    }
    if (input.extent(0) != delta_out.extent(0)) {
        throw DimError("conv batch mismatch at axis 0: " + std::to_string(input.extent(0)) +
                       " vs " + std::to_string(delta_out.extent(0)));
    }
    const std::size_t n_batch = input.extent(0), cin = input.extent(1);
    const std::size_t h = input.extent(2), w = input.extent(3);
    const std::size_t cout = delta_out.extent(1);
    const std::size_t hout = delta_out.extent(2), wout = delta_out.extent(3);
    if (hout == 0 || (h + 2 * pad) < (hout - 1) * stride + 1) {
        throw DimError("conv delta extent inconsistent with input along axis H");
    }
    const std::size_t k = h + 2 * pad - (hout - 1) * stride;
    if (w + 2 * pad != (wout - 1) * stride + k) {
        throw DimError("conv delta extent inconsistent with input along axis W");
    }

    std::vector<std::size_t> wlo(k), whi(k);
    for (std::size_t kw = 0; kw < k; ++kw) {
        const auto [lo, hi] = lanes_in_range(kw, stride, pad, w, wout);
        wlo[kw] = lo;
        whi[kw] = hi;
    }

    const T* in_base = input.data();
    const T* d_base = delta_out.data();
    Tensor<T> dker({cout, cin, k, k});

    // Each tap (kh, kw) keeps one partial sum per output column; the final
    // value reduces those lanes in a fixed order. Output channels are owned
    // by one worker each, so results are independent of the thread count.
    parallel_for(cout, [&](std::size_t begin, std::size_t end) {
        std::vector<double> lanes;
        for (std::size_t co = begin; co < end; ++co) {
            for (std::size_t ci = 0; ci < cin; ++ci) {
                lanes.assign(k * k * wout, 0.0);
                for (std::size_t n = 0; n < n_batch; ++n) {
                    const T* in_plane = in_base + (n * cin + ci) * h * w;
                    const T* d_plane = d_base + (n * cout + co) * hout * wout;
                    for (std::size_t ho = 0; ho < hout; ++ho) {
                        const T* d_row = d_plane + ho * wout;
                        const auto [kh_lo, kh_hi] = taps_in_range(ho, stride, pad, k, h);
                        for (std::size_t kh = kh_lo; kh < kh_hi; ++kh) {
                            const T* in_row = in_plane + (ho * stride + kh - pad) * w;
                            double* lane_kh = lanes.data() + kh * k * wout;
                            for (std::size_t kw = 0; kw < k; ++kw) {
                                const std::size_t lo = wlo[kw], hi = whi[kw];
                                if (lo >= hi) continue;
                                double* lane = lane_kh + kw * wout;
                                const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(kw) -
                                                           static_cast<std::ptrdiff_t>(pad);
                                if (stride == 1) {
                                    const T* src =
                                        in_row + (static_cast<std::ptrdiff_t>(lo) + off);
                                    const T* dsrc = d_row + lo;
                                    double* a = lane + lo;
                                    const std::size_t len = hi - lo;
                                    for (std::size_t i = 0; i < len; ++i)
                                        a[i] += static_cast<double>(src[i]) *
                                                static_cast<double>(dsrc[i]);
                                } else {
                                    for (std::size_t wo = lo; wo < hi; ++wo)
                                        lane[wo] +=
                                            static_cast<double>(
                                                in_row[static_cast<std::ptrdiff_t>(
                                                           wo * stride) +
                                                       off]) *
                                            static_cast<double>(d_row[wo]);
                                }
                            }
                        }
                    }
                }
                for (std::size_t kh = 0; kh < k; ++kh) {
                    for (std::size_t kw = 0; kw < k; ++kw) {
                        const double* lane = lanes.data() + (kh * k + kw) * wout;
                        double sum = 0.0;
                        for (std::size_t wo = 0; wo < wout; ++wo) sum += lane[wo];
                        dker.at4(co, ci, kh, kw) = static_cast<T>(sum);
                    }
                }
            }
        }
    });
    return dker;
}

template <typename T>
std::pair<Tensor<T>, std::vector<std::size_t>> maxpool_forward(const Tensor<T>& input,
                                                               std::size_t k, std::size_t stride) {
    if (input.rank() != 4) {
        throw DimError("maxpool input must be 4-D [N,C,H,W], got " + shape_str(input.shape()));
    }
    const std::size_t n_batch = input.extent(0), c = input.extent(1);
    const std::size_t h = input.extent(2), w = input.extent(3);
    const std::size_t hout = conv_out_extent(h, k, stride, 0, "H");
    const std::size_t wout = conv_out_extent(w, k, stride, 0, "W");

    Tensor<T> out({n_batch, c, hout, wout});
    std::vector<std::size_t> argmax(out.size());
    parallel_for(n_batch * c, [&](std::size_t begin, std::size_t end) {
        for (std::size_t idx = begin; idx < end; ++idx) {
            const std::size_t n = idx / c, ch = idx % c;
            for (std::size_t ho = 0; ho < hout; ++ho) {
                for (std::size_t wo = 0; wo < wout; ++wo) {
                    std::size_t best = ((n * c + ch) * h + ho * stride) * w + wo * stride;
                    T best_v = input[best];
                    for (std::size_t kh = 0; kh < k; ++kh) {
                        for (std::size_t kw = 0; kw < k; ++kw) {
                            const std::size_t pos =
                                ((n * c + ch) * h + ho * stride + kh) * w + wo * stride + kw;
                            if (input[pos] > best_v) {
                                best_v = input[pos];
                                best = pos;
                            }
                        }
                    }
                    const std::size_t o = ((n * c + ch) * hout + ho) * wout + wo;
                    out[o] = best_v;
                    argmax[o] = best;
                }
            }
        }
    });
    return {std::move(out), std::move(argmax)};
}

template <typename T>
Tensor<T> maxpool_backward(const Tensor<T>& delta_out, const std::vector<std::size_t>& argmax,
                           const std::vector<std::size_t>& input_shape) {
    if (delta_out.size() != argmax.size()) {
        throw StateError("maxpool backward: argmax trace does not match delta size");
    }
    Tensor<T> din(input_shape);
    for (std::size_t i = 0; i < delta_out.size(); ++i) {
        din[argmax[i]] += delta_out[i];  // windows may overlap when stride < k
    }
    return din;
}

#define EG_INSTANTIATE_CONV(T)                                                                   \
    template Tensor<T> conv2d_forward<T>(const Tensor<T>&, const Tensor<T>&, std::size_t,       \
                                         std::size_t);                                          \
    template Tensor<T> conv2d_input_grad<T>(const Tensor<T>&, const Tensor<T>&, std::size_t,    \
                                            std::size_t);                                       \
    template Tensor<T> conv2d_weight_grad<T>(const Tensor<T>&, const Tensor<T>&, std::size_t,   \
                                             std::size_t);                                      \
    template std::pair<Tensor<T>, std::vector<std::size_t>> maxpool_forward<T>(                 \
        const Tensor<T>&, std::size_t, std::size_t);                                           \
    template Tensor<T> maxpool_backward<T>(const Tensor<T>&, const std::vector<std::size_t>&,   \
                                           const std::vector<std::size_t>&);

EG_INSTANTIATE_CONV(float)
EG_INSTANTIATE_CONV(double)

}  // namespace eg
