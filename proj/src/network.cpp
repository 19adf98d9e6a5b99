#include "eg/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>

#include "eg/conv.hpp"
#include "eg/errors.hpp"
#include "eg/parallel.hpp"
#include "eg/rng.hpp"

namespace eg {

bool is_weighted(LayerKind kind) { return kind == LayerKind::Conv2d || kind == LayerKind::Linear; }

bool is_loss(LayerKind kind) {
    return kind == LayerKind::SoftmaxCrossEntropy || kind == LayerKind::MSEOutput;
}

const char* layer_kind_name(LayerKind kind) {
    switch (kind) {
        case LayerKind::Conv2d: return "conv2d";
        case LayerKind::Linear: return "linear";
        case LayerKind::ReLU: return "relu";
        case LayerKind::BatchNorm: return "batch_norm";
        case LayerKind::MaxPool2d: return "max_pool2d";
        case LayerKind::SoftmaxCrossEntropy: return "softmax_cross_entropy";
        case LayerKind::MSEOutput: return "mse_output";
    }
    return "?";
}

LayerKind layer_kind_from_name(const std::string& name) {
    for (LayerKind k : {LayerKind::Conv2d, LayerKind::Linear, LayerKind::ReLU,
                        LayerKind::BatchNorm, LayerKind::MaxPool2d,
                        LayerKind::SoftmaxCrossEntropy, LayerKind::MSEOutput}) {
        if (name == layer_kind_name(k)) return k;
    }
    throw ConfigError("unknown layer kind '" + name + "'");
}

LayerSpec LayerSpec::conv2d(std::size_t out_channels, std::size_t kernel, std::size_t stride,
                            std::size_t pad) {
    LayerSpec s;
    s.kind = LayerKind::Conv2d;
    s.out_channels = out_channels;
    s.kernel = kernel;
    s.stride = stride;
    s.pad = pad;
    return s;
}

LayerSpec LayerSpec::linear(std::size_t out_features) {
    LayerSpec s;
    s.kind = LayerKind::Linear;
    s.out_features = out_features;
    return s;
}

LayerSpec LayerSpec::relu() {
    LayerSpec s;
    s.kind = LayerKind::ReLU;
    return s;
}

LayerSpec LayerSpec::batch_norm(double momentum, double epsilon) {
    LayerSpec s;
    s.kind = LayerKind::BatchNorm;
    s.momentum = momentum;
    s.epsilon = epsilon;
    return s;
}

LayerSpec LayerSpec::max_pool(std::size_t kernel, std::size_t stride) {
    LayerSpec s;
    s.kind = LayerKind::MaxPool2d;
    s.kernel = kernel;
    s.stride = stride == 0 ? kernel : stride;
    return s;
}

LayerSpec LayerSpec::softmax_cross_entropy() {
    LayerSpec s;
    s.kind = LayerKind::SoftmaxCrossEntropy;
    return s;
}

LayerSpec LayerSpec::mse_output() {
    LayerSpec s;
    s.kind = LayerKind::MSEOutput;
    return s;
}

template <typename T>
void ForwardTrace<T>::clear() {
    training = false;
    batch_n = 0;
    inputs.clear();
    pool_argmax.clear();
    bn_xhat.clear();
    bn_invstd.clear();
    probs = Tensor<T>();
    labels.clear();
    targets = Tensor<T>();
    valid = false;
}

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t p = 1;
    for (std::size_t e : shape) p *= e;
    return p;
}

template <typename T>
Tensor<T> as_matrix(const Tensor<T>& x) {
    if (x.rank() == 2) return x;
    std::size_t n = x.extent(0);
    return x.reshaped({n, x.size() / n});
}

template <typename T>
Tensor<T> forward_conv(const Layer<T>& layer, const Tensor<T>& x) {
    Tensor<T> out = conv2d_forward(x, layer.weight, layer.spec.stride, layer.spec.pad);
    const std::size_t n = out.extent(0), c = out.extent(1);
    const std::size_t hw = out.extent(2) * out.extent(3);
    parallel_for(n * c, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const T b = layer.bias[i % c];
            T* p = out.data() + i * hw;
            for (std::size_t j = 0; j < hw; ++j) p[j] += b;
        }
    });
    return out;
}

template <typename T>
Tensor<T> forward_linear(const Layer<T>& layer, const Tensor<T>& x) {
    Tensor<T> x2 = as_matrix(x);
    Tensor<T> out = matmul(x2, transpose(layer.weight));
    const std::size_t n = out.extent(0), f = out.extent(1);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < f; ++c) out.at2(r, c) += layer.bias[c];
    return out;
}

template <typename T>
Tensor<T> forward_relu(const Tensor<T>& x) {
    Tensor<T> out(x.shape());
    parallel_for(x.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) out[i] = x[i] > T{0} ? x[i] : T{0};
    });
    return out;
}

// View any BN input as [N, C, S]: C = per-sample leading extent, S = rest.
template <typename T>
void bn_geometry(const Tensor<T>& x, std::size_t& n, std::size_t& c, std::size_t& s) {
    n = x.extent(0);
    c = x.extent(1);
    s = x.size() / (n * c);
}

template <typename T>
Tensor<T> forward_bn_train(Layer<T>& layer, const Tensor<T>& x, Tensor<T>& xhat_out,
                           Tensor<T>& invstd_out) {
    std::size_t n, c, s;
    bn_geometry(x, n, c, s);
    const double m = static_cast<double>(n * s);
    Tensor<T> out(x.shape());
    xhat_out = Tensor<T>(x.shape());
    invstd_out = Tensor<T>({c});
    const double eps = layer.spec.epsilon;
    const double mom = layer.spec.momentum;
    parallel_for(c, [&](std::size_t begin, std::size_t end) {
        for (std::size_t ch = begin; ch < end; ++ch) {
            double sum = 0.0;
            for (std::size_t b = 0; b < n; ++b) {
                const T* p = x.data() + (b * c + ch) * s;
                for (std::size_t j = 0; j < s; ++j) sum += static_cast<double>(p[j]);
            }
            const double mean = sum / m;
            double var_acc = 0.0;
            for (std::size_t b = 0; b < n; ++b) {
                const T* p = x.data() + (b * c + ch) * s;
                for (std::size_t j = 0; j < s; ++j) {
                    const double d = static_cast<double>(p[j]) - mean;
                    var_acc += d * d;
                }
            }
            const double var = var_acc / m;  // population statistics
            const double inv = 1.0 / std::sqrt(var + eps);
            invstd_out[ch] = static_cast<T>(inv);
            const double g = static_cast<double>(layer.gamma[ch]);
            const double bt = static_cast<double>(layer.beta[ch]);
            for (std::size_t b = 0; b < n; ++b) {
                const T* p = x.data() + (b * c + ch) * s;
                T* ph = xhat_out.data() + (b * c + ch) * s;
                T* po = out.data() + (b * c + ch) * s;
                for (std::size_t j = 0; j < s; ++j) {
                    const double h = (static_cast<double>(p[j]) - mean) * inv;
                    ph[j] = static_cast<T>(h);
                    po[j] = static_cast<T>(g * h + bt);
                }
            }
            layer.running_mean[ch] =
                static_cast<T>((1.0 - mom) * static_cast<double>(layer.running_mean[ch]) +
                               mom * mean);
            layer.running_var[ch] = static_cast<T>(
                (1.0 - mom) * static_cast<double>(layer.running_var[ch]) + mom * var);
        }
    });
    return out;
}

template <typename T>
Tensor<T> forward_bn_eval(const Layer<T>& layer, const Tensor<T>& x) {
    std::size_t n, c, s;
    bn_geometry(x, n, c, s);
    Tensor<T> out(x.shape());
    const double eps = layer.spec.epsilon;
    parallel_for(c, [&](std::size_t begin, std::size_t end) {
        for (std::size_t ch = begin; ch < end; ++ch) {
            const double mean = static_cast<double>(layer.running_mean[ch]);
            const double inv = 1.0 / std::sqrt(static_cast<double>(layer.running_var[ch]) + eps);
            const double g = static_cast<double>(layer.gamma[ch]);
            const double bt = static_cast<double>(layer.beta[ch]);
            for (std::size_t b = 0; b < n; ++b) {
                const T* p = x.data() + (b * c + ch) * s;
                T* po = out.data() + (b * c + ch) * s;
                for (std::size_t j = 0; j < s; ++j)
                    po[j] = static_cast<T>(g * (static_cast<double>(p[j]) - mean) * inv + bt);
            }
        }
    });
    return out;
}

}  // namespace

template <typename T>
std::size_t Network<T>::num_params() const {
    std::size_t n = 0;
    for (const Layer<T>& l : layers)
        n += l.weight.size() + l.bias.size() + l.gamma.size() + l.beta.size();
    return n;
}

template <typename T>
std::vector<std::size_t> Network<T>::weighted_layers() const {
    std::vector<std::size_t> out;
    for (std::size_t l = 0; l < layers.size(); ++l)
        if (is_weighted(layers[l].spec.kind)) out.push_back(l);
    return out;
}

template <typename T>
ForwardResult Network<T>::forward_impl(const Tensor<T>& batch, const std::vector<int>* labels,
                                       const Tensor<T>* targets, ForwardTrace<T>& trace,
                                       bool training) {
    const std::size_t L = layers.size();
    if (L == 0) throw StateError("network has no layers");
    if (batch.rank() != input_shape.size() + 1) {
        throw DimError("batch rank " + std::to_string(batch.rank()) + " does not fit input shape " +
                       shape_str(input_shape));
    }
    for (std::size_t a = 0; a < input_shape.size(); ++a) {
        if (batch.extent(a + 1) != input_shape[a]) {
            throw DimError("batch axis " + std::to_string(a + 1) + " is " +
                           std::to_string(batch.extent(a + 1)) + ", network expects " +
                           std::to_string(input_shape[a]));
        }
    }

    trace.clear();
    trace.training = training;
    trace.batch_n = batch.extent(0);
    trace.inputs.resize(L);
    trace.pool_argmax.resize(L);
    trace.bn_xhat.resize(L);
    trace.bn_invstd.resize(L);

    const std::size_t n = batch.extent(0);
    Tensor<T> x = batch;
    for (std::size_t l = 0; l + 1 < L; ++l) {
        trace.inputs[l] = std::move(x);
        const Tensor<T>& in = trace.inputs[l];
        Layer<T>& layer = layers[l];
        switch (layer.spec.kind) {
            case LayerKind::Conv2d: x = forward_conv(layer, in); break;
            case LayerKind::Linear: x = forward_linear(layer, in); break;
            case LayerKind::ReLU: x = forward_relu(in); break;
            case LayerKind::BatchNorm:
                x = training ? forward_bn_train(layer, in, trace.bn_xhat[l], trace.bn_invstd[l])
                             : forward_bn_eval(layer, in);
                break;
            case LayerKind::MaxPool2d: {
                auto [pooled, argmax] = maxpool_forward(in, layer.spec.kernel, layer.spec.stride);
                x = std::move(pooled);
                trace.pool_argmax[l] = std::move(argmax);
                break;
            }
            default: throw StateError("loss layer in the middle of the network");
        }
    }
    trace.inputs[L - 1] = std::move(x);
    const Tensor<T>& act = trace.inputs[L - 1];

    ForwardResult result;
    const LayerKind loss_kind = layers[L - 1].spec.kind;
    if (loss_kind == LayerKind::SoftmaxCrossEntropy) {
        if (labels == nullptr) {
            throw ContractError("softmax cross-entropy forward requires class labels");
        }
        if (act.rank() != 2) {
            throw ContractError("softmax cross-entropy requires a 2-D activation, got " +
                                shape_str(act.shape()));
        }
        const std::size_t classes = act.extent(1);
        if (labels->size() != n) {
            throw ContractError("label count " + std::to_string(labels->size()) +
                                " does not match batch size " + std::to_string(n));
        }
        for (int y : *labels) {
            if (y < 0 || static_cast<std::size_t>(y) >= classes) {
                throw ContractError("label " + std::to_string(y) + " outside [0, " +
                                    std::to_string(classes) + ")");
            }
        }
        trace.labels = *labels;
        trace.probs = Tensor<T>(act.shape());
        std::vector<double> row_loss(n);
        parallel_for(n, [&](std::size_t begin, std::size_t end) {
            for (std::size_t r = begin; r < end; ++r) {
                double mx = static_cast<double>(act.at2(r, 0));
                for (std::size_t cc = 1; cc < classes; ++cc)
                    mx = std::max(mx, static_cast<double>(act.at2(r, cc)));
                double se = 0.0;
                for (std::size_t cc = 0; cc < classes; ++cc)
                    se += std::exp(static_cast<double>(act.at2(r, cc)) - mx);
                const double lse = mx + std::log(se);
                for (std::size_t cc = 0; cc < classes; ++cc) {
                    trace.probs.at2(r, cc) =
                        static_cast<T>(std::exp(static_cast<double>(act.at2(r, cc)) - lse));
                }
                row_loss[r] = lse - static_cast<double>(act.at2(r, (*labels)[r]));
            }
        });
        double total = 0.0;
        for (double v : row_loss) total += v;
        result.loss = total / static_cast<double>(n);
    } else {  // MSEOutput
        if (targets == nullptr) throw ContractError("mse forward requires a target tensor");
        if (!act.same_shape(*targets)) {
            throw DimError("mse target shape " + shape_str(targets->shape()) +
                           " does not match output " + shape_str(act.shape()));
        }
        trace.targets = *targets;
        double total = 0.0;
        for (std::size_t i = 0; i < act.size(); ++i) {
            const double d = static_cast<double>(act[i]) - static_cast<double>((*targets)[i]);
            total += d * d;
        }
        result.loss = total / (2.0 * static_cast<double>(n));
    }

    if (!std::isfinite(result.loss)) {
        for (std::size_t l = 1; l < L; ++l) {
            if (has_nonfinite(trace.inputs[l])) {
                throw NumericError("non-finite activation during forward pass",
                                   static_cast<int>(l - 1));
            }
        }
        throw NumericError("non-finite loss", static_cast<int>(L - 1));
    }

    if (act.rank() == 2) {
        result.predictions.resize(n);
        for (std::size_t r = 0; r < n; ++r) {
            std::size_t best = 0;
            for (std::size_t cc = 1; cc < act.extent(1); ++cc)
                if (act.at2(r, cc) > act.at2(r, best)) best = cc;
            result.predictions[r] = static_cast<int>(best);
        }
    }
    trace.valid = true;
    return result;
}

template <typename T>
ForwardResult Network<T>::forward(const Tensor<T>& batch, const std::vector<int>& labels,
                                  ForwardTrace<T>& trace, bool training) {
    return forward_impl(batch, &labels, nullptr, trace, training);
}

template <typename T>
ForwardResult Network<T>::forward(const Tensor<T>& batch, const Tensor<T>& targets,
                                  ForwardTrace<T>& trace, bool training) {
    return forward_impl(batch, nullptr, &targets, trace, training);
}

template <typename T>
Tensor<T> Network<T>::infer(const Tensor<T>& batch) const {
    Tensor<T> x = batch;
    for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
        const Layer<T>& layer = layers[l];
        switch (layer.spec.kind) {
            case LayerKind::Conv2d: x = forward_conv(layer, x); break;
            case LayerKind::Linear: x = forward_linear(layer, x); break;
            case LayerKind::ReLU: x = forward_relu(x); break;
            case LayerKind::BatchNorm: x = forward_bn_eval(layer, x); break;
            case LayerKind::MaxPool2d:
                x = maxpool_forward(x, layer.spec.kernel, layer.spec.stride).first;
                break;
            default: throw StateError("loss layer in the middle of the network");
        }
    }
    return x;
}

template <typename T>
Tensor<T> Network<T>::loss_error(const ForwardTrace<T>& trace) const {
    if (!trace.valid) throw StateError("loss_error requires a completed forward trace");
    const std::size_t L = layers.size();
    const Tensor<T>& act = trace.inputs[L - 1];
    const T inv_n = static_cast<T>(1.0 / static_cast<double>(trace.batch_n));
    Tensor<T> e(act.shape());
    if (layers[L - 1].spec.kind == LayerKind::SoftmaxCrossEntropy) {
        const std::size_t n = act.extent(0), classes = act.extent(1);
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t cc = 0; cc < classes; ++cc) {
                const T onehot = static_cast<std::size_t>(trace.labels[r]) == cc ? T{1} : T{0};
                e.at2(r, cc) = (trace.probs.at2(r, cc) - onehot) * inv_n;
            }
        }
    } else {
        for (std::size_t i = 0; i < act.size(); ++i) e[i] = (act[i] - trace.targets[i]) * inv_n;
    }
    return e;
}

template <typename T>
Tensor<T> Network<T>::backward_error(std::size_t layer, const Tensor<T>& delta_in,
                                     const ForwardTrace<T>& trace,
                                     const Tensor<T>& modulatory) const {
    if (layer >= layers.size()) throw ContractError("layer index out of range");
    if (!trace.valid) throw StateError("backward requires a completed forward trace");
    const Layer<T>& lay = layers[layer];
    const Tensor<T>& in = trace.inputs[layer];

    switch (lay.spec.kind) {
        case LayerKind::SoftmaxCrossEntropy:
        case LayerKind::MSEOutput: return loss_error(trace);
        case LayerKind::Conv2d: {
            if (!modulatory.same_shape(lay.weight)) {
                throw DimError("modulatory shape " + shape_str(modulatory.shape()) +
                               " does not match weight " + shape_str(lay.weight.shape()));
            }
            return conv2d_input_grad(delta_in, modulatory, lay.spec.stride, lay.spec.pad);
        }
        case LayerKind::Linear: {
            if (!modulatory.same_shape(lay.weight)) {
                throw DimError("modulatory shape " + shape_str(modulatory.shape()) +
                               " does not match weight " + shape_str(lay.weight.shape()));
            }
            Tensor<T> dx = matmul(delta_in, modulatory);
            return dx.reshaped(in.shape());
        }
        case LayerKind::ReLU: {
            Tensor<T> dx(in.shape());
            parallel_for(in.size(), [&](std::size_t begin, std::size_t end) {
                for (std::size_t i = begin; i < end; ++i)
                    dx[i] = in[i] > T{0} ? delta_in[i] : T{0};
            });
            return dx;
        }
        case LayerKind::MaxPool2d:
            return maxpool_backward(delta_in, trace.pool_argmax[layer], in.shape());
        case LayerKind::BatchNorm: {
            if (!trace.training) {
                // Eval-mode BN is an affine map per channel.
                std::size_t n, c, s;
                bn_geometry(in, n, c, s);
                Tensor<T> dx(in.shape());
                parallel_for(c, [&](std::size_t begin, std::size_t end) {
                    for (std::size_t ch = begin; ch < end; ++ch) {
                        const double inv = 1.0 / std::sqrt(
                            static_cast<double>(lay.running_var[ch]) + lay.spec.epsilon);
                        const double g = static_cast<double>(lay.gamma[ch]) * inv;
                        for (std::size_t b = 0; b < n; ++b) {
                            const T* pd = delta_in.data() + (b * c + ch) * s;
                            T* px = dx.data() + (b * c + ch) * s;
                            for (std::size_t j = 0; j < s; ++j)
                                px[j] = static_cast<T>(g * static_cast<double>(pd[j]));
                        }
                    }
                });
                return dx;
            }
            const Tensor<T>& xhat = trace.bn_xhat[layer];
            const Tensor<T>& invstd = trace.bn_invstd[layer];
            if (xhat.size() == 0) throw StateError("batchnorm backward requires training trace");
            std::size_t n, c, s;
            bn_geometry(in, n, c, s);
            const double m = static_cast<double>(n * s);
            Tensor<T> dx(in.shape());
            parallel_for(c, [&](std::size_t begin, std::size_t end) {
                for (std::size_t ch = begin; ch < end; ++ch) {
                    double sum_dy = 0.0, sum_dy_xhat = 0.0;
                    for (std::size_t b = 0; b < n; ++b) {
                        const T* pd = delta_in.data() + (b * c + ch) * s;
                        const T* ph = xhat.data() + (b * c + ch) * s;
                        for (std::size_t j = 0; j < s; ++j) {
                            sum_dy += static_cast<double>(pd[j]);
                            sum_dy_xhat += static_cast<double>(pd[j]) * static_cast<double>(ph[j]);
                        }
                    }
                    const double g_inv_m =
                        static_cast<double>(lay.gamma[ch]) * static_cast<double>(invstd[ch]) / m;
                    for (std::size_t b = 0; b < n; ++b) {
                        const T* pd = delta_in.data() + (b * c + ch) * s;
                        const T* ph = xhat.data() + (b * c + ch) * s;
                        T* px = dx.data() + (b * c + ch) * s;
                        for (std::size_t j = 0; j < s; ++j) {
                            px[j] = static_cast<T>(
                                g_inv_m * (m * static_cast<double>(pd[j]) - sum_dy -
                                           static_cast<double>(ph[j]) * sum_dy_xhat));
                        }
                    }
                }
            });
            return dx;
        }
    }
    throw StateError("unhandled layer kind");
}

template <typename T>
LayerGrads<T> Network<T>::weight_grad(std::size_t layer, const Tensor<T>& delta,
                                      const ForwardTrace<T>& trace) const {
    if (layer >= layers.size()) throw ContractError("layer index out of range");
    if (!trace.valid) throw StateError("weight_grad requires a completed forward trace");
    const Layer<T>& lay = layers[layer];
    const Tensor<T>& in = trace.inputs[layer];
    LayerGrads<T> g;

    switch (lay.spec.kind) {
        case LayerKind::Conv2d: {
            g.weight = conv2d_weight_grad(in, delta, lay.spec.stride, lay.spec.pad);
            const std::size_t n = delta.extent(0), c = delta.extent(1);
            const std::size_t hw = delta.extent(2) * delta.extent(3);
            g.bias = Tensor<T>({c});
            for (std::size_t ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (std::size_t b = 0; b < n; ++b) {
                    const T* p = delta.data() + (b * c + ch) * hw;
                    for (std::size_t j = 0; j < hw; ++j) acc += static_cast<double>(p[j]);
                }
                g.bias[ch] = static_cast<T>(acc);
            }
            return g;
        }
        case LayerKind::Linear: {
            Tensor<T> x2 = as_matrix(in);
            g.weight = matmul(transpose(delta), x2);
            const std::size_t n = delta.extent(0), f = delta.extent(1);
            g.bias = Tensor<T>({f});
            for (std::size_t c = 0; c < f; ++c) {
                double acc = 0.0;
                for (std::size_t r = 0; r < n; ++r) acc += static_cast<double>(delta.at2(r, c));
                g.bias[c] = static_cast<T>(acc);
            }
            return g;
        }
        case LayerKind::BatchNorm: {
            const Tensor<T>& xhat = trace.bn_xhat[layer];
            if (xhat.size() == 0) throw StateError("batchnorm weight_grad requires training trace");
            std::size_t n, c, s;
            bn_geometry(in, n, c, s);
            g.gamma = Tensor<T>({c});
            g.beta = Tensor<T>({c});
            for (std::size_t ch = 0; ch < c; ++ch) {
                double sum_dy = 0.0, sum_dy_xhat = 0.0;
                for (std::size_t b = 0; b < n; ++b) {
                    const T* pd = delta.data() + (b * c + ch) * s;
                    const T* ph = xhat.data() + (b * c + ch) * s;
                    for (std::size_t j = 0; j < s; ++j) {
                        sum_dy += static_cast<double>(pd[j]);
                        sum_dy_xhat += static_cast<double>(pd[j]) * static_cast<double>(ph[j]);
                    }
                }
                g.gamma[ch] = static_cast<T>(sum_dy_xhat);
                g.beta[ch] = static_cast<T>(sum_dy);
            }
            return g;
        }
        default:
            throw ContractError(std::string("layer kind ") + layer_kind_name(lay.spec.kind) +
                                " has no trainable parameters");
    }
}

namespace {

template <typename T>
void sgd_update_tensor(Tensor<T>& param, const Tensor<T>& grad, Tensor<T>& vel, double lr,
                       double momentum) {
    if (grad.size() == 0) return;
    if (!param.same_shape(grad)) {
        throw DimError("gradient shape " + shape_str(grad.shape()) + " does not match parameter " +
                       shape_str(param.shape()));
    }
    if (vel.size() == 0) vel = Tensor<T>(param.shape());
    for (std::size_t i = 0; i < param.size(); ++i) {
        vel[i] = static_cast<T>(momentum * static_cast<double>(vel[i]) +
                                static_cast<double>(grad[i]));
        param[i] -= static_cast<T>(lr * static_cast<double>(vel[i]));
    }
}

}  // namespace

template <typename T>
void Network<T>::sgd_step(const std::vector<LayerGrads<T>>& grads, double lr, double momentum,
                          std::vector<LayerGrads<T>>& velocity) {
    if (grads.size() != layers.size()) {
        throw DimError("expected one gradient slot per layer (" + std::to_string(layers.size()) +
                       "), got " + std::to_string(grads.size()));
    }
    if (velocity.empty()) velocity.resize(layers.size());
    for (std::size_t l = 0; l < layers.size(); ++l) {
        if (!layers[l].spec.trainable) continue;
        sgd_update_tensor(layers[l].weight, grads[l].weight, velocity[l].weight, lr, momentum);
        sgd_update_tensor(layers[l].bias, grads[l].bias, velocity[l].bias, lr, momentum);
        sgd_update_tensor(layers[l].gamma, grads[l].gamma, velocity[l].gamma, lr, momentum);
        sgd_update_tensor(layers[l].beta, grads[l].beta, velocity[l].beta, lr, momentum);
    }
}

template <typename T>
Network<T> build_network(const NetworkConfig& config, std::uint64_t seed) {
    if (config.layers.empty()) throw BuildError("network has no layers", 0);
    if (config.input_shape.empty()) throw BuildError("input shape is empty", 0);
    for (std::size_t e : config.input_shape) {
        if (e == 0) throw BuildError("input shape has a zero extent", 0);
    }

    Network<T> net;
    net.seed = seed;
    net.input_shape = config.input_shape;
    std::vector<std::size_t> shape = config.input_shape;

    const std::size_t L = config.layers.size();
    for (std::size_t l = 0; l < L; ++l) {
        LayerSpec spec = config.layers[l];
        const int li = static_cast<int>(l);
        if (is_loss(spec.kind) != (l == L - 1)) {
            throw BuildError(is_loss(spec.kind) ? "loss layer before the end of the network"
                                                : "last layer must be a loss layer",
                             li);
        }
        Layer<T> layer;
        layer.in_shape = shape;
        try {
            switch (spec.kind) {
                case LayerKind::Conv2d: {
                    if (shape.size() != 3) {
                        throw BuildError("conv2d requires a [C,H,W] input, got " +
                                             shape_str(shape),
                                         li);
                    }
                    if (spec.out_channels == 0 || spec.kernel == 0 || spec.stride == 0) {
                        throw BuildError("conv2d needs out_channels, kernel, stride >= 1", li);
                    }
                    const std::size_t ho =
                        conv_out_extent(shape[1], spec.kernel, spec.stride, spec.pad, "H");
                    const std::size_t wo =
                        conv_out_extent(shape[2], spec.kernel, spec.stride, spec.pad, "W");
                    layer.fan_in = shape[0] * spec.kernel * spec.kernel;
                    layer.weight =
                        Tensor<T>({spec.out_channels, shape[0], spec.kernel, spec.kernel});
                    layer.bias = Tensor<T>({spec.out_channels});
                    shape = {spec.out_channels, ho, wo};
                    break;
                }
                case LayerKind::Linear: {
                    if (spec.out_features == 0) throw BuildError("linear needs out_features", li);
                    const std::size_t in_f = shape_product(shape);
                    layer.fan_in = in_f;
                    layer.weight = Tensor<T>({spec.out_features, in_f});
                    layer.bias = Tensor<T>({spec.out_features});
                    shape = {spec.out_features};
                    break;
                }
                case LayerKind::ReLU: break;
                case LayerKind::BatchNorm: {
                    if (!(spec.momentum > 0.0 && spec.momentum <= 1.0) || !(spec.epsilon > 0.0)) {
                        throw BuildError("batchnorm momentum must be in (0,1] and epsilon > 0",
                                         li);
                    }
                    const std::size_t c = shape[0];
                    layer.gamma = Tensor<T>::full({c}, T{1});
                    layer.beta = Tensor<T>({c});
                    layer.running_mean = Tensor<T>({c});
                    layer.running_var = Tensor<T>::full({c}, T{1});
                    break;
                }
                case LayerKind::MaxPool2d: {
                    if (shape.size() != 3) {
                        throw BuildError("maxpool2d requires a [C,H,W] input, got " +
                                             shape_str(shape),
                                         li);
                    }
                    if (spec.kernel == 0) throw BuildError("maxpool2d needs kernel >= 1", li);
                    if (spec.stride == 0) spec.stride = spec.kernel;
                    const std::size_t ho = conv_out_extent(shape[1], spec.kernel, spec.stride, 0, "H");
                    const std::size_t wo = conv_out_extent(shape[2], spec.kernel, spec.stride, 0, "W");
                    shape = {shape[0], ho, wo};
                    break;
                }
                case LayerKind::SoftmaxCrossEntropy: {
                    if (shape.size() != 1) {
                        throw BuildError("softmax cross-entropy requires a flat [classes] input, "
                                         "got " + shape_str(shape),
                                         li);
                    }
                    break;
                }
                case LayerKind::MSEOutput: break;
            }
        } catch (const DimError& e) {
            throw BuildError(e.what(), li);
        }
        layer.spec = spec;
        layer.out_shape = shape;
        net.layers.push_back(std::move(layer));
    }

    // Kaiming-uniform weights: bound = sqrt(6 / fan_in) (gain sqrt(2), fan-in).
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        Layer<T>& layer = net.layers[l];
        if (layer.weight.size() == 0) continue;
        const double bound = std::sqrt(6.0 / static_cast<double>(layer.fan_in));
        rng::Stream stream(seed, rng::stream_id(rng::Domain::WeightInit, l));
        for (std::size_t i = 0; i < layer.weight.size(); ++i) {
            layer.weight[i] = static_cast<T>(stream.uniform(i, -bound, bound));
        }
    }
    return net;
}

#define EG_INSTANTIATE_NETWORK(T)                                                              \
    template struct ForwardTrace<T>;                                                          \
    template class Network<T>;                                                                \
    template Network<T> build_network<T>(const NetworkConfig&, std::uint64_t);

EG_INSTANTIATE_NETWORK(float)
EG_INSTANTIATE_NETWORK(double)

}  // namespace eg
