#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "eg/tensor.hpp"

namespace eg {

enum class LayerKind {
    Conv2d,
    Linear,
    ReLU,
    BatchNorm,
    MaxPool2d,
    SoftmaxCrossEntropy,
    MSEOutput,
};

/// Conv2d and Linear carry the weight matrices that feedback modes substitute.
bool is_weighted(LayerKind kind);
bool is_loss(LayerKind kind);
const char* layer_kind_name(LayerKind kind);
LayerKind layer_kind_from_name(const std::string& name);  // throws ConfigError

struct LayerSpec {
    LayerKind kind = LayerKind::ReLU;
    std::size_t out_channels = 0;  // Conv2d
    std::size_t kernel = 0;        // Conv2d, MaxPool2d
    std::size_t stride = 1;        // Conv2d, MaxPool2d
    std::size_t pad = 0;           // Conv2d
    std::size_t out_features = 0;  // Linear
    double momentum = 0.1;         // BatchNorm running-stat update rate
    double epsilon = 1e-5;         // BatchNorm
    bool trainable = true;         // Conv2d / Linear / BatchNorm

    static LayerSpec conv2d(std::size_t out_channels, std::size_t kernel, std::size_t stride = 1,
                            std::size_t pad = 0);
    static LayerSpec linear(std::size_t out_features);
    static LayerSpec relu();
    static LayerSpec batch_norm(double momentum = 0.1, double epsilon = 1e-5);
    static LayerSpec max_pool(std::size_t kernel, std::size_t stride = 0);  // 0 -> stride=kernel
    static LayerSpec softmax_cross_entropy();
    static LayerSpec mse_output();
};

template <typename T>
struct Layer {
    LayerSpec spec;
    std::vector<std::size_t> in_shape;   // per sample, batch axis excluded
    std::vector<std::size_t> out_shape;  // per sample
    std::size_t fan_in = 0;              // weighted layers

    Tensor<T> weight, bias;                            // Conv2d / Linear
    Tensor<T> gamma, beta, running_mean, running_var;  // BatchNorm
};

/// Per-layer gradient (or velocity) container; tensors are empty where a
/// layer has no such parameter.
template <typename T>
struct LayerGrads {
    Tensor<T> weight, bias, gamma, beta;
};

/// Everything the backward phases need from one forward pass.
template <typename T>
struct ForwardTrace {
    bool training = false;
    std::size_t batch_n = 0;
    std::vector<Tensor<T>> inputs;  // inputs[l] = activation entering layer l
    std::vector<std::vector<std::size_t>> pool_argmax;   // MaxPool2d layers
    std::vector<Tensor<T>> bn_xhat;                      // BatchNorm layers
    std::vector<Tensor<T>> bn_invstd;                    // per channel
    Tensor<T> probs;                                     // SoftmaxCrossEntropy
    std::vector<int> labels;                             // classification targets
    Tensor<T> targets;                                   // MSEOutput targets
    bool valid = false;

    void clear();
};

struct ForwardResult {
    double loss = 0.0;
    std::vector<int> predictions;  // per-sample argmax when the pre-loss activation is 2-D
};

struct NetworkConfig {
    std::vector<std::size_t> input_shape;  // per sample, e.g. {1,28,28} or {784}
    std::vector<LayerSpec> layers;
};

template <typename T>
class Network {
public:
    std::vector<Layer<T>> layers;
    std::vector<std::size_t> input_shape;
    std::uint64_t seed = 0;

    std::size_t num_layers() const { return layers.size(); }
    std::size_t loss_index() const { return layers.size() - 1; }
    /// Total trainable parameter count (weights, biases, BN gamma/beta).
    std::size_t num_params() const;
    std::vector<std::size_t> weighted_layers() const;

    /// Phase 1 with classification labels (SoftmaxCrossEntropy nets).
    ForwardResult forward(const Tensor<T>& batch, const std::vector<int>& labels,
                          ForwardTrace<T>& trace, bool training);
    /// Phase 1 with dense targets (MSEOutput nets).
    ForwardResult forward(const Tensor<T>& batch, const Tensor<T>& targets,
                          ForwardTrace<T>& trace, bool training);
    /// Eval-mode activation entering the loss layer; pure, no side effects.
    Tensor<T> infer(const Tensor<T>& batch) const;

    /// Error emitted by the loss layer (start of phase 2).
    Tensor<T> loss_error(const ForwardTrace<T>& trace) const;
    /// Propagate delta through one layer. `modulatory` replaces the weight for
    /// Conv2d/Linear (pass the layer's own weight for BP) and is ignored by
    /// every other kind.
    Tensor<T> backward_error(std::size_t layer, const Tensor<T>& delta_in,
                             const ForwardTrace<T>& trace, const Tensor<T>& modulatory) const;
    /// Phase 3: gradient w.r.t. the layer's true parameters, from the delta at
    /// this layer's output.
    LayerGrads<T> weight_grad(std::size_t layer, const Tensor<T>& delta,
                              const ForwardTrace<T>& trace) const;

    /// v <- momentum*v + grad; param <- param - lr*v. Velocities are lazily
    /// allocated zero on first use and persist across calls.
    void sgd_step(const std::vector<LayerGrads<T>>& grads, double lr, double momentum,
                  std::vector<LayerGrads<T>>& velocity);

private:
    ForwardResult forward_impl(const Tensor<T>& batch, const std::vector<int>* labels,
                               const Tensor<T>* targets, ForwardTrace<T>& trace, bool training);
};

/// Kaiming-uniform weights (fan-in, gain sqrt(2)), zero biases, BN gamma=1
/// beta=0, running mean 0 / var 1. Deterministic in the seed.
template <typename T>
Network<T> build_network(const NetworkConfig& config, std::uint64_t seed);

}  // namespace eg
