#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "eg/network.hpp"
#include "eg/tensor.hpp"

namespace eg {

enum class FeedbackMode { BP, FA, SignSym, BinarySign };

const char* feedback_mode_name(FeedbackMode mode);
FeedbackMode feedback_mode_from_name(const std::string& name);  // throws ConfigError

/// Fixed random feedback, sampled once at init and immutable afterwards.
/// Magnitudes are drawn from the same distribution as the weight init, taken
/// through absolute value; the FA sign pattern comes from its own stream.
template <typename T>
struct FeedbackState {
    FeedbackMode mode = FeedbackMode::BP;
    std::map<std::size_t, FeedbackMode> overrides;  // layer index -> mode
    bool freeze_signs = false;                      // SignSym ablation: sign(W at init)
    std::uint64_t seed = 0;

    // All vectors are indexed by network layer; empty tensors at unweighted layers.
    std::vector<Tensor<T>> b_magnitude;
    std::vector<Tensor<T>> fa_signed_b;  // sign pattern pre-applied, fixed
    std::vector<Tensor<T>> frozen_sign;  // only populated when freeze_signs
    std::vector<T> binary_scale;         // per-layer scalar, mean(|B|)

    FeedbackMode mode_for(std::size_t layer) const {
        auto it = overrides.find(layer);
        return it == overrides.end() ? mode : it->second;
    }
};

template <typename T>
FeedbackState<T> init_feedback(const Network<T>& net, FeedbackMode mode, std::uint64_t seed,
                               bool freeze_signs = false,
                               const std::map<std::size_t, FeedbackMode>& overrides = {});

/// The matrix phase 2 multiplies by at a weighted layer:
///   BP         -> W_current
///   FA         -> fixed signed B
///   SignSym    -> sign(W_current) (or frozen init sign) * |B|, with sign(0) = 0
///   BinarySign -> sign(W_current) * binary_scale
template <typename T>
Tensor<T> modulatory_matrix(const FeedbackState<T>& state, std::size_t layer_index,
                            const Tensor<T>& w_current);

/// Angle in degrees between two flattened gradient tensors, in [0, 180].
/// Returns nullopt when either norm is zero (undefined, never reported as 0).
template <typename T>
std::optional<double> angle_to_bp(const Tensor<T>& delta_fa, const Tensor<T>& delta_bp);

}  // namespace eg
