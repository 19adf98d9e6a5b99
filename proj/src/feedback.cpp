#include "eg/feedback.hpp"

#include <algorithm>
#include <cmath>

#include "eg/errors.hpp"
#include "eg/rng.hpp"

namespace eg {

const char* feedback_mode_name(FeedbackMode mode) {
    switch (mode) {
        case FeedbackMode::BP: return "bp";
        case FeedbackMode::FA: return "fa";
        case FeedbackMode::SignSym: return "signsym";
        case FeedbackMode::BinarySign: return "binarysign";
    }
    return "?";
}

FeedbackMode feedback_mode_from_name(const std::string& name) {
    for (FeedbackMode m : {FeedbackMode::BP, FeedbackMode::FA, FeedbackMode::SignSym,
                           FeedbackMode::BinarySign}) {
        if (name == feedback_mode_name(m)) return m;
    }
    throw ConfigError("unknown feedback mode '" + name + "'");
}

namespace {

template <typename T>
T sign_of(T v) {
    return v > T{0} ? T{1} : (v < T{0} ? T{-1} : T{0});
}

}  // namespace

template <typename T>
FeedbackState<T> init_feedback(const Network<T>& net, FeedbackMode mode, std::uint64_t seed,
                               bool freeze_signs,
                               const std::map<std::size_t, FeedbackMode>& overrides) {
    for (const auto& [idx, m] : overrides) {
        if (idx >= net.layers.size() || !is_weighted(net.layers[idx].spec.kind)) {
            throw ConfigError("feedback override targets layer " + std::to_string(idx) +
                              ", which is not a weighted layer");
        }
    }

    FeedbackState<T> state;
    state.mode = mode;
    state.overrides = overrides;
    state.freeze_signs = freeze_signs;
    state.seed = seed;
    const std::size_t L = net.layers.size();
    state.b_magnitude.resize(L);
    state.fa_signed_b.resize(L);
    state.frozen_sign.resize(L);
    state.binary_scale.assign(L, T{0});

    for (std::size_t l = 0; l < L; ++l) {
        const Layer<T>& layer = net.layers[l];
        if (!is_weighted(layer.spec.kind)) continue;
        const double bound = std::sqrt(6.0 / static_cast<double>(layer.fan_in));
        rng::Stream mag_stream(seed, rng::stream_id(rng::Domain::FeedbackInit, l));
        rng::Stream sign_stream(seed, rng::stream_id(rng::Domain::FeedbackSign, l));

        Tensor<T> mag(layer.weight.shape());
        Tensor<T> signed_b(layer.weight.shape());
        double mag_sum = 0.0;
        for (std::size_t i = 0; i < mag.size(); ++i) {
            const double v = std::fabs(mag_stream.uniform(i, -bound, bound));
            mag[i] = static_cast<T>(v);
            mag_sum += v;
            signed_b[i] = sign_stream.bounded(i, 2) == 0 ? mag[i] : static_cast<T>(-mag[i]);
        }
        state.binary_scale[l] =
            static_cast<T>(mag.size() == 0 ? 0.0 : mag_sum / static_cast<double>(mag.size()));
        state.b_magnitude[l] = std::move(mag);
        state.fa_signed_b[l] = std::move(signed_b);
        if (freeze_signs) {
            Tensor<T> fs(layer.weight.shape());
            for (std::size_t i = 0; i < fs.size(); ++i) fs[i] = sign_of(layer.weight[i]);
            state.frozen_sign[l] = std::move(fs);
        }
    }
    return state;
}

template <typename T>
Tensor<T> modulatory_matrix(const FeedbackState<T>& state, std::size_t layer_index,
                            const Tensor<T>& w_current) {
    if (layer_index >= state.b_magnitude.size() ||
        state.b_magnitude[layer_index].size() == 0) {
        throw ContractError("layer " + std::to_string(layer_index) +
                            " is not a weighted layer; no modulatory matrix exists");
    }
    const Tensor<T>& mag = state.b_magnitude[layer_index];
    if (!w_current.same_shape(mag)) {
        throw DimError("weight shape " + shape_str(w_current.shape()) +
                       " does not match feedback shape " + shape_str(mag.shape()));
    }

    switch (state.mode_for(layer_index)) {
        case FeedbackMode::BP: return w_current;
        case FeedbackMode::FA: return state.fa_signed_b[layer_index];
        case FeedbackMode::SignSym: {
            const bool frozen = state.freeze_signs;
            const Tensor<T>* fs = frozen ? &state.frozen_sign[layer_index] : nullptr;
            Tensor<T> out(mag.shape());
            for (std::size_t i = 0; i < out.size(); ++i) {
                const T s = frozen ? (*fs)[i] : sign_of(w_current[i]);
                out[i] = s * mag[i];
            }
            return out;
        }
        case FeedbackMode::BinarySign: {
            const T scale = state.binary_scale[layer_index];
            Tensor<T> out(mag.shape());
            for (std::size_t i = 0; i < out.size(); ++i)
                out[i] = sign_of(w_current[i]) * scale;
            return out;
        }
    }
    throw StateError("unhandled feedback mode");
}

template <typename T>
std::optional<double> angle_to_bp(const Tensor<T>& delta_fa, const Tensor<T>& delta_bp) {
    if (!delta_fa.same_shape(delta_bp)) {
        throw DimError("angle requires matching shapes, got " + shape_str(delta_fa.shape()) +
                       " vs " + shape_str(delta_bp.shape()));
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < delta_fa.size(); ++i) {
        const double a = static_cast<double>(delta_fa[i]);
        const double b = static_cast<double>(delta_bp[i]);
        dot += a * b;
        na += a * a;
        nb += b * b;
    }
    if (na == 0.0 || nb == 0.0) return std::nullopt;
    double c = dot / std::sqrt(na * nb);
    c = std::max(-1.0, std::min(1.0, c));
    return std::acos(c) * 180.0 / std::acos(-1.0);
}

#define EG_INSTANTIATE_FEEDBACK(T)                                                             \
    template struct FeedbackState<T>;                                                         \
    template FeedbackState<T> init_feedback<T>(const Network<T>&, FeedbackMode, std::uint64_t, \
                                               bool, const std::map<std::size_t, FeedbackMode>&); \
    template Tensor<T> modulatory_matrix<T>(const FeedbackState<T>&, std::size_t,             \
                                            const Tensor<T>&);                                \
    template std::optional<double> angle_to_bp<T>(const Tensor<T>&, const Tensor<T>&);

EG_INSTANTIATE_FEEDBACK(float)
EG_INSTANTIATE_FEEDBACK(double)

}  // namespace eg
