#include "eg/diagnostics.hpp"

#include <string>

#include "eg/errors.hpp"
#include "eg/feedback.hpp"

namespace eg {

template <typename T>
std::map<std::size_t, Tensor<T>> shadow_bp_pass(const Network<T>& net,
                                                const ForwardTrace<T>& trace) {
    if (!trace.valid) throw StateError("shadow pass requires a completed forward trace");
    std::map<std::size_t, Tensor<T>> deltas;
    Tensor<T> delta = net.loss_error(trace);
    for (std::size_t l = net.layers.size() - 1; l-- > 0;) {
        if (is_weighted(net.layers[l].spec.kind)) deltas.emplace(l, delta);
        delta = net.backward_error(l, delta, trace, net.layers[l].weight);
    }
    return deltas;
}

template <typename T>
std::vector<AngleRecord> record_angles(const std::map<std::size_t, Tensor<T>>& eg_deltas,
                                       const std::map<std::size_t, Tensor<T>>& bp_deltas,
                                       std::size_t epoch, std::size_t step) {
    if (eg_deltas.size() != bp_deltas.size()) {
        throw ContractError("angle recording requires matching layer sets");
    }
    std::vector<AngleRecord> records;
    records.reserve(eg_deltas.size());
    for (const auto& [layer, eg_delta] : eg_deltas) {
        auto it = bp_deltas.find(layer);
        if (it == bp_deltas.end()) {
            throw ContractError("layer " + std::to_string(layer) +
                                " present in one delta set only");
        }
        AngleRecord rec;
        rec.epoch = epoch;
        rec.step = step;
        rec.layer = layer;
        rec.angle_deg = angle_to_bp(eg_delta, it->second);
        records.push_back(rec);
    }
    return records;
}

template <typename T>
GradHistogram record_histogram(const Tensor<T>& delta, std::size_t bins, double lo, double hi,
                               std::size_t epoch, std::size_t layer) {
    if (bins < 2) throw ContractError("histogram needs at least 2 bins");
    if (!(lo < hi)) throw ContractError("histogram range must satisfy lo < hi");

    GradHistogram h;
    h.epoch = epoch;
    h.layer = layer;
    h.lo = lo;
    h.hi = hi;
    h.edges.resize(bins + 1);
    const double width = (hi - lo) / static_cast<double>(bins);
    for (std::size_t i = 0; i <= bins; ++i) h.edges[i] = lo + width * static_cast<double>(i);
    h.counts.assign(bins + 2, 0);

    for (std::size_t i = 0; i < delta.size(); ++i) {
        const double v = static_cast<double>(delta[i]);
        if (v < lo) {
            ++h.counts[0];
        } else if (v >= hi) {
            ++h.counts[bins + 1];
        } else {
            auto b = static_cast<std::size_t>((v - lo) / width);
            if (b >= bins) b = bins - 1;  // guard the hi-edge rounding case
            ++h.counts[b + 1];
        }
    }
    return h;
}

#define EG_INSTANTIATE_DIAGNOSTICS(T)                                                          \
    template std::map<std::size_t, Tensor<T>> shadow_bp_pass<T>(const Network<T>&,            \
                                                                const ForwardTrace<T>&);       \
    template std::vector<AngleRecord> record_angles<T>(                                        \
        const std::map<std::size_t, Tensor<T>>&, const std::map<std::size_t, Tensor<T>>&,     \
        std::size_t, std::size_t);                                                             \
    template GradHistogram record_histogram<T>(const Tensor<T>&, std::size_t, double, double,  \
                                               std::size_t, std::size_t);

EG_INSTANTIATE_DIAGNOSTICS(float)
EG_INSTANTIATE_DIAGNOSTICS(double)

}  // namespace eg
