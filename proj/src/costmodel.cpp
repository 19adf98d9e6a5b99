#include "eg/costmodel.hpp"

#include <cmath>

#include "eg/errors.hpp"

namespace eg {

void CostParams::validate() const {
    if (!(bytes_per_value > 0.0) || !(bits_per_sign > 0.0) || !(e_dram > 0.0) ||
        !(e_mac > 0.0)) {
        throw ConfigError("cost parameters must all be positive");
    }
}

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t p = 1;
    for (std::size_t e : shape) p *= e;
    return p;
}

template <typename T>
void require_weighted(const Layer<T>& layer) {
    if (!is_weighted(layer.spec.kind)) {
        throw ContractError(std::string("cost model covers weighted layers only, got ") +
                            layer_kind_name(layer.spec.kind));
    }
}

double sign_bytes(double weight_count, const CostParams& params) {
    return std::ceil(weight_count * params.bits_per_sign / 8.0);
}

void check_zero_fraction(double zf) {
    if (!(zf >= 0.0 && zf <= 1.0)) {
        throw ContractError("zero fraction must lie in [0, 1], got " + std::to_string(zf));
    }
}

}  // namespace

template <typename T>
double layer_macs(const Layer<T>& layer, Phase phase, std::size_t batch_n) {
    require_weighted(layer);
    (void)phase;  // forward, backward and weight-grad MAC counts coincide
    const double w = static_cast<double>(layer.weight.size());
    if (layer.spec.kind == LayerKind::Conv2d) {
        const double spatial = static_cast<double>(layer.out_shape[1] * layer.out_shape[2]);
        return static_cast<double>(batch_n) * spatial * w;
    }
    return static_cast<double>(batch_n) * w;
}

template <typename T>
double phase1_traffic(const Layer<T>& layer, const CostParams& params, std::size_t batch_n) {
    require_weighted(layer);
    const double w = static_cast<double>(layer.weight.size());
    const double in = static_cast<double>(shape_product(layer.in_shape)) *
                      static_cast<double>(batch_n);
    return (w + in) * params.bytes_per_value;
}

template <typename T>
double phase2_traffic(const Layer<T>& layer, FeedbackMode mode, const CostParams& params,
                      std::size_t batch_n, double zero_fraction) {
    require_weighted(layer);
    check_zero_fraction(zero_fraction);
    const double w = static_cast<double>(layer.weight.size());

    double modulatory = 0.0;
    switch (mode) {
        case FeedbackMode::BP: modulatory = w * params.bytes_per_value; break;
        case FeedbackMode::FA:
            modulatory = params.feedback_resident ? 0.0 : w * params.bytes_per_value;
            break;
        case FeedbackMode::SignSym:
            modulatory = sign_bytes(w, params) +
                         (params.feedback_resident ? 0.0 : w * params.bytes_per_value);
            break;
        case FeedbackMode::BinarySign: modulatory = sign_bytes(w, params); break;
    }

    double delta_bytes = 0.0;
    if (batch_n > 0) {
        const double d = static_cast<double>(shape_product(layer.out_shape)) *
                         static_cast<double>(batch_n);
        delta_bytes = d * params.bytes_per_value * (1.0 - zero_fraction);
    }
    return modulatory + delta_bytes;
}

template <typename T>
double phase3_traffic(const Layer<T>& layer, const CostParams& params) {
    require_weighted(layer);
    return static_cast<double>(layer.weight.size()) * params.bytes_per_value;
}

namespace {

void finish_totals(CostReport& report, const CostParams& params) {
    CostTotals t;
    for (const LayerCost& lc : report.layers) {
        for (const PhaseCost& pc : lc.phases) {
            t.macs_total += pc.macs_total;
            t.macs_effective += pc.macs_effective;
            t.dram_bytes += pc.dram_bytes;
        }
    }
    t.energy = params.e_dram * t.dram_bytes + params.e_mac * t.macs_effective;
    report.totals = t;
    report.ratios.throughput_proxy = t.macs_total / t.macs_effective;
    report.ratios.traffic_ratio = report.bp_totals.dram_bytes / t.dram_bytes;
    report.ratios.energy_ratio = report.bp_totals.energy / t.energy;
}

}  // namespace

template <typename T>
CostReport build_cost_report(const Network<T>& net, FeedbackMode mode, const CostParams& params,
                             std::size_t batch_n,
                             const std::map<std::size_t, double>& zero_fractions) {
    params.validate();
    if (batch_n == 0) throw ContractError("cost report requires batch_n >= 1");

    CostReport report;
    report.mode = mode;
    report.batch_n = batch_n;

    CostTotals bp;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const Layer<T>& layer = net.layers[l];
        if (!is_weighted(layer.spec.kind)) continue;
        auto it = zero_fractions.find(l);
        const double zf = it == zero_fractions.end() ? 0.0 : it->second;
        check_zero_fraction(zf);

        LayerCost lc;
        lc.layer = l;
        lc.name = std::string(layer_kind_name(layer.spec.kind)) + "_" + std::to_string(l);
        const double macs = layer_macs(layer, Phase::Forward, batch_n);

        lc.phases[0].macs_total = macs;
        lc.phases[0].macs_effective = macs;
        lc.phases[0].dram_bytes = phase1_traffic(layer, params, batch_n);

        lc.phases[1].macs_total = macs;
        lc.phases[1].macs_effective = macs * (1.0 - zf);
        lc.phases[1].dram_bytes = phase2_traffic(layer, mode, params, batch_n, zf);

        lc.phases[2].macs_total = macs;
        lc.phases[2].macs_effective = macs * (1.0 - zf);
        lc.phases[2].dram_bytes = phase3_traffic(layer, params);

        // The BP baseline runs the same arithmetic with dense gradients.
        bp.macs_total += 3.0 * macs;
        bp.macs_effective += 3.0 * macs;
        bp.dram_bytes += lc.phases[0].dram_bytes +
                         phase2_traffic(layer, FeedbackMode::BP, params, batch_n, 0.0) +
                         lc.phases[2].dram_bytes;

        report.layers.push_back(std::move(lc));
    }
    bp.energy = params.e_dram * bp.dram_bytes + params.e_mac * bp.macs_effective;
    report.bp_totals = bp;
    finish_totals(report, params);
    return report;
}

CostReport apply_sparsity(const CostReport& report, const CostParams& params,
                          const std::map<std::size_t, double>& zero_fractions) {
    CostReport out = report;
    for (LayerCost& lc : out.layers) {
        auto it = zero_fractions.find(lc.layer);
        const double zf = it == zero_fractions.end() ? 0.0 : it->second;
        check_zero_fraction(zf);
        for (std::size_t p = 1; p <= 2; ++p) {
            lc.phases[p].macs_effective = lc.phases[p].macs_total * (1.0 - zf);
        }
    }
    finish_totals(out, params);
    return out;
}

#define EG_INSTANTIATE_COST(T)                                                                  \
    template double layer_macs<T>(const Layer<T>&, Phase, std::size_t);                        \
    template double phase1_traffic<T>(const Layer<T>&, const CostParams&, std::size_t);        \
    template double phase2_traffic<T>(const Layer<T>&, FeedbackMode, const CostParams&,        \
                                      std::size_t, double);                                    \
    template double phase3_traffic<T>(const Layer<T>&, const CostParams&);                     \
    template CostReport build_cost_report<T>(const Network<T>&, FeedbackMode,                  \
                                             const CostParams&, std::size_t,                   \
                                             const std::map<std::size_t, double>&);

EG_INSTANTIATE_COST(float)
EG_INSTANTIATE_COST(double)

}  // namespace eg
