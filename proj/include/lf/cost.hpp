#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "lf/autodiff.hpp"
#include "lf/error.hpp"
#include "lf/layer.hpp"
#include "lf/ops.hpp"
#include "lf/tensor.hpp"

namespace lf::cost {

// Symbolic dimensions of one convolution stage: input extents, channel
// counts, spatial kernel k and angular kernel a (0 = not applicable).
struct dims {
    std::int64_t u = 1, v = 1, x = 1, y = 1;
    std::int64_t ci = 1, cj = 1;
    std::int64_t k = 1;
    std::int64_t a = 0;
};

enum class cost_kind {
    subview2d,  // plain subview-wise 2D convolution
    lf_dsc,     // depthwise + pointwise pair
    full4d,     // one-step 4D convolution
    lf_asc,     // horizontal + vertical anglewise pair
    dsc_asc,    // LF-DSC and LF-ASC together
};

inline const char* cost_kind_name(cost_kind k) {
    switch (k) {
        case cost_kind::subview2d: return "subview2d";
        case cost_kind::lf_dsc: return "lf_dsc";
        case cost_kind::full4d: return "full4d";
        case cost_kind::lf_asc: return "lf_asc";
        case cost_kind::dsc_asc: return "dsc_asc";
    }
    return "unknown";
}

// Closed-form MAC counts. Stride 1 with same padding is assumed, so input
// extents equal the positions the kernel is applied at, and no boundary
// correction appears: taps on zero padding are counted.
inline std::int64_t mac_cost(cost_kind kind, const dims& d) {
    const std::int64_t field = d.u * d.v * d.x * d.y;
    const std::int64_t k2 = d.k * d.k;
    const bool needs_a = kind == cost_kind::full4d || kind == cost_kind::lf_asc || kind == cost_kind::dsc_asc;
    if (needs_a)
        require(d.a >= 1, errc::missing_angular_extent,
                std::string(cost_kind_name(kind)) + " requires the angular extent a");
    switch (kind) {
        case cost_kind::subview2d: return field * d.ci * d.cj * k2;
        case cost_kind::lf_dsc: return field * d.ci * (d.cj + k2);
        case cost_kind::full4d: return field * d.ci * d.cj * k2 * d.a * d.a;
        case cost_kind::lf_asc: return field * d.ci * d.cj * k2 * 2 * d.a;
        case cost_kind::dsc_asc: return field * d.ci * (d.cj + k2 + 2 * d.cj * d.a * k2);
    }
    fail(errc::bad_argument, "unhandled cost kind");
}

enum class savings_kind { dsc_vs_2d, combo_vs_4d };

// Cost saved by the factored form; negative values mean the factorization
// costs more (e.g. k = 1, cj = 1).
inline std::int64_t mac_savings(savings_kind kind, const dims& d) {
    const std::int64_t field = d.u * d.v * d.x * d.y;
    const std::int64_t k2 = d.k * d.k;
    switch (kind) {
        case savings_kind::dsc_vs_2d: return field * d.ci * ((d.cj - 1) * (k2 - 1) - 1);
        case savings_kind::combo_vs_4d:
            require(d.a >= 1, errc::missing_angular_extent, "combo_vs_4d requires the angular extent a");
            return field * d.ci * (d.cj * d.a * d.a * k2 - 2 * d.cj * d.a * k2 - k2 - d.cj);
    }
    fail(errc::bad_argument, "unhandled savings kind");
}

// Per-layer analytic MAC count at a concrete input shape. Extents are taken
// at the positions the kernel is applied (the output grid), which for the
// stride-1 closed forms above coincides with the input grid.
inline std::int64_t layer_macs(const layer_spec& l, const shape& in) {
    const shape out = output_shape(l, in);
    const std::int64_t positions =
        static_cast<std::int64_t>(out.u) * static_cast<std::int64_t>(out.v) *
        static_cast<std::int64_t>(out.x) * static_cast<std::int64_t>(out.y);
    const std::int64_t k2 = static_cast<std::int64_t>(l.k) * static_cast<std::int64_t>(l.k);
    const std::int64_t a = static_cast<std::int64_t>(l.a);
    const std::int64_t ci = static_cast<std::int64_t>(l.ci), co = static_cast<std::int64_t>(l.co);
    switch (l.kind) {
        case layer_kind::subview2d: return positions * ci * co * k2;
        case layer_kind::depthwise: return positions * ci * k2;
        case layer_kind::pointwise: return positions * ci * co;
        case layer_kind::anglewise_h:
        case layer_kind::anglewise_v: return positions * ci * co * k2 * a;
        case layer_kind::full4d: return positions * ci * co * k2 * a * a;
        case layer_kind::dense: return ci * co;
        default: return 0;  // pooling, relu, adds and averages multiply nothing
    }
}

inline std::int64_t count_params(const layer_spec& l) {
    return static_cast<std::int64_t>(l.weights.size() + l.bias.size());
}

// Exact multiply-accumulate count of the reference executor, read from the
// inner-loop instrumentation.
inline std::uint64_t measure_macs(const std::vector<step>& steps, const shape& input_shape) {
    const tensor probe = tensor::zeros(input_shape);
    ops::reset_macs();
    if (!steps.empty()) {
        std::vector<int> wanted;
        for (std::size_t i = 0; i < steps.size(); ++i) {
            bool consumed = false;
            for (const step& st : steps)
                if (st.input0 == static_cast<int>(i) || st.input1 == static_cast<int>(i)) consumed = true;
            if (!consumed) wanted.push_back(static_cast<int>(i));
        }
        (void)run_program(steps, probe, wanted);
    }
    return ops::macs();
}

struct report_row {
    std::size_t index = 0;
    layer_kind kind = layer_kind::relu;
    std::int64_t analytic_macs = 0;
    std::uint64_t measured_macs = 0;
    std::int64_t params = 0;
};

struct report {
    std::vector<report_row> rows;
    std::int64_t total_analytic = 0;
    std::uint64_t total_measured = 0;
    std::int64_t total_params = 0;
};

// Executes the program one step at a time, reading the MAC counter around
// each step; measured must equal the per-layer analytic count exactly.
inline report cost_report(const std::vector<step>& steps, const shape& input_shape) {
    const std::vector<shape> shapes = propagate_shapes(steps, input_shape);
    report rep;
    const tensor probe = tensor::zeros(input_shape);
    std::vector<int> last_use(steps.size(), -1);
    for (std::size_t i = 0; i < steps.size(); ++i) {
        if (steps[i].input0 >= 0) last_use[steps[i].input0] = static_cast<int>(i);
        if (steps[i].input1 >= 0) last_use[steps[i].input1] = static_cast<int>(i);
    }
    std::vector<tensor> values(steps.size());
    for (std::size_t i = 0; i < steps.size(); ++i) {
        const step& st = steps[i];
        const tensor& in0 = st.input0 < 0 ? probe : values[st.input0];
        const shape in_shape = st.input0 < 0 ? input_shape : shapes[st.input0];
        ops::reset_macs();
        switch (st.layer.kind) {
            case layer_kind::residual_add:
                values[i] = ops::residual_add(in0, st.input1 < 0 ? probe : values[st.input1]);
                break;
            case layer_kind::dropout: values[i] = in0; break;
            default: values[i] = ops::apply(st.layer, in0); break;
        }
        for (int parent : {st.input0, st.input1})
            if (parent >= 0 && last_use[parent] == static_cast<int>(i)) values[parent] = tensor();
        report_row row;
        row.index = i;
        row.kind = st.layer.kind;
        row.analytic_macs = layer_macs(st.layer, in_shape);
        row.measured_macs = ops::macs();
        row.params = count_params(st.layer);
        rep.total_analytic += row.analytic_macs;
        rep.total_measured += row.measured_macs;
        rep.total_params += row.params;
        rep.rows.push_back(row);
    }
    return rep;
}

inline void write_report_csv(std::ostream& os, const report& rep) {
    os << "layer_index,kind,analytic_macs,measured_macs,params\n";
    for (const report_row& row : rep.rows)
        os << row.index << ',' << layer_kind_name(row.kind) << ',' << row.analytic_macs << ','
           << row.measured_macs << ',' << row.params << '\n';
    os << "total,all," << rep.total_analytic << ',' << rep.total_measured << ',' << rep.total_params
       << '\n';
}

// A runnable realization of each cost kind, used to validate the closed
// forms against the instrumented executor. The anglewise pair is wired
// ci -> cj -> ci so Eq.-level costs hold for rectangular channel counts too;
// in the network every anglewise pair has ci == cj.
inline std::pair<std::vector<step>, shape> cost_program(cost_kind kind, const dims& d) {
    auto as_sz = [](std::int64_t value) { return static_cast<std::size_t>(value); };
    const shape input{as_sz(d.u), as_sz(d.v), as_sz(d.x), as_sz(d.y), as_sz(d.ci)};
    auto conv = [&](layer_kind lk, std::size_t ci, std::size_t co) {
        layer_spec l;
        l.kind = lk;
        l.ci = ci;
        l.co = co;
        l.k = as_sz(d.k);
        if (lk == layer_kind::anglewise_h || lk == layer_kind::anglewise_v || lk == layer_kind::full4d) {
            require(d.a >= 1, errc::missing_angular_extent, "angular extent required");
            l.a = as_sz(d.a);
        }
        l.weights.assign(l.weight_count(), 0.0);
        return l;
    };
    std::vector<step> steps;
    switch (kind) {
        case cost_kind::subview2d:
            steps.push_back({conv(layer_kind::subview2d, as_sz(d.ci), as_sz(d.cj)), -1, -1});
            break;
        case cost_kind::lf_dsc:
            steps.push_back({conv(layer_kind::depthwise, as_sz(d.ci), as_sz(d.ci)), -1, -1});
            steps.push_back({conv(layer_kind::pointwise, as_sz(d.ci), as_sz(d.cj)), 0, -1});
            break;
        case cost_kind::full4d:
            steps.push_back({conv(layer_kind::full4d, as_sz(d.ci), as_sz(d.cj)), -1, -1});
            break;
        case cost_kind::lf_asc:
            steps.push_back({conv(layer_kind::anglewise_h, as_sz(d.ci), as_sz(d.cj)), -1, -1});
            steps.push_back({conv(layer_kind::anglewise_v, as_sz(d.cj), as_sz(d.ci)), 0, -1});
            break;
        case cost_kind::dsc_asc:
            steps.push_back({conv(layer_kind::depthwise, as_sz(d.ci), as_sz(d.ci)), -1, -1});
            steps.push_back({conv(layer_kind::pointwise, as_sz(d.ci), as_sz(d.cj)), 0, -1});
            steps.push_back({conv(layer_kind::anglewise_h, as_sz(d.ci), as_sz(d.cj)), -1, -1});
            steps.push_back({conv(layer_kind::anglewise_v, as_sz(d.cj), as_sz(d.ci)), 2, -1});
            break;
    }
    return {std::move(steps), input};
}

}  // namespace lf::cost
