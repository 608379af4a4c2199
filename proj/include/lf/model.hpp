#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "lf/autodiff.hpp"
#include "lf/error.hpp"
#include "lf/layer.hpp"
#include "lf/ops.hpp"
#include "lf/rng.hpp"
#include "lf/tensor.hpp"

namespace lf {

enum class model_scale : std::uint32_t { full = 0, tiny = 1, custom = 2 };

// The assembled network: a step program with three designated head outputs.
// Steps up to trunk_end form the shared body; the primary head regresses the
// quality score, the two auxiliary heads estimate the 36-dim spatial and
// 8-dim angular quality features.
struct model_spec {
    shape input;
    std::vector<step> steps;
    int trunk_end = -1;
    int primary_out = -1;
    int spatial_out = -1;
    int angular_out = -1;
    double lambda = 0.01;
    double dropout_rate = 0.2;
    model_scale scale = model_scale::custom;

    std::vector<int> head_outputs() const { return {primary_out, spatial_out, angular_out}; }
};

namespace detail {

inline double fan_in(const layer_spec& l) {
    switch (l.kind) {
        case layer_kind::subview2d: return static_cast<double>(l.k * l.k * l.ci);
        case layer_kind::depthwise: return static_cast<double>(l.k * l.k);
        case layer_kind::pointwise: return static_cast<double>(l.ci);
        case layer_kind::anglewise_h:
        case layer_kind::anglewise_v: return static_cast<double>(l.a * l.k * l.k * l.ci);
        case layer_kind::full4d: return static_cast<double>(l.a * l.a * l.k * l.k * l.ci);
        case layer_kind::dense: return static_cast<double>(l.ci);
        default: return 1.0;
    }
}

// Fan-in-scaled uniform init (He-style); biases start at zero.
inline layer_spec make_conv(layer_kind kind, std::size_t ci, std::size_t co, std::size_t k, std::size_t a,
                            std::size_t stride, bool with_bias, rng& gen) {
    layer_spec l;
    l.kind = kind;
    l.ci = ci;
    l.co = co;
    l.k = k;
    l.a = a;
    l.stride = stride;
    l.weights.resize(l.weight_count());
    const double bound = std::sqrt(6.0 / fan_in(l));
    for (double& w : l.weights) w = gen.uniform(-bound, bound);
    if (with_bias) l.bias.assign(l.bias_count(), 0.0);
    l.validate();
    return l;
}

inline layer_spec make_plain(layer_kind kind, std::size_t stride = 1, double rate = 0.0) {
    layer_spec l;
    l.kind = kind;
    l.stride = stride;
    l.rate = rate;
    return l;
}

struct builder {
    std::vector<step> steps;
    int last = -1;

    int add(layer_spec l, int in0, int in1 = -2) {
        step st;
        st.layer = std::move(l);
        st.input0 = in0;
        st.input1 = in1 == -2 ? -1 : in1;
        if (st.layer.kind != layer_kind::residual_add) st.input1 = -1;
        steps.push_back(std::move(st));
        last = static_cast<int>(steps.size()) - 1;
        return last;
    }

    int append(layer_spec l) { return add(std::move(l), last); }
};

// LF-ASC: horizontal then vertical anglewise convolution. Stride-1 blocks
// with matching channels carry a residual shortcut; the closing convolution
// defers its activation until after the add.
inline void add_asc_block(builder& b, std::size_t ci, std::size_t co, std::size_t a, std::size_t k,
                          bool residual, rng& gen) {
    const int block_in = b.last;
    b.append(make_conv(layer_kind::anglewise_h, ci, co, k, a, 1, false, gen));
    b.append(make_plain(layer_kind::relu));
    b.append(make_conv(layer_kind::anglewise_v, co, co, k, a, 1, false, gen));
    if (residual) {
        require(ci == co, errc::channel_mismatch, "residual ASC block needs ci == co");
        b.add(make_plain(layer_kind::residual_add), b.last, block_in);
    }
    b.append(make_plain(layer_kind::relu));
}

// LF-DSC: pointwise -> depthwise -> pointwise. The depthwise stage carries
// the stride; stride-1 blocks keep their input width and add a shortcut.
inline void add_dsc_block(builder& b, std::size_t ci, std::size_t co, std::size_t k, std::size_t stride,
                          rng& gen) {
    const int block_in = b.last;
    const bool residual = stride == 1 && ci == co;
    b.append(make_conv(layer_kind::pointwise, ci, co, 1, 1, 1, true, gen));
    b.append(make_plain(layer_kind::relu));
    b.append(make_conv(layer_kind::depthwise, co, co, k, 1, stride, false, gen));
    b.append(make_plain(layer_kind::relu));
    b.append(make_conv(layer_kind::pointwise, co, co, 1, 1, 1, true, gen));
    if (residual) b.add(make_plain(layer_kind::residual_add), b.last, block_in);
    b.append(make_plain(layer_kind::relu));
}

// Primary head: flatten -> dense to a single score. Auxiliary heads: global
// average pool -> 256 -> 256 -> output, ReLU between the two 256-unit
// layers, dropout after the first, linear output.
inline void add_heads(builder& b, model_spec& m, const shape& trunk_shape, double dropout_rate, rng& gen) {
    const int trunk = b.last;
    m.trunk_end = trunk;

    b.add(make_plain(layer_kind::flatten), trunk);
    m.primary_out = b.append(make_conv(layer_kind::dense, trunk_shape.count(), 1, 1, 1, 1, true, gen));

    for (int head = 0; head < 2; ++head) {
        const std::size_t out_dim = head == 0 ? 36 : 8;
        b.add(make_plain(layer_kind::global_avg_pool), trunk);
        b.append(make_conv(layer_kind::dense, trunk_shape.c, 256, 1, 1, 1, true, gen));
        b.append(make_plain(layer_kind::relu));
        b.append(make_plain(layer_kind::dropout, 1, dropout_rate));
        b.append(make_conv(layer_kind::dense, 256, 256, 1, 1, 1, true, gen));
        const int out = b.append(make_conv(layer_kind::dense, 256, out_dim, 1, 1, 1, true, gen));
        (head == 0 ? m.spatial_out : m.angular_out) = out;
    }
}

}  // namespace detail

// Assembles ALAS-DADS. Full scale requires (7,7,434,434,3) and reproduces
// the published stack: stride-2 2D conv, three LF-ASC blocks, stride-4 max
// pool, six alternating stride-1/stride-2 LF-DSC blocks growing channels
// 3->12->48->192, pointwise to 1024, stride-2 max pool, then the three
// heads. Tiny scale keeps the topology on a reduced shape (default
// (3,3,32,32,3)) with channel growth 3->6->12->24 and pointwise to 64; the
// closing pool is skipped once the spatial extent has collapsed below the
// window.
inline model_spec build_alas_dads(const shape& input, model_scale scale, std::uint64_t seed = 1,
                                  double dropout_rate = 0.2) {
    require(input.c == 3, errc::bad_input_shape, "ALAS-DADS expects 3 input channels");
    require(scale == model_scale::full || scale == model_scale::tiny, errc::bad_argument,
            "scale must be full or tiny");
    if (scale == model_scale::full)
        require(input == shape{7, 7, 434, 434, 3}, errc::bad_input_shape,
                "full scale requires input (7,7,434,434,3), got " + input.str());

    const std::size_t a = scale == model_scale::full ? 7 : std::min({input.u, input.v, std::size_t{7}});
    const std::vector<std::size_t> growth = scale == model_scale::full
                                                ? std::vector<std::size_t>{3, 12, 48, 192}
                                                : std::vector<std::size_t>{3, 6, 12, 24};
    const std::size_t top_channels = scale == model_scale::full ? 1024 : 64;

    rng gen(seed);
    detail::builder b;
    model_spec m;
    m.input = input;
    m.scale = scale;
    m.dropout_rate = dropout_rate;

    b.append(detail::make_conv(layer_kind::subview2d, 3, 3, 3, 1, 2, false, gen));
    b.append(detail::make_plain(layer_kind::relu));

    detail::add_asc_block(b, 3, 3, a, 4, false, gen);
    detail::add_asc_block(b, 3, 3, a, 4, true, gen);
    detail::add_asc_block(b, 3, 3, a, 4, true, gen);

    b.append(detail::make_plain(layer_kind::max_pool_spatial, 4));

    for (std::size_t stage = 0; stage + 1 < growth.size(); ++stage) {
        detail::add_dsc_block(b, growth[stage], growth[stage], 4, 1, gen);
        detail::add_dsc_block(b, growth[stage], growth[stage + 1], 4, 2, gen);
    }

    b.append(detail::make_conv(layer_kind::pointwise, growth.back(), top_channels, 1, 1, 1, true, gen));
    b.append(detail::make_plain(layer_kind::relu));

    shape trunk_shape = propagate_shapes(b.steps, input).back();
    if (trunk_shape.x >= 2 && trunk_shape.y >= 2)
        b.append(detail::make_plain(layer_kind::max_pool_spatial, 2));
    trunk_shape = propagate_shapes(b.steps, input).back();

    detail::add_heads(b, m, trunk_shape, dropout_rate, gen);
    m.steps = std::move(b.steps);
    (void)propagate_shapes(m.steps, input);
    return m;
}

enum class ablation_kind { four_d_conv, lf_dsc, lf_asc, lf_dsc_asc };

inline const char* ablation_kind_name(ablation_kind k) {
    switch (k) {
        case ablation_kind::four_d_conv: return "10-4D-Conv";
        case ablation_kind::lf_dsc: return "10-LF-DSC";
        case ablation_kind::lf_asc: return "10-LF-ASC";
        case ablation_kind::lf_dsc_asc: return "10-LF-DSC-ASC";
    }
    return "unknown";
}

// Ablation backbones: a shared stride-2 stem and head around ten stacked
// blocks of the named kind (the DSC-ASC combination stacks a DSC and an ASC
// block per unit, i.e. twenty blocks in total). Block hyperparameters are
// exposed because the published ablation settings are not fully specified.
inline model_spec build_ablation(ablation_kind kind, const shape& input, std::size_t channels,
                                 std::size_t k, std::size_t a, std::uint64_t seed = 1,
                                 double dropout_rate = 0.2) {
    require(channels >= 1 && k >= 1 && a >= 1, errc::bad_argument, "invalid ablation hyperparameters");
    rng gen(seed);
    detail::builder b;
    model_spec m;
    m.input = input;
    m.scale = model_scale::custom;
    m.dropout_rate = dropout_rate;

    b.append(detail::make_conv(layer_kind::subview2d, input.c, channels, 3, 1, 2, false, gen));
    b.append(detail::make_plain(layer_kind::relu));

    for (int block = 0; block < 10; ++block) {
        switch (kind) {
            case ablation_kind::four_d_conv: {
                const int block_in = b.last;
                b.append(detail::make_conv(layer_kind::full4d, channels, channels, k, a, 1, false, gen));
                b.add(detail::make_plain(layer_kind::residual_add), b.last, block_in);
                b.append(detail::make_plain(layer_kind::relu));
                break;
            }
            case ablation_kind::lf_dsc: detail::add_dsc_block(b, channels, channels, k, 1, gen); break;
            case ablation_kind::lf_asc: detail::add_asc_block(b, channels, channels, a, k, true, gen); break;
            case ablation_kind::lf_dsc_asc:
                detail::add_dsc_block(b, channels, channels, k, 1, gen);
                detail::add_asc_block(b, channels, channels, a, k, true, gen);
                break;
        }
    }

    const shape trunk_shape = propagate_shapes(b.steps, input).back();
    detail::add_heads(b, m, trunk_shape, dropout_rate, gen);
    m.steps = std::move(b.steps);
    (void)propagate_shapes(m.steps, input);
    return m;
}

// ---------------------------------------------------------------------------
// Task losses (mean squared error) and their weighted total.
// ---------------------------------------------------------------------------

inline double loss_primary(const std::vector<double>& y, const std::vector<double>& y_hat) {
    require(!y.empty() && y.size() == y_hat.size(), errc::length_mismatch,
            "score vectors must be nonempty and equal length");
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double d = y[i] - y_hat[i];
        acc += d * d;
    }
    return acc / static_cast<double>(y.size());
}

inline double loss_feature(const std::vector<std::vector<double>>& truth,
                           const std::vector<std::vector<double>>& pred, std::size_t dim) {
    require(!truth.empty() && truth.size() == pred.size(), errc::length_mismatch,
            "feature batches must be nonempty and equal length");
    double acc = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        require(truth[i].size() == dim && pred[i].size() == dim, errc::dimension_mismatch,
                "feature rows must have dimension " + std::to_string(dim));
        for (std::size_t j = 0; j < dim; ++j) {
            const double d = truth[i][j] - pred[i][j];
            acc += d * d;
        }
    }
    return acc / (static_cast<double>(dim) * static_cast<double>(truth.size()));
}

inline double loss_spatial(const std::vector<std::vector<double>>& truth,
                           const std::vector<std::vector<double>>& pred) {
    return loss_feature(truth, pred, 36);
}

inline double loss_angular(const std::vector<std::vector<double>>& truth,
                           const std::vector<std::vector<double>>& pred) {
    return loss_feature(truth, pred, 8);
}

inline double loss_total(double l_p, double l_s, double l_a, double lambda) {
    require(lambda >= 0.0, errc::bad_argument, "lambda must be non-negative");
    return l_p + lambda * (l_s + l_a);
}

// ---------------------------------------------------------------------------
// Inference.
// ---------------------------------------------------------------------------

struct prediction {
    double score = 0.0;
    std::vector<double> spatial;
    std::vector<double> angular;
};

// Normalizes the raw LFI and runs the trunk plus the three heads. Dropout is
// inference-inactive.
inline prediction predict(const model_spec& m, const tensor& lfi) {
    require(lfi.dims() == m.input, errc::shape_mismatch,
            "model expects input " + m.input.str() + ", got " + lfi.dims().str());
    const tensor normalized = normalize(lfi);
    auto outs = run_program(m.steps, normalized, m.head_outputs());
    prediction p;
    p.score = outs[0].data()[0];
    p.spatial = outs[1].data();
    p.angular = outs[2].data();
    return p;
}

// ---------------------------------------------------------------------------
// "ALAS" checkpoint: 4-byte magic, u32 format version, u32 step count, then
// per step a kind tag, its dimensions and wiring, and little-endian f32
// weights/biases; lambda, dropout rate, scale and the head wiring live in a
// trailing metadata block. Parameters are quantized to f32 on save; a saved
// model reloads to an identical parameter set thereafter.
// ---------------------------------------------------------------------------

namespace detail {

inline std::uint32_t kind_tag(layer_kind k) { return static_cast<std::uint32_t>(k); }

inline layer_kind kind_from_tag(std::uint32_t tag) {
    require(tag <= static_cast<std::uint32_t>(layer_kind::dropout), errc::bad_checkpoint,
            "unknown layer kind tag " + std::to_string(tag));
    return static_cast<layer_kind>(tag);
}

inline void put_i32le(std::ostream& os, std::int32_t value) {
    lf::detail::put_u32le(os, static_cast<std::uint32_t>(value));
}

inline std::int32_t get_i32le(std::istream& is) {
    return static_cast<std::int32_t>(lf::detail::get_u32le(is));
}

}  // namespace detail

inline void save_checkpoint(std::ostream& os, const model_spec& m) {
    using lf::detail::put_u32le;
    using lf::detail::put_f32le;
    os.write("ALAS", 4);
    put_u32le(os, 1);  // format version
    put_u32le(os, static_cast<std::uint32_t>(m.steps.size()));
    for (const step& st : m.steps) {
        const layer_spec& l = st.layer;
        put_u32le(os, detail::kind_tag(l.kind));
        for (std::size_t d : {l.a, l.k, l.ci, l.co, l.stride}) put_u32le(os, static_cast<std::uint32_t>(d));
        put_f32le(os, static_cast<float>(l.rate));
        detail::put_i32le(os, st.input0);
        detail::put_i32le(os, st.input1);
        put_u32le(os, static_cast<std::uint32_t>(l.weights.size()));
        for (double w : l.weights) put_f32le(os, static_cast<float>(w));
        put_u32le(os, static_cast<std::uint32_t>(l.bias.size()));
        for (double bval : l.bias) put_f32le(os, static_cast<float>(bval));
    }
    put_u32le(os, static_cast<std::uint32_t>(m.scale));
    for (std::size_t d : {m.input.u, m.input.v, m.input.x, m.input.y, m.input.c})
        put_u32le(os, static_cast<std::uint32_t>(d));
    put_f32le(os, static_cast<float>(m.lambda));
    put_f32le(os, static_cast<float>(m.dropout_rate));
    detail::put_i32le(os, m.trunk_end);
    detail::put_i32le(os, m.primary_out);
    detail::put_i32le(os, m.spatial_out);
    detail::put_i32le(os, m.angular_out);
}

inline void save_checkpoint(const std::string& path, const model_spec& m) {
    std::ofstream os(path, std::ios::binary);
    require(os.good(), errc::io_error, "cannot open for writing: " + path);
    save_checkpoint(os, m);
    require(os.good(), errc::io_error, "short write: " + path);
}

inline model_spec load_checkpoint(std::istream& is) {
    using lf::detail::get_u32le;
    using lf::detail::get_f32le;
    char magic[4];
    is.read(magic, 4);
    require(is.good() && std::memcmp(magic, "ALAS", 4) == 0, errc::bad_checkpoint, "bad checkpoint magic");
    const std::uint32_t version = get_u32le(is);
    require(version == 1, errc::bad_checkpoint, "unsupported checkpoint version " + std::to_string(version));
    const std::uint32_t count = get_u32le(is);
    model_spec m;
    m.steps.resize(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        step& st = m.steps[i];
        layer_spec& l = st.layer;
        l.kind = detail::kind_from_tag(get_u32le(is));
        l.a = get_u32le(is);
        l.k = get_u32le(is);
        l.ci = get_u32le(is);
        l.co = get_u32le(is);
        l.stride = get_u32le(is);
        l.rate = get_f32le(is);
        st.input0 = detail::get_i32le(is);
        st.input1 = detail::get_i32le(is);
        l.weights.resize(get_u32le(is));
        for (double& w : l.weights) w = get_f32le(is);
        l.bias.resize(get_u32le(is));
        for (double& bval : l.bias) bval = get_f32le(is);
        require(is.good(), errc::bad_checkpoint, "truncated checkpoint");
        l.validate();
    }
    m.scale = static_cast<model_scale>(get_u32le(is));
    m.input.u = get_u32le(is);
    m.input.v = get_u32le(is);
    m.input.x = get_u32le(is);
    m.input.y = get_u32le(is);
    m.input.c = get_u32le(is);
    m.lambda = get_f32le(is);
    m.dropout_rate = get_f32le(is);
    m.trunk_end = detail::get_i32le(is);
    m.primary_out = detail::get_i32le(is);
    m.spatial_out = detail::get_i32le(is);
    m.angular_out = detail::get_i32le(is);
    require(is.good(), errc::bad_checkpoint, "truncated checkpoint metadata");
    (void)propagate_shapes(m.steps, m.input);
    return m;
}

inline model_spec load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(is.good(), errc::io_error, "cannot open: " + path);
    return load_checkpoint(is);
}

}  // namespace lf
