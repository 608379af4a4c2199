#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <vector>

#include "lf/error.hpp"
#include "lf/layer.hpp"
#include "lf/parallel.hpp"
#include "lf/rng.hpp"
#include "lf/tensor.hpp"

namespace lf::ops {

// ---------------------------------------------------------------------------
// Multiply-accumulate instrumentation. Every convolution and dense kernel
// bumps this once per kernel tap, *including* taps that land on zero padding,
// because the closed-form cost model carries no boundary correction. Pooling,
// ReLU, additions and averages perform no multiplies and count nothing.
// ---------------------------------------------------------------------------

inline std::atomic<std::uint64_t>& mac_counter() {
    static std::atomic<std::uint64_t> counter{0};
    return counter;
}

inline void reset_macs() { mac_counter().store(0, std::memory_order_relaxed); }
inline std::uint64_t macs() { return mac_counter().load(std::memory_order_relaxed); }

namespace detail {

struct mac_tally {
    std::uint64_t n = 0;
    ~mac_tally() { mac_counter().fetch_add(n, std::memory_order_relaxed); }
};

}  // namespace detail

// Zero-fill outside the tensor; channel access stays unchecked.
inline double at_padded(const tensor& t, std::ptrdiff_t u, std::ptrdiff_t v, std::ptrdiff_t x,
                        std::ptrdiff_t y, std::size_t c) {
    const auto& s = t.dims();
    if (u < 0 || v < 0 || x < 0 || y < 0 || static_cast<std::size_t>(u) >= s.u ||
        static_cast<std::size_t>(v) >= s.v || static_cast<std::size_t>(x) >= s.x ||
        static_cast<std::size_t>(y) >= s.y)
        return 0.0;
    return t.at(static_cast<std::size_t>(u), static_cast<std::size_t>(v),
                static_cast<std::size_t>(x), static_cast<std::size_t>(y), c);
}

// Shared k*k*ci*co kernel swept independently over every (u,v) subview.
inline tensor conv2d_subview(const tensor& in, const layer_spec& l) {
    require(l.kind == layer_kind::subview2d, errc::bad_argument, "kind must be subview2d");
    const shape os = output_shape(l, in.dims());
    const shape& is = in.dims();
    tensor out = tensor::zeros(os);
    const std::size_t pb = pad_before(l.k);
    parallel_for(is.u * is.v, [&](std::size_t begin, std::size_t end) {
        detail::mac_tally tally;
        for (std::size_t uv = begin; uv < end; ++uv) {
            const std::size_t u = uv / is.v, v = uv % is.v;
            for (std::size_t ox = 0; ox < os.x; ++ox)
                for (std::size_t oy = 0; oy < os.y; ++oy)
                    for (std::size_t j = 0; j < l.co; ++j) {
                        double acc = 0.0;
                        for (std::size_t dx = 0; dx < l.k; ++dx)
                            for (std::size_t dy = 0; dy < l.k; ++dy) {
                                const std::ptrdiff_t xi = static_cast<std::ptrdiff_t>(ox * l.stride + dx) -
                                                          static_cast<std::ptrdiff_t>(pb);
                                const std::ptrdiff_t yi = static_cast<std::ptrdiff_t>(oy * l.stride + dy) -
                                                          static_cast<std::ptrdiff_t>(pb);
                                for (std::size_t i = 0; i < l.ci; ++i) {
                                    acc += l.weights[((dx * l.k + dy) * l.ci + i) * l.co + j] *
                                           at_padded(in, u, v, xi, yi, i);
                                    ++tally.n;
                                }
                            }
                        if (!l.bias.empty()) acc += l.bias[j];
                        out.at(u, v, ox, oy, j) = acc;
                    }
        }
    });
    return out;
}

// One k*k filter per channel; channel count is preserved.
inline tensor conv_depthwise(const tensor& in, const layer_spec& l) {
    require(l.kind == layer_kind::depthwise, errc::bad_argument, "kind must be depthwise");
    const shape os = output_shape(l, in.dims());
    const shape& is = in.dims();
    tensor out = tensor::zeros(os);
    const std::size_t pb = pad_before(l.k);
    parallel_for(is.u * is.v, [&](std::size_t begin, std::size_t end) {
        detail::mac_tally tally;
        for (std::size_t uv = begin; uv < end; ++uv) {
            const std::size_t u = uv / is.v, v = uv % is.v;
            for (std::size_t ox = 0; ox < os.x; ++ox)
                for (std::size_t oy = 0; oy < os.y; ++oy)
                    for (std::size_t c = 0; c < l.ci; ++c) {
                        double acc = 0.0;
                        for (std::size_t dx = 0; dx < l.k; ++dx)
                            for (std::size_t dy = 0; dy < l.k; ++dy) {
                                const std::ptrdiff_t xi = static_cast<std::ptrdiff_t>(ox * l.stride + dx) -
                                                          static_cast<std::ptrdiff_t>(pb);
                                const std::ptrdiff_t yi = static_cast<std::ptrdiff_t>(oy * l.stride + dy) -
                                                          static_cast<std::ptrdiff_t>(pb);
                                acc += l.weights[(dx * l.k + dy) * l.ci + c] * at_padded(in, u, v, xi, yi, c);
                                ++tally.n;
                            }
                        if (!l.bias.empty()) acc += l.bias[c];
                        out.at(u, v, ox, oy, c) = acc;
                    }
        }
    });
    return out;
}

// ci -> co matrix applied at every (u,v,x,y) position.
inline tensor conv_pointwise(const tensor& in, const layer_spec& l) {
    require(l.kind == layer_kind::pointwise, errc::bad_argument, "kind must be pointwise");
    const shape os = output_shape(l, in.dims());
    tensor out = tensor::zeros(os);
    const std::size_t positions = os.u * os.v * os.x * os.y;
    parallel_for(positions, [&](std::size_t begin, std::size_t end) {
        detail::mac_tally tally;
        const double* src = in.data().data();
        double* dst = out.data().data();
        for (std::size_t p = begin; p < end; ++p) {
            const double* px = src + p * l.ci;
            double* po = dst + p * l.co;
            for (std::size_t j = 0; j < l.co; ++j) {
                double acc = 0.0;
                for (std::size_t i = 0; i < l.ci; ++i) {
                    acc += l.weights[i * l.co + j] * px[i];
                    ++tally.n;
                }
                if (!l.bias.empty()) acc += l.bias[j];
                po[j] = acc;
            }
        }
    });
    return out;
}

namespace detail {

// Both anglewise variants share one loop body; `along_u` selects the angular
// axis the kernel extent runs over.
inline tensor conv_anglewise(const tensor& in, const layer_spec& l, bool along_u) {
    const shape os = output_shape(l, in.dims());
    const shape& is = in.dims();
    tensor out = tensor::zeros(os);
    const std::size_t pa = pad_before(l.a);
    const std::size_t pk = pad_before(l.k);
    parallel_for(is.u * is.v, [&](std::size_t begin, std::size_t end) {
        mac_tally tally;
        for (std::size_t uv = begin; uv < end; ++uv) {
            const std::size_t u = uv / is.v, v = uv % is.v;
            for (std::size_t x = 0; x < os.x; ++x)
                for (std::size_t y = 0; y < os.y; ++y)
                    for (std::size_t j = 0; j < l.co; ++j) {
                        double acc = 0.0;
                        for (std::size_t da = 0; da < l.a; ++da) {
                            const std::ptrdiff_t ang = static_cast<std::ptrdiff_t>((along_u ? u : v) + da) -
                                                       static_cast<std::ptrdiff_t>(pa);
                            const std::ptrdiff_t ui = along_u ? ang : static_cast<std::ptrdiff_t>(u);
                            const std::ptrdiff_t vi = along_u ? static_cast<std::ptrdiff_t>(v) : ang;
                            for (std::size_t dx = 0; dx < l.k; ++dx)
                                for (std::size_t dy = 0; dy < l.k; ++dy) {
                                    const std::ptrdiff_t xi = static_cast<std::ptrdiff_t>(x + dx) -
                                                              static_cast<std::ptrdiff_t>(pk);
                                    const std::ptrdiff_t yi = static_cast<std::ptrdiff_t>(y + dy) -
                                                              static_cast<std::ptrdiff_t>(pk);
                                    for (std::size_t i = 0; i < l.ci; ++i) {
                                        acc += l.weights[(((da * l.k + dx) * l.k + dy) * l.ci + i) * l.co + j] *
                                               at_padded(in, ui, vi, xi, yi, i);
                                        ++tally.n;
                                    }
                                }
                        }
                        if (!l.bias.empty()) acc += l.bias[j];
                        out.at(u, v, x, y, j) = acc;
                    }
        }
    });
    return out;
}

}  // namespace detail

// 3-D convolution over (v, x, y): angular extent a runs along the horizontal
// angular axis v, jointly over input channels.
inline tensor conv_anglewise_h(const tensor& in, const layer_spec& l) {
    require(l.kind == layer_kind::anglewise_h, errc::bad_argument, "kind must be anglewise_h");
    return detail::conv_anglewise(in, l, /*along_u=*/false);
}

// As conv_anglewise_h with the angular extent along u.
inline tensor conv_anglewise_v(const tensor& in, const layer_spec& l) {
    require(l.kind == layer_kind::anglewise_v, errc::bad_argument, "kind must be anglewise_v");
    return detail::conv_anglewise(in, l, /*along_u=*/true);
}

// Direct loop-based 4-D convolution; deliberately naive, it is the
// correctness oracle every factored op is checked against.
inline tensor conv4d_full(const tensor& in, const layer_spec& l) {
    require(l.kind == layer_kind::full4d, errc::bad_argument, "kind must be full4d");
    const shape os = output_shape(l, in.dims());
    const shape& is = in.dims();
    tensor out = tensor::zeros(os);
    const std::size_t pa = pad_before(l.a);
    const std::size_t pk = pad_before(l.k);
    parallel_for(is.u * is.v, [&](std::size_t begin, std::size_t end) {
        detail::mac_tally tally;
        for (std::size_t uv = begin; uv < end; ++uv) {
            const std::size_t u = uv / is.v, v = uv % is.v;
            for (std::size_t x = 0; x < os.x; ++x)
                for (std::size_t y = 0; y < os.y; ++y)
                    for (std::size_t j = 0; j < l.co; ++j) {
                        double acc = 0.0;
                        for (std::size_t du = 0; du < l.a; ++du)
                            for (std::size_t dv = 0; dv < l.a; ++dv) {
                                const std::ptrdiff_t ui = static_cast<std::ptrdiff_t>(u + du) -
                                                          static_cast<std::ptrdiff_t>(pa);
                                const std::ptrdiff_t vi = static_cast<std::ptrdiff_t>(v + dv) -
                                                          static_cast<std::ptrdiff_t>(pa);
                                for (std::size_t dx = 0; dx < l.k; ++dx)
                                    for (std::size_t dy = 0; dy < l.k; ++dy) {
                                        const std::ptrdiff_t xi = static_cast<std::ptrdiff_t>(x + dx) -
                                                                  static_cast<std::ptrdiff_t>(pk);
                                        const std::ptrdiff_t yi = static_cast<std::ptrdiff_t>(y + dy) -
                                                                  static_cast<std::ptrdiff_t>(pk);
                                        for (std::size_t i = 0; i < l.ci; ++i) {
                                            acc += l.weights[((((du * l.a + dv) * l.k + dx) * l.k + dy) * l.ci + i) *
                                                                 l.co +
                                                             j] *
                                                   at_padded(in, ui, vi, xi, yi, i);
                                            ++tally.n;
                                        }
                                    }
                            }
                        if (!l.bias.empty()) acc += l.bias[j];
                        out.at(u, v, x, y, j) = acc;
                    }
        }
    });
    return out;
}

// Valid max pooling with window == stride. Ties go to the first entry in
// row-major scan order; argmax (flat offsets into the input) is recorded when
// a sink is supplied so backward can route gradients deterministically.
inline tensor max_pool_spatial(const tensor& in, std::size_t stride,
                               std::vector<std::uint32_t>* argmax = nullptr) {
    layer_spec l;
    l.kind = layer_kind::max_pool_spatial;
    l.stride = stride;
    const shape os = output_shape(l, in.dims());
    const shape& is = in.dims();
    tensor out = tensor::zeros(os);
    if (argmax != nullptr) argmax->assign(os.count(), 0);
    parallel_for(is.u * is.v, [&](std::size_t begin, std::size_t end) {
        for (std::size_t uv = begin; uv < end; ++uv) {
            const std::size_t u = uv / is.v, v = uv % is.v;
            for (std::size_t ox = 0; ox < os.x; ++ox)
                for (std::size_t oy = 0; oy < os.y; ++oy)
                    for (std::size_t c = 0; c < is.c; ++c) {
                        double best = -std::numeric_limits<double>::infinity();
                        std::size_t best_off = 0;
                        for (std::size_t dx = 0; dx < stride; ++dx)
                            for (std::size_t dy = 0; dy < stride; ++dy) {
                                const std::size_t off = in.offset(u, v, ox * stride + dx, oy * stride + dy, c);
                                const double value = in.data()[off];
                                if (value > best) {
                                    best = value;
                                    best_off = off;
                                }
                            }
                        out.at(u, v, ox, oy, c) = best;
                        if (argmax != nullptr)
                            (*argmax)[out.offset(u, v, ox, oy, c)] = static_cast<std::uint32_t>(best_off);
                    }
        }
    });
    return out;
}

inline tensor relu(const tensor& in) {
    tensor out = tensor::zeros(in.dims());
    for (std::size_t i = 0; i < in.size(); ++i) out.data()[i] = std::max(0.0, in.data()[i]);
    return out;
}

inline tensor residual_add(const tensor& a, const tensor& b) {
    require(a.same_shape(b), errc::shape_mismatch,
            "residual_add requires identical shapes, got " + a.dims().str() + " and " + b.dims().str());
    tensor out = tensor::zeros(a.dims());
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
    return out;
}

// Mean over (u,v,x,y) per channel, kept as a flat (1,1,1,1,c) tensor.
inline tensor global_avg_pool_t(const tensor& in) {
    const shape& s = in.dims();
    tensor out = tensor::zeros({1, 1, 1, 1, s.c});
    const std::size_t positions = s.u * s.v * s.x * s.y;
    for (std::size_t i = 0; i < in.size(); ++i) out.data()[i % s.c] += in.data()[i];
    for (double& value : out.data()) value /= static_cast<double>(positions);
    return out;
}

inline std::vector<double> global_avg_pool(const tensor& in) { return global_avg_pool_t(in).data(); }

inline tensor flatten_t(const tensor& in) {
    return tensor({1, 1, 1, 1, in.size()}, in.data());
}

// weights are [in][out]; bias, when present, has length out.
inline std::vector<double> dense(const std::vector<double>& v, const std::vector<double>& weights,
                                 const std::vector<double>& bias, std::size_t out_len) {
    require(out_len >= 1 && weights.size() == v.size() * out_len, errc::length_mismatch,
            "dense weight matrix must be input length x output length");
    require(bias.empty() || bias.size() == out_len, errc::length_mismatch, "dense bias length mismatch");
    std::vector<double> out(out_len, 0.0);
    detail::mac_tally tally;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double value = v[i];
        for (std::size_t j = 0; j < out_len; ++j) {
            out[j] += weights[i * out_len + j] * value;
            ++tally.n;
        }
    }
    if (!bias.empty())
        for (std::size_t j = 0; j < out_len; ++j) out[j] += bias[j];
    return out;
}

inline tensor dense_t(const tensor& in, const layer_spec& l) {
    require(l.kind == layer_kind::dense, errc::bad_argument, "kind must be dense");
    (void)output_shape(l, in.dims());
    return tensor({1, 1, 1, 1, l.co}, dense(in.data(), l.weights, l.bias, l.co));
}

// Inverted dropout: kept units are scaled by 1/(1-rate) so inference needs
// no rescaling. The mask is recorded for backward.
inline tensor dropout(const tensor& in, double rate, rng& gen, std::vector<std::uint8_t>* mask_out) {
    require(rate >= 0.0 && rate < 1.0, errc::bad_argument, "dropout rate must be in [0,1)");
    tensor out = tensor::zeros(in.dims());
    if (mask_out != nullptr) mask_out->assign(in.size(), 1);
    const double scale = 1.0 / (1.0 - rate);
    for (std::size_t i = 0; i < in.size(); ++i) {
        const bool keep = gen.uniform() >= rate;
        if (mask_out != nullptr) (*mask_out)[i] = keep ? 1 : 0;
        out.data()[i] = keep ? in.data()[i] * scale : 0.0;
    }
    return out;
}

// Dispatcher for the single-input layer kinds (residual_add and dropout are
// wired explicitly by the executor).
inline tensor apply(const layer_spec& l, const tensor& in) {
    switch (l.kind) {
        case layer_kind::subview2d: return conv2d_subview(in, l);
        case layer_kind::depthwise: return conv_depthwise(in, l);
        case layer_kind::pointwise: return conv_pointwise(in, l);
        case layer_kind::anglewise_h: return conv_anglewise_h(in, l);
        case layer_kind::anglewise_v: return conv_anglewise_v(in, l);
        case layer_kind::full4d: return conv4d_full(in, l);
        case layer_kind::max_pool_spatial: return max_pool_spatial(in, l.stride);
        case layer_kind::relu: return relu(in);
        case layer_kind::global_avg_pool: return global_avg_pool_t(in);
        case layer_kind::flatten: return flatten_t(in);
        case layer_kind::dense: return dense_t(in, l);
        default: fail(errc::bad_argument, std::string("apply: unsupported kind ") + layer_kind_name(l.kind));
    }
}

}  // namespace lf::ops
