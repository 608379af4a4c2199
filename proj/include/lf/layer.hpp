#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "lf/error.hpp"
#include "lf/tensor.hpp"

namespace lf {

enum class layer_kind {
    subview2d,        // shared k*k*ci*co kernel applied to every (u,v) subview
    depthwise,        // one k*k filter per channel, per subview
    pointwise,        // 1x1 channel mixing
    anglewise_h,      // 3-D conv over (v, x, y)
    anglewise_v,      // 3-D conv over (u, x, y)
    full4d,           // direct 4-D conv over (u, v, x, y); the factored ops' oracle
    max_pool_spatial, // valid pooling, window == stride
    relu,
    residual_add,
    global_avg_pool,  // mean over (u,v,x,y) per channel
    flatten,
    dense,
    dropout,
};

inline const char* layer_kind_name(layer_kind k) {
    switch (k) {
        case layer_kind::subview2d: return "subview2d";
        case layer_kind::depthwise: return "depthwise";
        case layer_kind::pointwise: return "pointwise";
        case layer_kind::anglewise_h: return "anglewise_h";
        case layer_kind::anglewise_v: return "anglewise_v";
        case layer_kind::full4d: return "full4d";
        case layer_kind::max_pool_spatial: return "max_pool";
        case layer_kind::relu: return "relu";
        case layer_kind::residual_add: return "residual_add";
        case layer_kind::global_avg_pool: return "global_avg_pool";
        case layer_kind::flatten: return "flatten";
        case layer_kind::dense: return "dense";
        case layer_kind::dropout: return "dropout";
    }
    return "unknown";
}

// Declarative layer description. Weight order per kind:
//   subview2d:   [dx][dy][ci][co]
//   depthwise:   [dx][dy][c]
//   pointwise:   [ci][co]
//   anglewise_*: [da][dx][dy][ci][co]   (da along v for H, along u for V)
//   full4d:      [du][dv][dx][dy][ci][co]
//   dense:       [in][out], with ci = in, co = out
// Bias, when present, has length co (ci for depthwise).
struct layer_spec {
    layer_kind kind = layer_kind::relu;
    std::size_t a = 1;       // angular kernel extent (anglewise, full4d)
    std::size_t k = 1;       // spatial kernel extent
    std::size_t ci = 1;      // input channels (dense: input length)
    std::size_t co = 1;      // output channels (dense: output length)
    std::size_t stride = 1;  // spatial stride; pooling window == stride
    double rate = 0.0;       // dropout keep-out probability
    std::vector<double> weights;
    std::vector<double> bias;  // empty = absent

    bool has_weights() const {
        switch (kind) {
            case layer_kind::subview2d:
            case layer_kind::depthwise:
            case layer_kind::pointwise:
            case layer_kind::anglewise_h:
            case layer_kind::anglewise_v:
            case layer_kind::full4d:
            case layer_kind::dense: return true;
            default: return false;
        }
    }

    std::size_t weight_count() const {
        switch (kind) {
            case layer_kind::subview2d: return k * k * ci * co;
            case layer_kind::depthwise: return k * k * ci;
            case layer_kind::pointwise: return ci * co;
            case layer_kind::anglewise_h:
            case layer_kind::anglewise_v: return a * k * k * ci * co;
            case layer_kind::full4d: return a * a * k * k * ci * co;
            case layer_kind::dense: return ci * co;
            default: return 0;
        }
    }

    std::size_t bias_count() const {
        if (!has_weights()) return 0;
        return kind == layer_kind::depthwise ? ci : co;
    }

    void validate() const {
        require(a >= 1 && k >= 1, errc::bad_argument, "kernel extents must be >= 1");
        require(stride == 1 || stride == 2 || stride == 4, errc::bad_stride,
                "stride must be one of {1,2,4}, got " + std::to_string(stride));
        switch (kind) {
            case layer_kind::pointwise:
            case layer_kind::anglewise_h:
            case layer_kind::anglewise_v:
            case layer_kind::full4d:
                require(stride == 1, errc::bad_stride,
                        std::string(layer_kind_name(kind)) + " supports stride 1 only");
                break;
            case layer_kind::max_pool_spatial:
                require(stride == 2 || stride == 4, errc::bad_stride, "pooling stride must be 2 or 4");
                break;
            default: break;
        }
        if (has_weights()) {
            require(weights.size() == weight_count(), errc::length_mismatch,
                    std::string(layer_kind_name(kind)) + " expects " + std::to_string(weight_count()) +
                        " weights, got " + std::to_string(weights.size()));
            require(bias.empty() || bias.size() == bias_count(), errc::length_mismatch,
                    std::string(layer_kind_name(kind)) + " expects bias length " +
                        std::to_string(bias_count()) + ", got " + std::to_string(bias.size()));
        }
    }
};

// "Same" padding split for odd and even kernels: pad_before = floor((k-1)/2),
// pad_after = ceil((k-1)/2). With stride s the output extent is ceil(n/s);
// this is what maps 434->217 and 54->27->14->7 in the stride-2 stages.
inline std::size_t pad_before(std::size_t kernel) { return (kernel - 1) / 2; }
inline std::size_t same_out(std::size_t n, std::size_t stride) { return (n + stride - 1) / stride; }
inline std::size_t pool_out(std::size_t n, std::size_t window) { return (n - window) / window + 1; }

// Shape propagation for a single-input layer. Cheap enough to run over the
// whole model without touching any tensor data.
inline shape output_shape(const layer_spec& l, const shape& in) {
    l.validate();
    auto check_channels = [&](std::size_t expect) {
        require(in.c == expect, errc::channel_mismatch,
                std::string(layer_kind_name(l.kind)) + " expects " + std::to_string(expect) +
                    " input channels, got " + std::to_string(in.c));
    };
    switch (l.kind) {
        case layer_kind::subview2d:
            check_channels(l.ci);
            return {in.u, in.v, same_out(in.x, l.stride), same_out(in.y, l.stride), l.co};
        case layer_kind::depthwise:
            check_channels(l.ci);
            return {in.u, in.v, same_out(in.x, l.stride), same_out(in.y, l.stride), l.ci};
        case layer_kind::pointwise:
            check_channels(l.ci);
            return {in.u, in.v, in.x, in.y, l.co};
        case layer_kind::anglewise_h:
        case layer_kind::anglewise_v:
        case layer_kind::full4d:
            check_channels(l.ci);
            return {in.u, in.v, in.x, in.y, l.co};
        case layer_kind::max_pool_spatial:
            require(in.x >= l.stride && in.y >= l.stride, errc::spatial_too_small,
                    "pooling window " + std::to_string(l.stride) + " exceeds spatial extent " +
                        in.str());
            return {in.u, in.v, pool_out(in.x, l.stride), pool_out(in.y, l.stride), in.c};
        case layer_kind::relu:
        case layer_kind::dropout:
        case layer_kind::residual_add: return in;
        case layer_kind::global_avg_pool: return {1, 1, 1, 1, in.c};
        case layer_kind::flatten: return {1, 1, 1, 1, in.count()};
        case layer_kind::dense:
            require(in.u == 1 && in.v == 1 && in.x == 1 && in.y == 1, errc::shape_mismatch,
                    "dense expects a flat vector input, got " + in.str());
            require(in.c == l.ci, errc::length_mismatch,
                    "dense expects input length " + std::to_string(l.ci) + ", got " +
                        std::to_string(in.c));
            return {1, 1, 1, 1, l.co};
    }
    fail(errc::bad_argument, "unhandled layer kind");
}

}  // namespace lf
