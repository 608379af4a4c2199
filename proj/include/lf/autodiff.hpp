#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "lf/error.hpp"
#include "lf/layer.hpp"
#include "lf/ops.hpp"
#include "lf/rng.hpp"
#include "lf/tensor.hpp"

namespace lf {

// One computation step. Parameters live inside the layer_spec; inputs refer
// to earlier step indices, -1 meaning the program input. residual_add is the
// only two-input kind.
struct step {
    layer_spec layer;
    int input0 = -1;
    int input1 = -1;
};

// Propagates shapes through a whole program without touching tensor data.
inline std::vector<shape> propagate_shapes(const std::vector<step>& steps, const shape& input) {
    std::vector<shape> shapes(steps.size());
    for (std::size_t i = 0; i < steps.size(); ++i) {
        const step& st = steps[i];
        require(st.input0 < static_cast<int>(i) && st.input1 < static_cast<int>(i), errc::shape_chain_broken,
                "step inputs must precede the step");
        const shape in0 = st.input0 < 0 ? input : shapes[st.input0];
        if (st.layer.kind == layer_kind::residual_add) {
            require(st.input1 >= -1, errc::shape_chain_broken, "residual_add needs two inputs");
            const shape in1 = st.input1 < 0 ? input : shapes[st.input1];
            require(in0 == in1, errc::shape_mismatch,
                    "residual_add inputs differ: " + in0.str() + " vs " + in1.str());
            shapes[i] = in0;
        } else {
            try {
                shapes[i] = output_shape(st.layer, in0);
            } catch (const error& e) {
                if (e.code() == errc::channel_mismatch || e.code() == errc::length_mismatch ||
                    e.code() == errc::shape_mismatch)
                    fail(errc::shape_chain_broken,
                         "step " + std::to_string(i) + " (" + layer_kind_name(st.layer.kind) +
                             "): " + e.what());
                throw;
            }
        }
    }
    return shapes;
}

// Reverse-mode record: saved output per step plus whatever backward needs
// (pool argmax, dropout masks). Node order equals step order, so parents
// always precede children.
struct tape {
    tensor input;
    std::vector<tensor> values;
    std::vector<std::vector<std::uint32_t>> argmax;
    std::vector<std::vector<std::uint8_t>> mask;
    bool training = false;
};

struct exec_options {
    bool training = false;  // enables dropout
    rng* gen = nullptr;     // required when training with dropout present
};

inline const tensor& tape_value(const tape& t, int ref) { return ref < 0 ? t.input : t.values[ref]; }

// Runs the program and keeps every activation. The recorded outputs are
// exactly what plain op composition produces.
inline tape forward_record(const std::vector<step>& steps, tensor input, const exec_options& opt = {}) {
    tape t;
    t.training = opt.training;
    t.input = std::move(input);
    t.values.reserve(steps.size());
    t.argmax.resize(steps.size());
    t.mask.resize(steps.size());
    (void)propagate_shapes(steps, t.input.dims());
    for (std::size_t i = 0; i < steps.size(); ++i) {
        const step& st = steps[i];
        const tensor& in0 = tape_value(t, st.input0);
        switch (st.layer.kind) {
            case layer_kind::residual_add:
                t.values.push_back(ops::residual_add(in0, tape_value(t, st.input1)));
                break;
            case layer_kind::max_pool_spatial:
                t.values.push_back(ops::max_pool_spatial(in0, st.layer.stride, &t.argmax[i]));
                break;
            case layer_kind::dropout:
                if (opt.training && st.layer.rate > 0.0) {
                    require(opt.gen != nullptr, errc::bad_argument, "dropout needs an rng in training mode");
                    t.values.push_back(ops::dropout(in0, st.layer.rate, *opt.gen, &t.mask[i]));
                } else {
                    t.values.push_back(in0);
                }
                break;
            default: t.values.push_back(ops::apply(st.layer, in0)); break;
        }
    }
    return t;
}

// Memory-lean execution for inference: activations are dropped as soon as no
// later step needs them. Returns the values of the requested steps only.
inline std::vector<tensor> run_program(const std::vector<step>& steps, const tensor& input,
                                       const std::vector<int>& wanted) {
    std::vector<int> last_use(steps.size(), -1);
    for (std::size_t i = 0; i < steps.size(); ++i) {
        if (steps[i].input0 >= 0) last_use[steps[i].input0] = static_cast<int>(i);
        if (steps[i].input1 >= 0) last_use[steps[i].input1] = static_cast<int>(i);
    }
    for (int w : wanted) {
        require(w >= 0 && w < static_cast<int>(steps.size()), errc::bad_argument, "unknown output step");
        last_use[w] = static_cast<int>(steps.size());
    }
    std::vector<tensor> values(steps.size());
    for (std::size_t i = 0; i < steps.size(); ++i) {
        const step& st = steps[i];
        const tensor& in0 = st.input0 < 0 ? input : values[st.input0];
        switch (st.layer.kind) {
            case layer_kind::residual_add:
                values[i] = ops::residual_add(in0, st.input1 < 0 ? input : values[st.input1]);
                break;
            case layer_kind::dropout: values[i] = in0; break;
            default: values[i] = ops::apply(st.layer, in0); break;
        }
        for (int parent : {st.input0, st.input1})
            if (parent >= 0 && last_use[parent] == static_cast<int>(i)) values[parent] = tensor();
    }
    std::vector<tensor> out;
    out.reserve(wanted.size());
    for (int w : wanted) out.push_back(values[w]);
    return out;
}

// Per-step parameter gradients plus the gradient w.r.t. the program input.
struct gradients {
    std::vector<std::vector<double>> weight;
    std::vector<std::vector<double>> bias;
    tensor input;
};

namespace detail {

inline void backward_subview2d(const layer_spec& l, const tensor& in, const tensor& gout, tensor& gin,
                               std::vector<double>& gw, std::vector<double>& gb) {
    const shape& is = in.dims();
    const shape& os = gout.dims();
    const std::size_t pb = pad_before(l.k);
    for (std::size_t u = 0; u < os.u; ++u)
        for (std::size_t v = 0; v < os.v; ++v)
            for (std::size_t ox = 0; ox < os.x; ++ox)
                for (std::size_t oy = 0; oy < os.y; ++oy)
                    for (std::size_t j = 0; j < l.co; ++j) {
                        const double g = gout.at(u, v, ox, oy, j);
                        if (!l.bias.empty()) gb[j] += g;
                        for (std::size_t dx = 0; dx < l.k; ++dx)
                            for (std::size_t dy = 0; dy < l.k; ++dy) {
                                const std::ptrdiff_t xi = static_cast<std::ptrdiff_t>(ox * l.stride + dx) -
                                                          static_cast<std::ptrdiff_t>(pb);
                                const std::ptrdiff_t yi = static_cast<std::ptrdiff_t>(oy * l.stride + dy) -
                                                          static_cast<std::ptrdiff_t>(pb);
                                if (xi < 0 || yi < 0 || static_cast<std::size_t>(xi) >= is.x ||
                                    static_cast<std::size_t>(yi) >= is.y)
                                    continue;
                                for (std::size_t i = 0; i < l.ci; ++i) {
                                    const std::size_t widx = ((dx * l.k + dy) * l.ci + i) * l.co + j;
                                    gin.at(u, v, xi, yi, i) += l.weights[widx] * g;
                                    gw[widx] += in.at(u, v, xi, yi, i) * g;
                                }
                            }
                    }
}

inline void backward_depthwise(const layer_spec& l, const tensor& in, const tensor& gout, tensor& gin,
                               std::vector<double>& gw, std::vector<double>& gb) {
    const shape& is = in.dims();
    const shape& os = gout.dims();
    const std::size_t pb = pad_before(l.k);
    for (std::size_t u = 0; u < os.u; ++u)
        for (std::size_t v = 0; v < os.v; ++v)
            for (std::size_t ox = 0; ox < os.x; ++ox)
                for (std::size_t oy = 0; oy < os.y; ++oy)
                    for (std::size_t c = 0; c < l.ci; ++c) {
                        const double g = gout.at(u, v, ox, oy, c);
                        if (!l.bias.empty()) gb[c] += g;
                        for (std::size_t dx = 0; dx < l.k; ++dx)
                            for (std::size_t dy = 0; dy < l.k; ++dy) {
                                const std::ptrdiff_t xi = static_cast<std::ptrdiff_t>(ox * l.stride + dx) -
                                                          static_cast<std::ptrdiff_t>(pb);
                                const std::ptrdiff_t yi = static_cast<std::ptrdiff_t>(oy * l.stride + dy) -
                                                          static_cast<std::ptrdiff_t>(pb);
                                if (xi < 0 || yi < 0 || static_cast<std::size_t>(xi) >= is.x ||
                                    static_cast<std::size_t>(yi) >= is.y)
                                    continue;
                                const std::size_t widx = (dx * l.k + dy) * l.ci + c;
                                gin.at(u, v, xi, yi, c) += l.weights[widx] * g;
                                gw[widx] += in.at(u, v, xi, yi, c) * g;
                            }
                    }
}

inline void backward_pointwise(const layer_spec& l, const tensor& in, const tensor& gout, tensor& gin,
                               std::vector<double>& gw, std::vector<double>& gb) {
    const std::size_t positions = in.size() / l.ci;
    const double* src = in.data().data();
    const double* go = gout.data().data();
    double* gi = gin.data().data();
    for (std::size_t p = 0; p < positions; ++p) {
        const double* px = src + p * l.ci;
        const double* pg = go + p * l.co;
        double* pi = gi + p * l.ci;
        for (std::size_t j = 0; j < l.co; ++j) {
            const double g = pg[j];
            if (!l.bias.empty()) gb[j] += g;
            for (std::size_t i = 0; i < l.ci; ++i) {
                pi[i] += l.weights[i * l.co + j] * g;
                gw[i * l.co + j] += px[i] * g;
            }
        }
    }
}

inline void backward_anglewise(const layer_spec& l, bool along_u, const tensor& in, const tensor& gout,
                               tensor& gin, std::vector<double>& gw, std::vector<double>& gb) {
    const shape& is = in.dims();
    const shape& os = gout.dims();
    const std::size_t pa = pad_before(l.a);
    const std::size_t pk = pad_before(l.k);
    for (std::size_t u = 0; u < os.u; ++u)
        for (std::size_t v = 0; v < os.v; ++v)
            for (std::size_t x = 0; x < os.x; ++x)
                for (std::size_t y = 0; y < os.y; ++y)
                    for (std::size_t j = 0; j < l.co; ++j) {
                        const double g = gout.at(u, v, x, y, j);
                        if (!l.bias.empty()) gb[j] += g;
                        for (std::size_t da = 0; da < l.a; ++da) {
                            const std::ptrdiff_t ang = static_cast<std::ptrdiff_t>((along_u ? u : v) + da) -
                                                       static_cast<std::ptrdiff_t>(pa);
                            const std::ptrdiff_t ui = along_u ? ang : static_cast<std::ptrdiff_t>(u);
                            const std::ptrdiff_t vi = along_u ? static_cast<std::ptrdiff_t>(v) : ang;
                            if (ui < 0 || vi < 0 || static_cast<std::size_t>(ui) >= is.u ||
                                static_cast<std::size_t>(vi) >= is.v)
                                continue;
                            for (std::size_t dx = 0; dx < l.k; ++dx)
                                for (std::size_t dy = 0; dy < l.k; ++dy) {
                                    const std::ptrdiff_t xi = static_cast<std::ptrdiff_t>(x + dx) -
                                                              static_cast<std::ptrdiff_t>(pk);
                                    const std::ptrdiff_t yi = static_cast<std::ptrdiff_t>(y + dy) -
                                                              static_cast<std::ptrdiff_t>(pk);
                                    if (xi < 0 || yi < 0 || static_cast<std::size_t>(xi) >= is.x ||
                                        static_cast<std::size_t>(yi) >= is.y)
                                        continue;
                                    for (std::size_t i = 0; i < l.ci; ++i) {
                                        const std::size_t widx =
                                            (((da * l.k + dx) * l.k + dy) * l.ci + i) * l.co + j;
                                        gin.at(static_cast<std::size_t>(ui), static_cast<std::size_t>(vi),
                                               static_cast<std::size_t>(xi), static_cast<std::size_t>(yi), i) +=
                                            l.weights[widx] * g;
                                        gw[widx] += in.at(static_cast<std::size_t>(ui),
                                                          static_cast<std::size_t>(vi),
                                                          static_cast<std::size_t>(xi),
                                                          static_cast<std::size_t>(yi), i) *
                                                    g;
                                    }
                                }
                        }
                    }
}

inline void backward_full4d(const layer_spec& l, const tensor& in, const tensor& gout, tensor& gin,
                            std::vector<double>& gw, std::vector<double>& gb) {
    const shape& is = in.dims();
    const shape& os = gout.dims();
    const std::size_t pa = pad_before(l.a);
    const std::size_t pk = pad_before(l.k);
    for (std::size_t u = 0; u < os.u; ++u)
        for (std::size_t v = 0; v < os.v; ++v)
            for (std::size_t x = 0; x < os.x; ++x)
                for (std::size_t y = 0; y < os.y; ++y)
                    for (std::size_t j = 0; j < l.co; ++j) {
                        const double g = gout.at(u, v, x, y, j);
                        if (!l.bias.empty()) gb[j] += g;
                        for (std::size_t du = 0; du < l.a; ++du)
                            for (std::size_t dv = 0; dv < l.a; ++dv) {
                                const std::ptrdiff_t ui = static_cast<std::ptrdiff_t>(u + du) -
                                                          static_cast<std::ptrdiff_t>(pa);
                                const std::ptrdiff_t vi = static_cast<std::ptrdiff_t>(v + dv) -
                                                          static_cast<std::ptrdiff_t>(pa);
                                if (ui < 0 || vi < 0 || static_cast<std::size_t>(ui) >= is.u ||
                                    static_cast<std::size_t>(vi) >= is.v)
                                    continue;
                                for (std::size_t dx = 0; dx < l.k; ++dx)
                                    for (std::size_t dy = 0; dy < l.k; ++dy) {
                                        const std::ptrdiff_t xi = static_cast<std::ptrdiff_t>(x + dx) -
                                                                  static_cast<std::ptrdiff_t>(pk);
                                        const std::ptrdiff_t yi = static_cast<std::ptrdiff_t>(y + dy) -
                                                                  static_cast<std::ptrdiff_t>(pk);
                                        if (xi < 0 || yi < 0 || static_cast<std::size_t>(xi) >= is.x ||
                                            static_cast<std::size_t>(yi) >= is.y)
                                            continue;
                                        for (std::size_t i = 0; i < l.ci; ++i) {
                                            const std::size_t widx =
                                                ((((du * l.a + dv) * l.k + dx) * l.k + dy) * l.ci + i) * l.co +
                                                j;
                                            gin.at(static_cast<std::size_t>(ui), static_cast<std::size_t>(vi),
                                                   static_cast<std::size_t>(xi), static_cast<std::size_t>(yi),
                                                   i) += l.weights[widx] * g;
                                            gw[widx] += in.at(static_cast<std::size_t>(ui),
                                                              static_cast<std::size_t>(vi),
                                                              static_cast<std::size_t>(xi),
                                                              static_cast<std::size_t>(yi), i) *
                                                        g;
                                        }
                                    }
                            }
                    }
}

inline void backward_dense(const layer_spec& l, const tensor& in, const tensor& gout, tensor& gin,
                           std::vector<double>& gw, std::vector<double>& gb) {
    for (std::size_t j = 0; j < l.co; ++j) {
        const double g = gout.data()[j];
        if (!l.bias.empty()) gb[j] += g;
        for (std::size_t i = 0; i < l.ci; ++i) {
            gin.data()[i] += l.weights[i * l.co + j] * g;
            gw[i * l.co + j] += in.data()[i] * g;
        }
    }
}

}  // namespace detail

// Reverse pass. `seeds` pairs a step index with dL/d(step output); every
// parameter and the program input receive accumulated gradients. Backward is
// single-threaded so the result is one fixed summation order.
inline gradients backward(const std::vector<step>& steps, const tape& t,
                          const std::vector<std::pair<int, tensor>>& seeds) {
    gradients g;
    g.weight.resize(steps.size());
    g.bias.resize(steps.size());
    for (std::size_t i = 0; i < steps.size(); ++i) {
        g.weight[i].assign(steps[i].layer.weights.size(), 0.0);
        g.bias[i].assign(steps[i].layer.bias.size(), 0.0);
    }
    g.input = tensor::zeros(t.input.dims());

    std::vector<tensor> grad(steps.size());
    auto grad_slot = [&](int ref) -> tensor& {
        if (ref < 0) return g.input;
        if (grad[ref].size() == 0) grad[ref] = tensor::zeros(t.values[ref].dims());
        return grad[ref];
    };
    for (const auto& [idx, seed] : seeds) {
        require(idx >= 0 && idx < static_cast<int>(steps.size()), errc::bad_argument, "seed step out of range");
        require(seed.dims() == t.values[idx].dims(), errc::seed_shape_mismatch,
                "seed shape " + seed.dims().str() + " != output shape " + t.values[idx].dims().str());
        tensor& slot = grad_slot(idx);
        for (std::size_t i = 0; i < seed.size(); ++i) slot.data()[i] += seed.data()[i];
    }

    for (int si = static_cast<int>(steps.size()) - 1; si >= 0; --si) {
        if (grad[si].size() == 0) continue;  // not on any seeded path
        const step& st = steps[si];
        const tensor& gout = grad[si];
        const tensor& in0 = tape_value(t, st.input0);
        switch (st.layer.kind) {
            case layer_kind::subview2d:
                detail::backward_subview2d(st.layer, in0, gout, grad_slot(st.input0), g.weight[si], g.bias[si]);
                break;
            case layer_kind::depthwise:
                detail::backward_depthwise(st.layer, in0, gout, grad_slot(st.input0), g.weight[si], g.bias[si]);
                break;
            case layer_kind::pointwise:
                detail::backward_pointwise(st.layer, in0, gout, grad_slot(st.input0), g.weight[si], g.bias[si]);
                break;
            case layer_kind::anglewise_h:
                detail::backward_anglewise(st.layer, false, in0, gout, grad_slot(st.input0), g.weight[si],
                                           g.bias[si]);
                break;
            case layer_kind::anglewise_v:
                detail::backward_anglewise(st.layer, true, in0, gout, grad_slot(st.input0), g.weight[si],
                                           g.bias[si]);
                break;
            case layer_kind::full4d:
                detail::backward_full4d(st.layer, in0, gout, grad_slot(st.input0), g.weight[si], g.bias[si]);
                break;
            case layer_kind::max_pool_spatial: {
                tensor& gin = grad_slot(st.input0);
                const auto& amax = t.argmax[si];
                for (std::size_t i = 0; i < gout.size(); ++i) gin.data()[amax[i]] += gout.data()[i];
                break;
            }
            case layer_kind::relu: {
                tensor& gin = grad_slot(st.input0);
                const tensor& out = t.values[si];
                for (std::size_t i = 0; i < gout.size(); ++i)
                    if (out.data()[i] > 0.0) gin.data()[i] += gout.data()[i];
                break;
            }
            case layer_kind::residual_add: {
                tensor& gin0 = grad_slot(st.input0);
                for (std::size_t i = 0; i < gout.size(); ++i) gin0.data()[i] += gout.data()[i];
                tensor& gin1 = grad_slot(st.input1);
                for (std::size_t i = 0; i < gout.size(); ++i) gin1.data()[i] += gout.data()[i];
                break;
            }
            case layer_kind::global_avg_pool: {
                tensor& gin = grad_slot(st.input0);
                const shape& is = in0.dims();
                const double inv = 1.0 / static_cast<double>(is.u * is.v * is.x * is.y);
                for (std::size_t i = 0; i < gin.size(); ++i) gin.data()[i] += gout.data()[i % is.c] * inv;
                break;
            }
            case layer_kind::flatten: {
                tensor& gin = grad_slot(st.input0);
                for (std::size_t i = 0; i < gout.size(); ++i) gin.data()[i] += gout.data()[i];
                break;
            }
            case layer_kind::dense:
                detail::backward_dense(st.layer, in0, gout, grad_slot(st.input0), g.weight[si], g.bias[si]);
                break;
            case layer_kind::dropout: {
                tensor& gin = grad_slot(st.input0);
                if (t.training && st.layer.rate > 0.0) {
                    const double scale = 1.0 / (1.0 - st.layer.rate);
                    const auto& m = t.mask[si];
                    for (std::size_t i = 0; i < gout.size(); ++i)
                        if (m[i] != 0) gin.data()[i] += gout.data()[i] * scale;
                } else {
                    for (std::size_t i = 0; i < gout.size(); ++i) gin.data()[i] += gout.data()[i];
                }
                break;
            }
        }
    }
    return g;
}

// Max relative error between analytic gradients and central finite
// differences of the scalar probe L = sum_i r_i * out_i, taken over every
// weight, bias and input entry. 64-bit arithmetic throughout.
inline double grad_check(const layer_spec& l, const tensor& input, double eps = 1e-5,
                         std::uint64_t seed = 17) {
    std::vector<step> steps{step{l, -1, -1}};
    if (l.kind == layer_kind::residual_add) steps[0].input1 = -1;
    const tape t = forward_record(steps, input);
    const tensor& out = t.values[0];

    rng gen(seed);
    tensor seed_grad = tensor::zeros(out.dims());
    for (double& value : seed_grad.data()) value = gen.uniform(-1.0, 1.0);
    const gradients g = backward(steps, t, {{0, seed_grad}});

    auto probe = [&](const std::vector<step>& s) {
        const tape ft = forward_record(s, input);
        double loss = 0.0;
        for (std::size_t i = 0; i < ft.values[0].size(); ++i)
            loss += seed_grad.data()[i] * ft.values[0].data()[i];
        return loss;
    };
    auto rel_err = [](double analytic, double numeric) {
        const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
        return std::fabs(analytic - numeric) / denom;
    };

    double worst = 0.0;
    std::vector<step> mutated = steps;
    for (std::size_t wi = 0; wi < l.weights.size(); ++wi) {
        const double saved = mutated[0].layer.weights[wi];
        mutated[0].layer.weights[wi] = saved + eps;
        const double up = probe(mutated);
        mutated[0].layer.weights[wi] = saved - eps;
        const double down = probe(mutated);
        mutated[0].layer.weights[wi] = saved;
        worst = std::max(worst, rel_err(g.weight[0][wi], (up - down) / (2.0 * eps)));
    }
    for (std::size_t bi = 0; bi < l.bias.size(); ++bi) {
        const double saved = mutated[0].layer.bias[bi];
        mutated[0].layer.bias[bi] = saved + eps;
        const double up = probe(mutated);
        mutated[0].layer.bias[bi] = saved - eps;
        const double down = probe(mutated);
        mutated[0].layer.bias[bi] = saved;
        worst = std::max(worst, rel_err(g.bias[0][bi], (up - down) / (2.0 * eps)));
    }
    tensor nudged = input;
    for (std::size_t ii = 0; ii < nudged.size(); ++ii) {
        const double saved = nudged.data()[ii];
        auto probe_input = [&](double value) {
            nudged.data()[ii] = value;
            const tape ft = forward_record(steps, nudged);
            double loss = 0.0;
            for (std::size_t i = 0; i < ft.values[0].size(); ++i)
                loss += seed_grad.data()[i] * ft.values[0].data()[i];
            return loss;
        };
        const double up = probe_input(saved + eps);
        const double down = probe_input(saved - eps);
        nudged.data()[ii] = saved;
        worst = std::max(worst, rel_err(g.input.data()[ii], (up - down) / (2.0 * eps)));
    }
    return worst;
}

}  // namespace lf
