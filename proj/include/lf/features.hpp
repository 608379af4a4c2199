#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "lf/error.hpp"
#include "lf/parallel.hpp"
#include "lf/tensor.hpp"

namespace lf::features {

constexpr std::size_t spatial_dim = 36;
constexpr std::size_t angular_dim = 8;

// Plain 2-D luminance raster on the 0-255 scale.
struct plane {
    std::size_t rows = 0, cols = 0;
    std::vector<double> v;

    plane() = default;
    plane(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}
    double at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
    double& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
};

namespace detail {

// Mirror (symmetric) extension: ... 1 0 | 0 1 2 ... n-1 | n-1 n-2 ...
inline std::size_t mirror(std::ptrdiff_t idx, std::size_t n) {
    if (idx < 0) idx = -idx - 1;
    if (static_cast<std::size_t>(idx) >= n) idx = 2 * static_cast<std::ptrdiff_t>(n) - 1 - idx;
    return static_cast<std::size_t>(idx);
}

inline const std::vector<double>& gaussian7() {
    static const std::vector<double> window = [] {
        const double sigma = 7.0 / 6.0;
        std::vector<double> w(7);
        double total = 0.0;
        for (int i = 0; i < 7; ++i) {
            const double d = i - 3;
            w[i] = std::exp(-d * d / (2.0 * sigma * sigma));
            total += w[i];
        }
        for (double& value : w) value /= total;
        return w;
    }();
    return window;
}

// Separable 7x7 weighted local moment with mirrored borders.
inline plane local_filter(const plane& img, const std::vector<double>& w) {
    plane tmp(img.rows, img.cols), out(img.rows, img.cols);
    for (std::size_t r = 0; r < img.rows; ++r)
        for (std::size_t c = 0; c < img.cols; ++c) {
            double acc = 0.0;
            for (int d = -3; d <= 3; ++d)
                acc += w[d + 3] * img.at(r, mirror(static_cast<std::ptrdiff_t>(c) + d, img.cols));
            tmp.at(r, c) = acc;
        }
    for (std::size_t r = 0; r < img.rows; ++r)
        for (std::size_t c = 0; c < img.cols; ++c) {
            double acc = 0.0;
            for (int d = -3; d <= 3; ++d)
                acc += w[d + 3] * tmp.at(mirror(static_cast<std::ptrdiff_t>(r) + d, img.rows), c);
            out.at(r, c) = acc;
        }
    return out;
}

}  // namespace detail

// Mean-subtracted contrast-normalized coefficients with a 7x7 Gaussian
// window (sigma = 7/6, normalized to sum 1) and C = 1 on the 0-255 scale.
inline plane mscn(const plane& img) {
    require(img.rows >= 8 && img.cols >= 8, errc::image_too_small,
            "mscn needs an image of at least 8x8, got " + std::to_string(img.rows) + "x" +
                std::to_string(img.cols));
    const auto& w = detail::gaussian7();
    const plane mu = detail::local_filter(img, w);
    plane sq(img.rows, img.cols);
    for (std::size_t i = 0; i < sq.v.size(); ++i) sq.v[i] = img.v[i] * img.v[i];
    const plane musq = detail::local_filter(sq, w);
    plane out(img.rows, img.cols);
    for (std::size_t i = 0; i < out.v.size(); ++i) {
        const double var = std::max(0.0, musq.v[i] - mu.v[i] * mu.v[i]);
        out.v[i] = (img.v[i] - mu.v[i]) / (std::sqrt(var) + 1.0);
    }
    return out;
}

// Generalized Gaussian fit of a zero-mean field by moment matching against a
// precomputed shape grid, alpha in [0.2, 10] step 0.001. Deterministic by
// construction; degenerate (all-zero) fields clamp to alpha = 2, sigma = 0.
struct ggd_params {
    double alpha = 2.0;
    double sigma_sq = 0.0;
};

struct aggd_params {
    double alpha = 2.0;
    double mean_term = 0.0;
    double sigma_l_sq = 0.0;
    double sigma_r_sq = 0.0;
};

namespace detail {

struct alpha_grid {
    std::vector<double> alpha;
    std::vector<double> ggd_ratio;   // Gamma(1/a)Gamma(3/a)/Gamma(2/a)^2
    std::vector<double> aggd_ratio;  // Gamma(2/a)^2/(Gamma(1/a)Gamma(3/a))
};

inline const alpha_grid& grid() {
    static const alpha_grid g = [] {
        alpha_grid out;
        for (double a = 0.2; a <= 10.0 + 1e-9; a += 0.001) {
            const double lg1 = std::lgamma(1.0 / a);
            const double lg2 = std::lgamma(2.0 / a);
            const double lg3 = std::lgamma(3.0 / a);
            out.alpha.push_back(a);
            out.ggd_ratio.push_back(std::exp(lg1 + lg3 - 2.0 * lg2));
            out.aggd_ratio.push_back(std::exp(2.0 * lg2 - lg1 - lg3));
        }
        return out;
    }();
    return g;
}

inline double match_alpha(const std::vector<double>& table, double target) {
    const auto& g = grid();
    std::size_t best = 0;
    double best_diff = std::abs(table[0] - target);
    for (std::size_t i = 1; i < table.size(); ++i) {
        const double diff = std::abs(table[i] - target);
        if (diff < best_diff) {
            best_diff = diff;
            best = i;
        }
    }
    return g.alpha[best];
}

}  // namespace detail

inline ggd_params fit_ggd(const std::vector<double>& x) {
    ggd_params p;
    if (x.empty()) return p;
    double abs_sum = 0.0, sq_sum = 0.0;
    for (double value : x) {
        abs_sum += std::abs(value);
        sq_sum += value * value;
    }
    const double n = static_cast<double>(x.size());
    const double mean_abs = abs_sum / n;
    const double sigma_sq = sq_sum / n;
    if (mean_abs < 1e-12) return p;  // degenerate field
    p.sigma_sq = sigma_sq;
    p.alpha = detail::match_alpha(detail::grid().ggd_ratio, sigma_sq / (mean_abs * mean_abs));
    return p;
}

inline aggd_params fit_aggd(const std::vector<double>& x) {
    aggd_params p;
    if (x.empty()) return p;
    double left_sq = 0.0, right_sq = 0.0, abs_sum = 0.0, sq_sum = 0.0;
    std::size_t left_n = 0, right_n = 0;
    for (double value : x) {
        abs_sum += std::abs(value);
        sq_sum += value * value;
        if (value < 0.0) {
            left_sq += value * value;
            ++left_n;
        } else if (value > 0.0) {
            right_sq += value * value;
            ++right_n;
        }
    }
    const double n = static_cast<double>(x.size());
    if (sq_sum / n < 1e-24) return p;  // degenerate field
    const double sigma_l = left_n > 0 ? std::sqrt(left_sq / static_cast<double>(left_n)) : 0.0;
    const double sigma_r = right_n > 0 ? std::sqrt(right_sq / static_cast<double>(right_n)) : 0.0;
    p.sigma_l_sq = sigma_l * sigma_l;
    p.sigma_r_sq = sigma_r * sigma_r;
    if (sigma_l < 1e-12 || sigma_r < 1e-12) return p;  // one-sided mass: keep clamped alpha
    const double gamma_hat = sigma_l / sigma_r;
    const double r_hat = (abs_sum / n) * (abs_sum / n) / (sq_sum / n);
    const double r_norm = r_hat * (gamma_hat * gamma_hat * gamma_hat + 1.0) * (gamma_hat + 1.0) /
                          ((gamma_hat * gamma_hat + 1.0) * (gamma_hat * gamma_hat + 1.0));
    p.alpha = detail::match_alpha(detail::grid().aggd_ratio, r_norm);
    const double lg1 = std::lgamma(1.0 / p.alpha);
    const double lg2 = std::lgamma(2.0 / p.alpha);
    const double lg3 = std::lgamma(3.0 / p.alpha);
    p.mean_term = (sigma_r - sigma_l) * std::exp(lg2 - lg1) * std::sqrt(std::exp(lg1 - lg3));
    return p;
}

namespace detail {

// Luminance of one subview: ITU BT.601 weights for 3-channel input, the raw
// channel for single-channel input, channel mean otherwise.
inline plane subview_luminance(const tensor& t, std::size_t u, std::size_t v) {
    const shape& s = t.dims();
    plane img(s.x, s.y);
    for (std::size_t x = 0; x < s.x; ++x)
        for (std::size_t y = 0; y < s.y; ++y) {
            double lum;
            if (s.c == 3)
                lum = 0.299 * t.at(u, v, x, y, 0) + 0.587 * t.at(u, v, x, y, 1) + 0.114 * t.at(u, v, x, y, 2);
            else if (s.c == 1)
                lum = t.at(u, v, x, y, 0);
            else {
                lum = 0.0;
                for (std::size_t c = 0; c < s.c; ++c) lum += t.at(u, v, x, y, c);
                lum /= static_cast<double>(s.c);
            }
            img.at(x, y) = lum;
        }
    return img;
}

inline plane half_scale(const plane& img) {
    plane out(img.rows / 2, img.cols / 2);
    for (std::size_t r = 0; r < out.rows; ++r)
        for (std::size_t c = 0; c < out.cols; ++c)
            out.at(r, c) = 0.25 * (img.at(2 * r, 2 * c) + img.at(2 * r, 2 * c + 1) +
                                   img.at(2 * r + 1, 2 * c) + img.at(2 * r + 1, 2 * c + 1));
    return out;
}

// 18 features of one scale: GGD of the MSCN field, then AGGD of the four
// neighbor products (horizontal, vertical, both diagonals).
inline void scale_features(const plane& img, std::vector<double>& out) {
    const plane m = mscn(img);
    std::vector<double> coeffs(m.v.begin(), m.v.end());
    const ggd_params ggd = fit_ggd(coeffs);
    out.push_back(ggd.alpha);
    out.push_back(ggd.sigma_sq);

    auto products = [&](std::ptrdiff_t dr, std::ptrdiff_t dc) {
        std::vector<double> prod;
        prod.reserve(m.v.size());
        for (std::size_t r = 0; r < m.rows; ++r)
            for (std::size_t c = 0; c < m.cols; ++c) {
                const std::ptrdiff_t rr = static_cast<std::ptrdiff_t>(r) + dr;
                const std::ptrdiff_t cc = static_cast<std::ptrdiff_t>(c) + dc;
                if (rr < 0 || cc < 0 || static_cast<std::size_t>(rr) >= m.rows ||
                    static_cast<std::size_t>(cc) >= m.cols)
                    continue;
                prod.push_back(m.at(r, c) * m.at(static_cast<std::size_t>(rr), static_cast<std::size_t>(cc)));
            }
        return prod;
    };
    for (auto [dr, dc] : {std::pair<int, int>{0, 1}, {1, 0}, {1, 1}, {1, -1}}) {
        const aggd_params a = fit_aggd(products(dr, dc));
        out.push_back(a.alpha);
        out.push_back(a.mean_term);
        out.push_back(a.sigma_l_sq);
        out.push_back(a.sigma_r_sq);
    }
}

}  // namespace detail

// 36-dim spatial quality features: 18 per scale (full and 2x2 mean-pooled
// half), averaged over all subviews in fixed u-major order.
inline std::vector<double> spatial_features(const tensor& t) {
    const shape& s = t.dims();
    require(s.x >= 16 && s.y >= 16, errc::image_too_small,
            "spatial features need spatial extents >= 16, got " + s.str());
    const std::size_t n_sub = s.u * s.v;
    std::vector<std::vector<double>> per_subview(n_sub);
    parallel_for(n_sub, [&](std::size_t begin, std::size_t end) {
        for (std::size_t uv = begin; uv < end; ++uv) {
            const plane img = detail::subview_luminance(t, uv / s.v, uv % s.v);
            std::vector<double> feats;
            feats.reserve(spatial_dim);
            detail::scale_features(img, feats);
            detail::scale_features(detail::half_scale(img), feats);
            per_subview[uv] = std::move(feats);
        }
    });
    std::vector<double> mean(spatial_dim, 0.0);
    for (const auto& feats : per_subview)
        for (std::size_t i = 0; i < spatial_dim; ++i) mean[i] += feats[i];
    for (double& value : mean) value /= static_cast<double>(n_sub);
    return mean;
}

namespace detail {

struct moment_acc {
    double sum = 0.0, sum2 = 0.0, sum3 = 0.0, sum4 = 0.0;
    std::size_t n = 0;

    void add(double x) {
        sum += x;
        sum2 += x * x;
        sum3 += x * x * x;
        sum4 += x * x * x * x;
        ++n;
    }

    // mean, population std, skewness, excess kurtosis; an empty or constant
    // field reports zeros.
    void finish(double out[4]) const {
        out[0] = out[1] = out[2] = out[3] = 0.0;
        if (n == 0) return;
        const double inv = 1.0 / static_cast<double>(n);
        const double m = sum * inv;
        const double m2 = std::max(0.0, sum2 * inv - m * m);
        out[0] = m;
        out[1] = std::sqrt(m2);
        if (m2 < 1e-24) return;
        const double m3 = sum3 * inv - 3.0 * m * sum2 * inv + 2.0 * m * m * m;
        const double m4 = sum4 * inv - 4.0 * m * sum3 * inv + 6.0 * m * m * sum2 * inv - 3.0 * m * m * m * m;
        out[2] = m3 / (m2 * std::sqrt(m2));
        out[3] = m4 / (m2 * m2) - 3.0;
    }
};

// Gradient directions atan2(d/drow, d/dcol) by central differences over the
// interior of one EPI; exact-zero gradients are excluded so a flat region
// contributes nothing.
inline void epi_directions(const plane& epi, moment_acc& acc) {
    if (epi.rows < 3 || epi.cols < 3) return;
    for (std::size_t r = 1; r + 1 < epi.rows; ++r)
        for (std::size_t c = 1; c + 1 < epi.cols; ++c) {
            const double gv = 0.5 * (epi.at(r + 1, c) - epi.at(r - 1, c));
            const double gh = 0.5 * (epi.at(r, c + 1) - epi.at(r, c - 1));
            if (gv == 0.0 && gh == 0.0) continue;
            acc.add(std::atan2(gv, gh));
        }
}

}  // namespace detail

// 8-dim angular quality features: {mean, std, skewness, excess kurtosis} of
// the gradient-direction distribution over all horizontal EPIs (v-y slices),
// then the same over all vertical EPIs (u-x slices). Stands in for the GDD
// family with the same dimensionality; swap behind this interface for a
// faithful reimplementation.
inline std::vector<double> angular_features(const tensor& t) {
    const shape& s = t.dims();
    require(s.u >= 2 && s.v >= 2, errc::angular_too_small,
            "angular features need an angular grid of at least 2x2, got " + s.str());
    std::vector<plane> lum(s.u * s.v);
    parallel_for(s.u * s.v, [&](std::size_t begin, std::size_t end) {
        for (std::size_t uv = begin; uv < end; ++uv)
            lum[uv] = detail::subview_luminance(t, uv / s.v, uv % s.v);
    });
    auto lum_at = [&](std::size_t u, std::size_t v, std::size_t x, std::size_t y) {
        return lum[u * s.v + v].at(x, y);
    };

    detail::moment_acc horiz, vert;
    for (std::size_t u = 0; u < s.u; ++u)
        for (std::size_t x = 0; x < s.x; ++x) {
            plane epi(s.v, s.y);
            for (std::size_t v = 0; v < s.v; ++v)
                for (std::size_t y = 0; y < s.y; ++y) epi.at(v, y) = lum_at(u, v, x, y);
            detail::epi_directions(epi, horiz);
        }
    for (std::size_t v = 0; v < s.v; ++v)
        for (std::size_t y = 0; y < s.y; ++y) {
            plane epi(s.u, s.x);
            for (std::size_t u = 0; u < s.u; ++u)
                for (std::size_t x = 0; x < s.x; ++x) epi.at(u, x) = lum_at(u, v, x, y);
            detail::epi_directions(epi, vert);
        }

    std::vector<double> out(angular_dim, 0.0);
    double stats[4];
    horiz.finish(stats);
    for (int i = 0; i < 4; ++i) out[i] = stats[i];
    vert.finish(stats);
    for (int i = 0; i < 4; ++i) out[4 + i] = stats[i];
    return out;
}

// Per-dimension z-score over rows; stats are returned so the same transform
// can be replayed at inference time. Standard deviation is population, with
// a 1e-8 floor so constant columns map to zero.
struct label_stats {
    std::vector<double> mean;
    std::vector<double> stddev;
};

inline label_stats normalize_labels(std::vector<std::vector<double>>& rows) {
    require(rows.size() >= 2, errc::too_few_rows, "label normalization needs at least 2 rows");
    const std::size_t dim = rows[0].size();
    for (const auto& row : rows)
        require(row.size() == dim, errc::dimension_mismatch, "label rows must have equal length");
    label_stats st;
    st.mean.assign(dim, 0.0);
    st.stddev.assign(dim, 0.0);
    const double n = static_cast<double>(rows.size());
    for (const auto& row : rows)
        for (std::size_t d = 0; d < dim; ++d) st.mean[d] += row[d];
    for (double& value : st.mean) value /= n;
    for (const auto& row : rows)
        for (std::size_t d = 0; d < dim; ++d) {
            const double delta = row[d] - st.mean[d];
            st.stddev[d] += delta * delta;
        }
    for (double& value : st.stddev) value = std::max(std::sqrt(value / n), 1e-8);
    for (auto& row : rows)
        for (std::size_t d = 0; d < dim; ++d) row[d] = (row[d] - st.mean[d]) / st.stddev[d];
    return st;
}

inline std::vector<double> apply_label_stats(const std::vector<double>& row, const label_stats& st) {
    require(row.size() == st.mean.size(), errc::dimension_mismatch, "label row length mismatch");
    std::vector<double> out(row.size());
    for (std::size_t d = 0; d < row.size(); ++d) out[d] = (row[d] - st.mean[d]) / st.stddev[d];
    return out;
}

}  // namespace lf::features
