#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "lf/error.hpp"

namespace lf {

// Dense 5-D light-field geometry: (u, v) angular grid, (x, y) spatial grid,
// c color/feature channels. Storage is row-major in exactly this axis order,
// so the channel axis is contiguous.
struct shape {
    std::size_t u = 1, v = 1, x = 1, y = 1, c = 1;

    std::size_t count() const { return u * v * x * y * c; }

    bool operator==(const shape&) const = default;

    std::string str() const {
        return "(" + std::to_string(u) + "," + std::to_string(v) + "," + std::to_string(x) + "," +
               std::to_string(y) + "," + std::to_string(c) + ")";
    }

    void validate() const {
        require(u >= 1 && v >= 1 && x >= 1 && y >= 1 && c >= 1, errc::bad_input_shape,
                "every dimension must be >= 1, got " + str());
        // overflow guard on the element count
        std::size_t n = 1;
        for (std::size_t d : {u, v, x, y, c}) {
            require(d == 0 || n <= std::numeric_limits<std::size_t>::max() / d, errc::bad_input_shape,
                    "element count overflows for " + str());
            n *= d;
        }
    }
};

class tensor {
public:
    tensor() = default;

    tensor(const shape& s, std::vector<double> data) : shape_(s), data_(std::move(data)) {
        s.validate();
        require(data_.size() == s.count(), errc::length_mismatch,
                "data length " + std::to_string(data_.size()) + " != element count " +
                    std::to_string(s.count()) + " of " + s.str());
        for (double value : data_)
            require(std::isfinite(value), errc::non_finite_value, "tensor values must be finite");
    }

    static tensor zeros(const shape& s) {
        s.validate();
        tensor t;
        t.shape_ = s;
        t.data_.assign(s.count(), 0.0);
        return t;
    }

    const shape& dims() const { return shape_; }
    std::size_t size() const { return data_.size(); }

    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    std::size_t offset(std::size_t u, std::size_t v, std::size_t x, std::size_t y, std::size_t c) const {
        return (((u * shape_.v + v) * shape_.x + x) * shape_.y + y) * shape_.c + c;
    }

    double at(std::size_t u, std::size_t v, std::size_t x, std::size_t y, std::size_t c) const {
        return data_[offset(u, v, x, y, c)];
    }
    double& at(std::size_t u, std::size_t v, std::size_t x, std::size_t y, std::size_t c) {
        return data_[offset(u, v, x, y, c)];
    }

    bool same_shape(const tensor& other) const { return shape_ == other.shape_; }

private:
    shape shape_;
    std::vector<double> data_;
};

inline tensor create(const shape& s, std::vector<double> data) { return tensor(s, std::move(data)); }

// Row-major readout; inverse of create for any valid (shape, data) pair.
inline std::vector<double> flatten(const tensor& t) { return t.data(); }

// Per-channel statistics of a single LFI, taken over all (u,v,x,y) positions.
struct channel_stats {
    std::vector<double> mean;
    std::vector<double> stddev;  // population
};

inline channel_stats per_channel_stats(const tensor& t) {
    const auto& s = t.dims();
    const std::size_t n = s.u * s.v * s.x * s.y;
    channel_stats st;
    st.mean.assign(s.c, 0.0);
    st.stddev.assign(s.c, 0.0);
    const auto& d = t.data();
    for (std::size_t i = 0; i < d.size(); ++i) st.mean[i % s.c] += d[i];
    for (std::size_t c = 0; c < s.c; ++c) st.mean[c] /= static_cast<double>(n);
    for (std::size_t i = 0; i < d.size(); ++i) {
        const double delta = d[i] - st.mean[i % s.c];
        st.stddev[i % s.c] += delta * delta;
    }
    for (std::size_t c = 0; c < s.c; ++c) st.stddev[c] = std::sqrt(st.stddev[c] / static_cast<double>(n));
    return st;
}

// Input normalization: value -> (value - mu_c) / (sigma_c + 1), with mu/sigma
// the per-channel mean and population standard deviation of this one image.
// The +1 in the denominator keeps constant channels at exactly zero.
inline tensor normalize(const tensor& t) {
    const channel_stats st = per_channel_stats(t);
    tensor out = tensor::zeros(t.dims());
    const std::size_t c = t.dims().c;
    const auto& src = t.data();
    auto& dst = out.data();
    for (std::size_t i = 0; i < src.size(); ++i) {
        const std::size_t ch = i % c;
        dst[i] = (src[i] - st.mean[ch]) / (st.stddev[ch] + 1.0);
    }
    return out;
}

// ---------------------------------------------------------------------------
// "LFT1" raw tensor file: 4-byte magic, five u32 little-endian dims
// (u,v,x,y,c), then u*v*x*y*c f32 little-endian values in row-major order.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32le(std::ostream& os, std::uint32_t value) {
    unsigned char b[4] = {static_cast<unsigned char>(value & 0xff),
                          static_cast<unsigned char>((value >> 8) & 0xff),
                          static_cast<unsigned char>((value >> 16) & 0xff),
                          static_cast<unsigned char>((value >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32le(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_f32le(std::ostream& os, float value) {
    std::uint32_t bits;
    std::memcpy(&bits, &value, 4);
    put_u32le(os, bits);
}

inline float get_f32le(std::istream& is) {
    std::uint32_t bits = get_u32le(is);
    float value;
    std::memcpy(&value, &bits, 4);
    return value;
}

}  // namespace detail

inline void write_lft(std::ostream& os, const tensor& t) {
    os.write("LFT1", 4);
    const auto& s = t.dims();
    for (std::size_t d : {s.u, s.v, s.x, s.y, s.c})
        detail::put_u32le(os, static_cast<std::uint32_t>(d));
    for (double value : t.data()) detail::put_f32le(os, static_cast<float>(value));
}

inline void write_lft(const std::string& path, const tensor& t) {
    std::ofstream os(path, std::ios::binary);
    require(os.good(), errc::io_error, "cannot open for writing: " + path);
    write_lft(os, t);
    require(os.good(), errc::io_error, "short write: " + path);
}

inline tensor read_lft(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    require(is.good() && std::memcmp(magic, "LFT1", 4) == 0, errc::io_error, "bad LFT1 magic");
    shape s;
    s.u = detail::get_u32le(is);
    s.v = detail::get_u32le(is);
    s.x = detail::get_u32le(is);
    s.y = detail::get_u32le(is);
    s.c = detail::get_u32le(is);
    require(is.good(), errc::io_error, "truncated LFT1 header");
    s.validate();
    std::vector<double> data(s.count());
    for (double& value : data) value = detail::get_f32le(is);
    require(is.good(), errc::io_error, "truncated LFT1 payload");
    return tensor(s, std::move(data));
}

inline tensor read_lft(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(is.good(), errc::io_error, "cannot open: " + path);
    return read_lft(is);
}

}  // namespace lf
