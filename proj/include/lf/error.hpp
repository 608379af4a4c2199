#pragma once

#include <stdexcept>
#include <string>

namespace lf {

// Every failure mode in the library maps to one of these codes so callers
// (and tests) can match on the condition instead of parsing messages.
enum class errc {
    length_mismatch,
    non_finite_value,
    channel_mismatch,
    bad_stride,
    spatial_too_small,
    angular_too_small,
    image_too_small,
    shape_mismatch,
    shape_chain_broken,
    seed_shape_mismatch,
    dimension_mismatch,
    too_few_rows,
    missing_subview,
    inconsistent_subview_size,
    bad_manifest,
    target_too_large,
    empty_dataset,
    zero_variance,
    missing_angular_extent,
    bad_input_shape,
    bad_checkpoint,
    io_error,
    bad_argument,
};

inline const char* errc_name(errc c) {
    switch (c) {
        case errc::length_mismatch: return "length_mismatch";
        case errc::non_finite_value: return "non_finite_value";
        case errc::channel_mismatch: return "channel_mismatch";
        case errc::bad_stride: return "bad_stride";
        case errc::spatial_too_small: return "spatial_too_small";
        case errc::angular_too_small: return "angular_too_small";
        case errc::image_too_small: return "image_too_small";
        case errc::shape_mismatch: return "shape_mismatch";
        case errc::shape_chain_broken: return "shape_chain_broken";
        case errc::seed_shape_mismatch: return "seed_shape_mismatch";
        case errc::dimension_mismatch: return "dimension_mismatch";
        case errc::too_few_rows: return "too_few_rows";
        case errc::missing_subview: return "missing_subview";
        case errc::inconsistent_subview_size: return "inconsistent_subview_size";
        case errc::bad_manifest: return "bad_manifest";
        case errc::target_too_large: return "target_too_large";
        case errc::empty_dataset: return "empty_dataset";
        case errc::zero_variance: return "zero_variance";
        case errc::missing_angular_extent: return "missing_angular_extent";
        case errc::bad_input_shape: return "bad_input_shape";
        case errc::bad_checkpoint: return "bad_checkpoint";
        case errc::io_error: return "io_error";
        case errc::bad_argument: return "bad_argument";
    }
    return "unknown";
}

class error : public std::runtime_error {
public:
    error(errc code, const std::string& what)
        : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

    errc code() const noexcept { return code_; }

private:
    errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& what) { throw error(code, what); }

inline void require(bool cond, errc code, const std::string& what) {
    if (!cond) fail(code, what);
}

}  // namespace lf
