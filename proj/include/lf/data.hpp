#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lf/error.hpp"
#include "lf/features.hpp"
#include "lf/format.hpp"
#include "lf/rng.hpp"
#include "lf/tensor.hpp"

namespace lf::data {

// Ground truth for one LFI: the subjective-style score plus the auxiliary
// feature targets.
struct quality_label {
    double score = 0.0;
    std::vector<double> spatial;  // 36-dim
    std::vector<double> angular;  // 8-dim
};

struct dataset_entry {
    std::string source_id;
    tensor lfi;
    quality_label label;
};

// ---------------------------------------------------------------------------
// Subview images: binary PGM (P5) / PPM (P6), 8-bit, values kept on the
// 0-255 scale as reals.
// ---------------------------------------------------------------------------

struct raster {
    std::size_t rows = 0, cols = 0, channels = 0;
    std::vector<double> v;  // row-major, channel innermost
};

namespace detail {

inline std::string next_token(std::istream& is) {
    std::string tok;
    while (true) {
        int ch = is.peek();
        if (ch == '#') {
            std::string line;
            std::getline(is, line);
            continue;
        }
        if (std::isspace(ch)) {
            is.get();
            continue;
        }
        break;
    }
    is >> tok;
    return tok;
}

}  // namespace detail

inline raster read_pnm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(is.good(), errc::missing_subview, "cannot open subview image: " + path);
    const std::string magic = detail::next_token(is);
    require(magic == "P5" || magic == "P6", errc::bad_manifest, "unsupported image format in " + path);
    const std::size_t channels = magic == "P6" ? 3 : 1;
    std::size_t cols = 0, rows = 0, maxval = 0;
    try {
        cols = std::stoul(detail::next_token(is));
        rows = std::stoul(detail::next_token(is));
        maxval = std::stoul(detail::next_token(is));
    } catch (const std::exception&) {
        fail(errc::bad_manifest, "malformed PNM header in " + path);
    }
    require(maxval == 255, errc::bad_manifest, "only 8-bit PNM images are supported: " + path);
    is.get();  // single whitespace after maxval
    raster img;
    img.rows = rows;
    img.cols = cols;
    img.channels = channels;
    std::vector<unsigned char> bytes(rows * cols * channels);
    is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    require(is.gcount() == static_cast<std::streamsize>(bytes.size()), errc::bad_manifest,
            "truncated PNM payload in " + path);
    img.v.assign(bytes.begin(), bytes.end());
    return img;
}

inline void write_pnm(const std::string& path, const raster& img) {
    require(img.channels == 1 || img.channels == 3, errc::bad_argument, "PNM supports 1 or 3 channels");
    std::ofstream os(path, std::ios::binary);
    require(os.good(), errc::io_error, "cannot open for writing: " + path);
    os << (img.channels == 3 ? "P6" : "P5") << "\n" << img.cols << " " << img.rows << "\n255\n";
    std::vector<unsigned char> bytes;
    bytes.reserve(img.v.size());
    for (double value : img.v)
        bytes.push_back(static_cast<unsigned char>(std::clamp(std::lround(value), 0l, 255l)));
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    require(os.good(), errc::io_error, "short write: " + path);
}

// ---------------------------------------------------------------------------
// LFI manifest: a JSON file naming the subview images in row-major u-major
// order. Example:
//   { "angular": [7, 7], "spatial": [434, 434], "channels": 3,
//     "subviews": ["v00.ppm", "v01.ppm", ...] }
// Paths are resolved relative to the manifest location.
// ---------------------------------------------------------------------------

inline tensor load_lfi(const std::string& manifest_path) {
    std::ifstream is(manifest_path);
    require(is.good(), errc::bad_manifest, "cannot open manifest: " + manifest_path);
    nlohmann::json doc;
    try {
        is >> doc;
    } catch (const std::exception& e) {
        fail(errc::bad_manifest, std::string("manifest parse error: ") + e.what());
    }
    require(doc.contains("angular") && doc.contains("spatial") && doc.contains("channels") &&
                doc.contains("subviews"),
            errc::bad_manifest, "manifest needs angular, spatial, channels, subviews");
    shape s;
    try {
        s.u = doc["angular"][0].get<std::size_t>();
        s.v = doc["angular"][1].get<std::size_t>();
        s.x = doc["spatial"][0].get<std::size_t>();
        s.y = doc["spatial"][1].get<std::size_t>();
        s.c = doc["channels"].get<std::size_t>();
    } catch (const std::exception& e) {
        fail(errc::bad_manifest, std::string("manifest field error: ") + e.what());
    }
    s.validate();
    const auto& views = doc["subviews"];
    require(views.is_array() && views.size() == s.u * s.v, errc::bad_manifest,
            "manifest must list exactly u*v = " + std::to_string(s.u * s.v) + " subviews");

    const std::filesystem::path base = std::filesystem::path(manifest_path).parent_path();
    tensor out = tensor::zeros(s);
    for (std::size_t u = 0; u < s.u; ++u)
        for (std::size_t v = 0; v < s.v; ++v) {
            const std::string rel = views[u * s.v + v].get<std::string>();
            const raster img = read_pnm((base / rel).string());
            require(img.rows == s.x && img.cols == s.y, errc::inconsistent_subview_size,
                    "subview " + rel + " is " + std::to_string(img.rows) + "x" + std::to_string(img.cols) +
                        ", expected " + std::to_string(s.x) + "x" + std::to_string(s.y));
            require(img.channels == s.c, errc::inconsistent_subview_size,
                    "subview " + rel + " has " + std::to_string(img.channels) + " channels, expected " +
                        std::to_string(s.c));
            for (std::size_t x = 0; x < s.x; ++x)
                for (std::size_t y = 0; y < s.y; ++y)
                    for (std::size_t c = 0; c < s.c; ++c)
                        out.at(u, v, x, y, c) = img.v[(x * s.y + y) * s.c + c];
        }
    return out;
}

// Center crop in both the angular and the spatial domain.
inline tensor trim_reshape(const tensor& t, const shape& target) {
    const shape& s = t.dims();
    target.validate();
    require(target.c == s.c, errc::channel_mismatch, "trim cannot change the channel count");
    require(target.u <= s.u && target.v <= s.v && target.x <= s.x && target.y <= s.y,
            errc::target_too_large, "target " + target.str() + " exceeds source " + s.str());
    const std::size_t ou = (s.u - target.u) / 2, ov = (s.v - target.v) / 2;
    const std::size_t ox = (s.x - target.x) / 2, oy = (s.y - target.y) / 2;
    tensor out = tensor::zeros(target);
    for (std::size_t u = 0; u < target.u; ++u)
        for (std::size_t v = 0; v < target.v; ++v)
            for (std::size_t x = 0; x < target.x; ++x)
                for (std::size_t y = 0; y < target.y; ++y)
                    for (std::size_t c = 0; c < target.c; ++c)
                        out.at(u, v, x, y, c) = t.at(u + ou, v + ov, x + ox, y + oy, c);
    return out;
}

// ---------------------------------------------------------------------------
// Geometric augmentation. Every transform acts on the spatial grid and the
// angular grid jointly, so subview positions rotate and flip with the image
// content and EPI slopes stay geometrically valid.
// ---------------------------------------------------------------------------

// Quarter-turn counterclockwise; output shape (v,u,y,x,c).
inline tensor rot90(const tensor& t) {
    const shape& s = t.dims();
    tensor out = tensor::zeros({s.v, s.u, s.y, s.x, s.c});
    for (std::size_t u = 0; u < s.u; ++u)
        for (std::size_t v = 0; v < s.v; ++v)
            for (std::size_t x = 0; x < s.x; ++x)
                for (std::size_t y = 0; y < s.y; ++y)
                    for (std::size_t c = 0; c < s.c; ++c)
                        out.at(s.v - 1 - v, u, s.y - 1 - y, x, c) = t.at(u, v, x, y, c);
    return out;
}

// Vertical flip: angular rows and spatial rows reverse together.
inline tensor vflip(const tensor& t) {
    const shape& s = t.dims();
    tensor out = tensor::zeros(s);
    for (std::size_t u = 0; u < s.u; ++u)
        for (std::size_t v = 0; v < s.v; ++v)
            for (std::size_t x = 0; x < s.x; ++x)
                for (std::size_t y = 0; y < s.y; ++y)
                    for (std::size_t c = 0; c < s.c; ++c)
                        out.at(s.u - 1 - u, v, s.x - 1 - x, y, c) = t.at(u, v, x, y, c);
    return out;
}

// The eightfold augmentation: {0, 90, 180, 270 degrees} x {plain, vertical
// flip}; the first variant is the input itself.
inline std::vector<tensor> augment(const tensor& t) {
    std::vector<tensor> out;
    out.reserve(8);
    tensor rotated = t;
    for (int r = 0; r < 4; ++r) {
        if (r > 0) rotated = rot90(rotated);
        out.push_back(rotated);
    }
    for (int r = 0; r < 4; ++r) out.push_back(vflip(out[r]));
    return out;
}

// Expands every entry into its 8 geometric variants. The source id and the
// score carry over unchanged (an augmented copy shares its source's opinion
// score); the auxiliary feature labels are recomputed on the transformed
// tensor, since both extractors are functions of the tensor itself.
inline std::vector<dataset_entry> augment_entries(const std::vector<dataset_entry>& entries) {
    std::vector<dataset_entry> out;
    out.reserve(entries.size() * 8);
    for (const auto& e : entries) {
        auto variants = augment(e.lfi);
        for (std::size_t i = 0; i < variants.size(); ++i) {
            dataset_entry a;
            a.source_id = e.source_id;
            a.label.score = e.label.score;
            if (i == 0 && !e.label.spatial.empty() && !e.label.angular.empty()) {
                a.label.spatial = e.label.spatial;
                a.label.angular = e.label.angular;
            } else {
                a.label.spatial = features::spatial_features(variants[i]);
                a.label.angular = features::angular_features(variants[i]);
            }
            a.lfi = std::move(variants[i]);
            out.push_back(std::move(a));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Dataset split with a leakage guard: all augments of one source LFI share a
// source_id and always land in the same segment.
// ---------------------------------------------------------------------------

inline std::pair<std::vector<dataset_entry>, std::vector<dataset_entry>> split(
    std::vector<dataset_entry> entries, double ratio, std::uint64_t seed) {
    require(!entries.empty(), errc::empty_dataset, "cannot split an empty dataset");
    require(ratio > 0.0 && ratio < 1.0, errc::bad_argument, "split ratio must lie strictly in (0,1)");
    std::vector<std::string> groups;
    for (const auto& e : entries)
        if (std::find(groups.begin(), groups.end(), e.source_id) == groups.end())
            groups.push_back(e.source_id);
    rng gen(seed);
    gen.shuffle(groups);
    const std::size_t n_train = static_cast<std::size_t>(ratio * static_cast<double>(groups.size()));
    std::map<std::string, bool> in_train;
    for (std::size_t i = 0; i < groups.size(); ++i) in_train[groups[i]] = i < n_train;
    std::pair<std::vector<dataset_entry>, std::vector<dataset_entry>> out;
    for (auto& e : entries)
        (in_train[e.source_id] ? out.first : out.second).push_back(std::move(e));
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic labeled LFIs for desk-scale experiments: procedural scenes
// (gradient plus sinusoid textures with per-subview disparity shift),
// degraded by a seeded Gaussian blur of strength b in [0,3]. The score label
// maps b linearly onto the MOS-like 1..5 scale; the auxiliary labels come
// from the feature extractors on the degraded tensor.
// ---------------------------------------------------------------------------

inline double score_for_blur(double b) { return 5.0 - b * (4.0 / 3.0); }

namespace detail {

inline std::size_t mirror(std::ptrdiff_t idx, std::size_t n) {
    if (idx < 0) idx = -idx - 1;
    if (static_cast<std::size_t>(idx) >= n) idx = 2 * static_cast<std::ptrdiff_t>(n) - 1 - idx;
    return static_cast<std::size_t>(idx);
}

inline std::vector<double> gaussian_kernel(double sigma) {
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> w(2 * radius + 1);
    double total = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        w[i + radius] = std::exp(-0.5 * (i / sigma) * (i / sigma));
        total += w[i + radius];
    }
    for (double& value : w) value /= total;
    return w;
}

}  // namespace detail

// Separable spatial Gaussian blur per subview and channel (mirror borders);
// sigma = 0 is the identity.
inline tensor gaussian_blur(const tensor& t, double sigma) {
    if (sigma <= 0.0) return t;
    const shape& s = t.dims();
    const std::vector<double> w = detail::gaussian_kernel(sigma);
    const int radius = static_cast<int>(w.size() / 2);
    tensor tmp = tensor::zeros(s), out = tensor::zeros(s);
    for (std::size_t u = 0; u < s.u; ++u)
        for (std::size_t v = 0; v < s.v; ++v)
            for (std::size_t x = 0; x < s.x; ++x)
                for (std::size_t y = 0; y < s.y; ++y)
                    for (std::size_t c = 0; c < s.c; ++c) {
                        double acc = 0.0;
                        for (int d = -radius; d <= radius; ++d)
                            acc += w[d + radius] *
                                   t.at(u, v, x, detail::mirror(static_cast<std::ptrdiff_t>(y) + d, s.y), c);
                        tmp.at(u, v, x, y, c) = acc;
                    }
    for (std::size_t u = 0; u < s.u; ++u)
        for (std::size_t v = 0; v < s.v; ++v)
            for (std::size_t x = 0; x < s.x; ++x)
                for (std::size_t y = 0; y < s.y; ++y)
                    for (std::size_t c = 0; c < s.c; ++c) {
                        double acc = 0.0;
                        for (int d = -radius; d <= radius; ++d)
                            acc += w[d + radius] *
                                   tmp.at(u, v, detail::mirror(static_cast<std::ptrdiff_t>(x) + d, s.x), y, c);
                        out.at(u, v, x, y, c) = acc;
                    }
    return out;
}

// One clean procedural scene on the 0-255 scale.
inline tensor synth_scene(const shape& s, rng& gen) {
    struct wave {
        double fx, fy, phase, amp;
    };
    std::vector<wave> waves;
    // fixed per-band periods and amplitudes keep the scene-to-scene energy
    // profile stable, so the blur strength dominates the texture statistics
    const double periods[3] = {4.0, 7.0, 12.0};
    for (int i = 0; i < 3; ++i) {
        const double angle = gen.uniform(0.0, 2.0 * 3.14159265358979323846);
        waves.push_back({std::cos(angle) / periods[i], std::sin(angle) / periods[i],
                         gen.uniform(0.0, 2.0 * 3.14159265358979323846), 25.0});
    }
    const double gx = gen.uniform(-15.0, 15.0), gy = gen.uniform(-15.0, 15.0);
    const double disparity = gen.uniform(-1.5, 1.5);
    double phase_off[3] = {0.0, gen.uniform(0.0, 1.0), gen.uniform(0.0, 1.0)};

    tensor out = tensor::zeros(s);
    const double uc = (static_cast<double>(s.u) - 1.0) / 2.0;
    const double vc = (static_cast<double>(s.v) - 1.0) / 2.0;
    for (std::size_t u = 0; u < s.u; ++u)
        for (std::size_t v = 0; v < s.v; ++v) {
            const double sx = (static_cast<double>(u) - uc) * disparity;
            const double sy = (static_cast<double>(v) - vc) * disparity;
            for (std::size_t x = 0; x < s.x; ++x)
                for (std::size_t y = 0; y < s.y; ++y) {
                    const double px = static_cast<double>(x) + sx;
                    const double py = static_cast<double>(y) + sy;
                    const double base = 128.0 + gx * (px / static_cast<double>(s.x) - 0.5) +
                                        gy * (py / static_cast<double>(s.y) - 0.5);
                    for (std::size_t c = 0; c < s.c; ++c) {
                        double value = base;
                        for (const wave& w : waves)
                            value += w.amp * std::sin(2.0 * 3.14159265358979323846 * (w.fx * px + w.fy * py) +
                                                      w.phase + phase_off[c % 3]);
                        out.at(u, v, x, y, c) = std::clamp(value, 0.0, 255.0);
                    }
                }
        }
    return out;
}

inline std::vector<dataset_entry> synth_dataset(std::size_t n, const shape& s, std::uint64_t seed) {
    require(n >= 4, errc::bad_argument, "synthetic dataset needs at least 4 entries");
    std::vector<dataset_entry> entries;
    entries.reserve(n);
    rng gen(seed);
    for (std::size_t i = 0; i < n; ++i) {
        rng scene_gen = gen.fork(i + 1);
        const double b = scene_gen.uniform(0.0, 3.0);
        tensor degraded = gaussian_blur(synth_scene(s, scene_gen), b);
        dataset_entry e;
        e.source_id = "synth-" + std::to_string(i);
        e.label.score = score_for_blur(b);
        e.label.spatial = features::spatial_features(degraded);
        e.label.angular = features::angular_features(degraded);
        e.lfi = std::move(degraded);
        entries.push_back(std::move(e));
    }
    return entries;
}

// ---------------------------------------------------------------------------
// Labels CSV: source_id,path,score (UTF-8, LF line endings).
// ---------------------------------------------------------------------------

struct label_row {
    std::string source_id;
    std::string path;
    double score = 0.0;
};

inline void write_labels_csv(const std::string& path, const std::vector<label_row>& rows) {
    std::ofstream os(path, std::ios::binary);
    require(os.good(), errc::io_error, "cannot open for writing: " + path);
    os << "source_id,path,score\n";
    for (const auto& row : rows)
        os << row.source_id << ',' << row.path << ',' << format_double(row.score) << '\n';
    require(os.good(), errc::io_error, "short write: " + path);
}

inline std::vector<label_row> read_labels_csv(const std::string& path) {
    std::ifstream is(path);
    require(is.good(), errc::io_error, "cannot open: " + path);
    std::vector<label_row> rows;
    std::string line;
    std::getline(is, line);  // header
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        label_row row;
        std::string score_text;
        require(std::getline(ls, row.source_id, ',') && std::getline(ls, row.path, ',') &&
                    std::getline(ls, score_text),
                errc::io_error, "malformed labels row: " + line);
        row.score = std::stod(score_text);
        rows.push_back(std::move(row));
    }
    return rows;
}

// Loads a labels CSV plus its LFT tensors (paths relative to the CSV) and
// recomputes the auxiliary feature labels deterministically.
inline std::vector<dataset_entry> load_dataset(const std::string& labels_csv) {
    const std::filesystem::path base = std::filesystem::path(labels_csv).parent_path();
    std::vector<dataset_entry> entries;
    for (const auto& row : read_labels_csv(labels_csv)) {
        dataset_entry e;
        e.source_id = row.source_id;
        e.lfi = read_lft((base / row.path).string());
        e.label.score = row.score;
        e.label.spatial = features::spatial_features(e.lfi);
        e.label.angular = features::angular_features(e.lfi);
        entries.push_back(std::move(e));
    }
    return entries;
}

}  // namespace lf::data
