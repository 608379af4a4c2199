#include <catch_amalgamated.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <vector>

#include "lf/data.hpp"
#include "lf/rng.hpp"
#include "lf/tensor.hpp"

using lf::shape;
using lf::tensor;
namespace fs = std::filesystem;

namespace {

tensor random_tensor(const shape& s, lf::rng& gen, double lo = 0.0, double hi = 255.0) {
    tensor t = tensor::zeros(s);
    for (double& value : t.data()) value = gen.uniform(lo, hi);
    return t;
}

struct temp_dir {
    fs::path path;
    temp_dir(const std::string& tag) : path(fs::temp_directory_path() / ("lfqa_test_" + tag)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~temp_dir() { fs::remove_all(path); }
};

void write_solid_ppm(const fs::path& p, std::size_t rows, std::size_t cols, unsigned char level) {
    lf::data::raster img;
    img.rows = rows;
    img.cols = cols;
    img.channels = 3;
    img.v.assign(rows * cols * 3, static_cast<double>(level));
    lf::data::write_pnm(p.string(), img);
}

std::multiset<double> channel_multiset(const tensor& t, std::size_t channel) {
    std::multiset<double> out;
    const shape& s = t.dims();
    for (std::size_t i = channel; i < t.size(); i += s.c) out.insert(t.data()[i]);
    return out;
}

}  // namespace

TEST_CASE("manifest loading assembles subviews in u-major order") {
    temp_dir dir("manifest");
    write_solid_ppm(dir.path / "a.ppm", 6, 5, 10);
    write_solid_ppm(dir.path / "b.ppm", 6, 5, 20);
    write_solid_ppm(dir.path / "c.ppm", 6, 5, 30);
    write_solid_ppm(dir.path / "d.ppm", 6, 5, 40);
    std::ofstream((dir.path / "m.json").string())
        << R"({"angular":[2,2],"spatial":[6,5],"channels":3,"subviews":["a.ppm","b.ppm","c.ppm","d.ppm"]})";

    const tensor t = lf::data::load_lfi((dir.path / "m.json").string());
    REQUIRE(t.dims() == shape{2, 2, 6, 5, 3});
    CHECK(t.at(0, 0, 0, 0, 0) == 10.0);
    CHECK(t.at(0, 1, 3, 2, 1) == 20.0);
    CHECK(t.at(1, 0, 0, 0, 2) == 30.0);
    CHECK(t.at(1, 1, 5, 4, 0) == 40.0);
}

TEST_CASE("manifest loading rejects inconsistent and missing subviews") {
    temp_dir dir("manifest_bad");
    write_solid_ppm(dir.path / "a.ppm", 16, 16, 10);
    write_solid_ppm(dir.path / "b.ppm", 15, 16, 20);  // one row short
    std::ofstream((dir.path / "m.json").string())
        << R"({"angular":[2,1],"spatial":[16,16],"channels":3,"subviews":["a.ppm","b.ppm"]})";
    CHECK_THROWS_MATCHES(lf::data::load_lfi((dir.path / "m.json").string()), lf::error,
                         Catch::Matchers::Predicate<lf::error>([](const lf::error& e) {
                             return e.code() == lf::errc::inconsistent_subview_size;
                         }));

    std::ofstream((dir.path / "m2.json").string())
        << R"({"angular":[2,1],"spatial":[16,16],"channels":3,"subviews":["a.ppm","missing.ppm"]})";
    CHECK_THROWS_MATCHES(lf::data::load_lfi((dir.path / "m2.json").string()), lf::error,
                         Catch::Matchers::Predicate<lf::error>(
                             [](const lf::error& e) { return e.code() == lf::errc::missing_subview; }));

    std::ofstream((dir.path / "m3.json").string()) << "not json";
    CHECK_THROWS_MATCHES(lf::data::load_lfi((dir.path / "m3.json").string()), lf::error,
                         Catch::Matchers::Predicate<lf::error>(
                             [](const lf::error& e) { return e.code() == lf::errc::bad_manifest; }));
}

TEST_CASE("LFT1 file round trip through disk") {
    temp_dir dir("lft");
    lf::rng gen(61);
    tensor t = tensor::zeros({2, 2, 4, 4, 3});
    for (double& value : t.data()) value = static_cast<float>(gen.uniform(0.0, 255.0));
    const std::string path = (dir.path / "x.lft").string();
    lf::write_lft(path, t);
    const tensor back = lf::read_lft(path);
    CHECK(back.dims() == t.dims());
    CHECK(back.data() == t.data());
}

TEST_CASE("trim_reshape center-crops jointly in angular and spatial domains") {
    // the published trim (9,9,512,512) -> (7,7,434,434) starts at angular
    // index 1 and spatial offset 39
    CHECK((9 - 7) / 2 == 1);
    CHECK((512 - 434) / 2 == 39);

    lf::rng gen(62);
    const tensor t = random_tensor({5, 5, 8, 8, 2}, gen);
    const tensor cropped = lf::data::trim_reshape(t, {3, 3, 4, 4, 2});
    REQUIRE(cropped.dims() == shape{3, 3, 4, 4, 2});
    for (std::size_t u = 0; u < 3; ++u)
        for (std::size_t v = 0; v < 3; ++v)
            for (std::size_t x = 0; x < 4; ++x)
                for (std::size_t y = 0; y < 4; ++y)
                    for (std::size_t c = 0; c < 2; ++c)
                        CHECK(cropped.at(u, v, x, y, c) == t.at(u + 1, v + 1, x + 2, y + 2, c));

    const tensor same = lf::data::trim_reshape(t, t.dims());
    CHECK(same.data() == t.data());

    CHECK_THROWS_MATCHES(lf::data::trim_reshape(t, {6, 5, 8, 8, 2}), lf::error,
                         Catch::Matchers::Predicate<lf::error>(
                             [](const lf::error& e) { return e.code() == lf::errc::target_too_large; }));
}

TEST_CASE("augment emits exactly eight variants, the first being the input") {
    lf::rng gen(63);
    const tensor t = random_tensor({2, 3, 4, 5, 2}, gen);
    const auto variants = lf::data::augment(t);
    REQUIRE(variants.size() == 8);
    CHECK(variants[0].data() == t.data());
    CHECK(variants[0].dims() == t.dims());

    // non-square spatial dims transpose under quarter turns
    CHECK(variants[1].dims() == shape{3, 2, 5, 4, 2});
    CHECK(variants[2].dims() == t.dims());
}

TEST_CASE("augmentation group identities") {
    lf::rng gen(64);
    const tensor t = random_tensor({2, 3, 4, 5, 2}, gen);

    tensor four_turns = t;
    for (int i = 0; i < 4; ++i) four_turns = lf::data::rot90(four_turns);
    CHECK(four_turns.dims() == t.dims());
    CHECK(four_turns.data() == t.data());

    const tensor double_flip = lf::data::vflip(lf::data::vflip(t));
    CHECK(double_flip.data() == t.data());
}

TEST_CASE("augmentation preserves the per-channel value multiset and variants are distinct") {
    lf::rng gen(65);
    const tensor t = random_tensor({2, 2, 4, 4, 2}, gen);
    const auto variants = lf::data::augment(t);
    for (std::size_t c = 0; c < 2; ++c) {
        const auto reference = channel_multiset(t, c);
        for (const auto& v : variants) CHECK(channel_multiset(v, c) == reference);
    }
    for (std::size_t i = 0; i < variants.size(); ++i)
        for (std::size_t j = i + 1; j < variants.size(); ++j) {
            if (variants[i].dims() != variants[j].dims()) continue;
            CHECK(variants[i].data() != variants[j].data());
        }
}

TEST_CASE("split partitions source groups at the requested ratio") {
    std::vector<lf::data::dataset_entry> entries;
    for (int i = 0; i < 220; ++i) {
        lf::data::dataset_entry e;
        e.source_id = "src-" + std::to_string(i);
        e.lfi = tensor::zeros({1, 1, 1, 1, 1});
        entries.push_back(std::move(e));
    }
    auto [train_set, test_set] = lf::data::split(entries, 0.8, 7);
    CHECK(train_set.size() == 176);
    CHECK(test_set.size() == 44);

    auto [train2, test2] = lf::data::split(entries, 0.8, 7);
    REQUIRE(train2.size() == train_set.size());
    for (std::size_t i = 0; i < train_set.size(); ++i) CHECK(train2[i].source_id == train_set[i].source_id);

    CHECK_THROWS_AS(lf::data::split(entries, 1.0, 7), lf::error);
    CHECK_THROWS_MATCHES(lf::data::split({}, 0.8, 7), lf::error,
                         Catch::Matchers::Predicate<lf::error>(
                             [](const lf::error& e) { return e.code() == lf::errc::empty_dataset; }));
}

TEST_CASE("split never leaks a source group across segments") {
    std::vector<lf::data::dataset_entry> entries;
    for (int src = 0; src < 12; ++src)
        for (int aug = 0; aug < 8; ++aug) {
            lf::data::dataset_entry e;
            e.source_id = "src-" + std::to_string(src);
            e.lfi = tensor::zeros({1, 1, 1, 1, 1});
            entries.push_back(std::move(e));
        }
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        auto [train_set, test_set] = lf::data::split(entries, 0.75, seed);
        std::set<std::string> train_ids, test_ids;
        for (const auto& e : train_set) train_ids.insert(e.source_id);
        for (const auto& e : test_set) test_ids.insert(e.source_id);
        for (const auto& id : train_ids) CHECK(test_ids.count(id) == 0);
        CHECK(train_set.size() % 8 == 0);
    }
}

TEST_CASE("blur-to-score mapping endpoints") {
    CHECK(lf::data::score_for_blur(0.0) == 5.0);
    CHECK(lf::data::score_for_blur(3.0) == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("synthetic dataset is deterministic and fully labeled") {
    const shape s{2, 2, 16, 16, 3};
    const auto a = lf::data::synth_dataset(4, s, 99);
    const auto b = lf::data::synth_dataset(4, s, 99);
    REQUIRE(a.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(a[i].lfi.data() == b[i].lfi.data());
        CHECK(a[i].label.score == b[i].label.score);
        CHECK(a[i].label.score >= 1.0);
        CHECK(a[i].label.score <= 5.0);
        REQUIRE(a[i].label.spatial.size() == 36);
        REQUIRE(a[i].label.angular.size() == 8);
        for (double value : a[i].label.spatial) CHECK(std::isfinite(value));
        for (double value : a[i].label.angular) CHECK(std::isfinite(value));
    }
    CHECK_THROWS_AS(lf::data::synth_dataset(2, s, 1), lf::error);
}

TEST_CASE("gaussian blur: identity at zero strength, smoothing otherwise") {
    lf::rng gen(66);
    const tensor t = random_tensor({1, 1, 12, 12, 1}, gen);
    CHECK(lf::data::gaussian_blur(t, 0.0).data() == t.data());

    const tensor blurred = lf::data::gaussian_blur(t, 2.0);
    auto variance = [](const tensor& v) {
        double mean = 0.0;
        for (double value : v.data()) mean += value;
        mean /= static_cast<double>(v.size());
        double var = 0.0;
        for (double value : v.data()) var += (value - mean) * (value - mean);
        return var / static_cast<double>(v.size());
    };
    CHECK(variance(blurred) < variance(t));
}

TEST_CASE("labels CSV round trip") {
    temp_dir dir("labels");
    const std::string path = (dir.path / "labels.csv").string();
    lf::data::write_labels_csv(path, {{"s0", "a.lft", 4.25}, {"s1", "b.lft", 1.5}});
    const auto rows = lf::data::read_labels_csv(path);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].source_id == "s0");
    CHECK(rows[0].path == "a.lft");
    CHECK(rows[0].score == 4.25);
    CHECK(rows[1].score == 1.5);
}

TEST_CASE("augment_entries propagates scores and recomputes feature labels") {
    auto entries = lf::data::synth_dataset(4, {2, 2, 16, 16, 3}, 44);
    const auto expanded = lf::data::augment_entries(entries);
    REQUIRE(expanded.size() == 32);
    for (std::size_t i = 0; i < expanded.size(); ++i) {
        const auto& src = entries[i / 8];
        CHECK(expanded[i].source_id == src.source_id);
        CHECK(expanded[i].label.score == src.label.score);
        REQUIRE(expanded[i].label.spatial.size() == 36);
        REQUIRE(expanded[i].label.angular.size() == 8);
    }
    CHECK(expanded[0].lfi.data() == entries[0].lfi.data());
    CHECK(expanded[0].label.spatial == entries[0].label.spatial);
    // a rotated variant carries the features of the rotated tensor
    const auto rotated_feats = lf::features::spatial_features(expanded[1].lfi);
    CHECK(expanded[1].label.spatial == rotated_feats);
}
