#include <catch_amalgamated.hpp>

#include <sstream>
#include <vector>

#include "lf/cost.hpp"
#include "lf/model.hpp"
#include "lf/rng.hpp"
#include "lf/tensor.hpp"

using lf::layer_kind;
using lf::model_scale;
using lf::model_spec;
using lf::shape;
using lf::tensor;

namespace {

std::vector<std::size_t> steps_of_kind(const model_spec& m, layer_kind kind) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < m.steps.size(); ++i)
        if (m.steps[i].layer.kind == kind) out.push_back(i);
    return out;
}

shape input_shape_of(const model_spec& m, const std::vector<shape>& shapes, std::size_t step_idx) {
    const int parent = m.steps[step_idx].input0;
    return parent < 0 ? m.input : shapes[parent];
}

}  // namespace

TEST_CASE("full-scale ALAS-DADS reproduces the published layer sizes") {
    const model_spec m = lf::build_alas_dads({7, 7, 434, 434, 3}, model_scale::full, 1);
    const std::vector<shape> shapes = lf::propagate_shapes(m.steps, m.input);

    // stem: stride-2 2D conv on (7,7,434,434,3) -> (7,7,217,217,3)
    const auto convs = steps_of_kind(m, layer_kind::subview2d);
    REQUIRE(convs.size() == 1);
    CHECK(input_shape_of(m, shapes, convs[0]) == shape{7, 7, 434, 434, 3});
    CHECK(shapes[convs[0]] == shape{7, 7, 217, 217, 3});

    // three anglewise pairs, all at (7,7,217,217,3) with a=7, k=4
    const auto aw_h = steps_of_kind(m, layer_kind::anglewise_h);
    const auto aw_v = steps_of_kind(m, layer_kind::anglewise_v);
    REQUIRE(aw_h.size() == 3);
    REQUIRE(aw_v.size() == 3);
    for (std::size_t idx : aw_h) {
        CHECK(input_shape_of(m, shapes, idx) == shape{7, 7, 217, 217, 3});
        CHECK(m.steps[idx].layer.a == 7);
        CHECK(m.steps[idx].layer.k == 4);
    }

    // pooling: s4 maps 217 -> 54, s2 maps 7 -> 3
    const auto pools = steps_of_kind(m, layer_kind::max_pool_spatial);
    REQUIRE(pools.size() == 2);
    CHECK(m.steps[pools[0]].layer.stride == 4);
    CHECK(input_shape_of(m, shapes, pools[0]) == shape{7, 7, 217, 217, 3});
    CHECK(shapes[pools[0]] == shape{7, 7, 54, 54, 3});
    CHECK(m.steps[pools[1]].layer.stride == 2);
    CHECK(input_shape_of(m, shapes, pools[1]) == shape{7, 7, 7, 7, 1024});
    CHECK(shapes[pools[1]] == shape{7, 7, 3, 3, 1024});

    // the six depthwise stages see the published input sizes
    const auto dws = steps_of_kind(m, layer_kind::depthwise);
    REQUIRE(dws.size() == 6);
    const std::vector<shape> expected_dw{{7, 7, 54, 54, 3},  {7, 7, 54, 54, 12}, {7, 7, 27, 27, 12},
                                         {7, 7, 27, 27, 48}, {7, 7, 14, 14, 48}, {7, 7, 14, 14, 192}};
    const std::vector<std::size_t> expected_stride{1, 2, 1, 2, 1, 2};
    for (std::size_t i = 0; i < 6; ++i) {
        CHECK(input_shape_of(m, shapes, dws[i]) == expected_dw[i]);
        CHECK(m.steps[dws[i]].layer.stride == expected_stride[i]);
        CHECK(m.steps[dws[i]].layer.k == 4);
    }

    // pointwise to 1024 at (7,7,7,7,192)
    const auto pws = steps_of_kind(m, layer_kind::pointwise);
    const std::size_t last_pw = pws.back();
    CHECK(input_shape_of(m, shapes, last_pw) == shape{7, 7, 7, 7, 192});
    CHECK(shapes[last_pw] == shape{7, 7, 7, 7, 1024});

    // heads: flattened primary input 451584, outputs 1/36/8
    const auto flattens = steps_of_kind(m, layer_kind::flatten);
    REQUIRE(flattens.size() == 1);
    CHECK(shapes[flattens[0]].c == 451584);
    CHECK(shapes[m.primary_out].c == 1);
    CHECK(shapes[m.spatial_out].c == 36);
    CHECK(shapes[m.angular_out].c == 8);
}

TEST_CASE("full scale rejects other input shapes") {
    CHECK_THROWS_MATCHES(lf::build_alas_dads({7, 7, 128, 128, 3}, model_scale::full), lf::error,
                         Catch::Matchers::Predicate<lf::error>(
                             [](const lf::error& e) { return e.code() == lf::errc::bad_input_shape; }));
    CHECK_THROWS_AS(lf::build_alas_dads({3, 3, 32, 32, 1}, model_scale::tiny), lf::error);
}

TEST_CASE("tiny ALAS-DADS keeps the head contract on (3,3,32,32,3)") {
    const model_spec m = lf::build_alas_dads({3, 3, 32, 32, 3}, model_scale::tiny, 1);
    const std::vector<shape> shapes = lf::propagate_shapes(m.steps, m.input);
    CHECK(shapes[m.primary_out].c == 1);
    CHECK(shapes[m.spatial_out].c == 36);
    CHECK(shapes[m.angular_out].c == 8);
    CHECK(steps_of_kind(m, layer_kind::depthwise).size() == 6);
    // channel growth 3 -> 6 -> 12 -> 24 and pointwise to 64
    const auto pws = steps_of_kind(m, layer_kind::pointwise);
    CHECK(m.steps[pws.back()].layer.co == 64);

    // it actually runs
    const lf::prediction p = lf::predict(m, tensor::zeros(m.input));
    CHECK(p.spatial.size() == 36);
    CHECK(p.angular.size() == 8);
}

TEST_CASE("loss functions match hand arithmetic") {
    CHECK(lf::loss_primary({1, 2}, {1, 2}) == 0.0);
    CHECK(lf::loss_primary({0, 0}, {1, 3}) == 5.0);
    CHECK(lf::loss_primary({2}, {5}) == 9.0);

    std::vector<std::vector<double>> truth(1, std::vector<double>(36, 0.0));
    std::vector<std::vector<double>> pred(1, std::vector<double>(36, 1.0));
    CHECK(lf::loss_spatial(truth, pred) == 1.0);

    std::vector<std::vector<double>> a_truth{std::vector<double>(8, 0.0), std::vector<double>(8, 0.0)};
    std::vector<std::vector<double>> a_pred{std::vector<double>(8, 0.0), std::vector<double>(8, 2.0)};
    CHECK(lf::loss_angular(a_truth, a_pred) == 2.0);

    CHECK(lf::loss_total(1.0, 2.0, 3.0, 0.01) == Catch::Approx(1.05).margin(1e-15));
    CHECK(lf::loss_total(7.0, 2.0, 3.0, 0.0) == 7.0);

    CHECK_THROWS_AS(lf::loss_primary({1.0}, {1.0, 2.0}), lf::error);
    CHECK_THROWS_AS(lf::loss_spatial({std::vector<double>(8, 0.0)}, {std::vector<double>(8, 0.0)}),
                    lf::error);
}

TEST_CASE("loss_total is non-negative and zero only when all parts vanish") {
    lf::rng gen(51);
    for (int round = 0; round < 50; ++round) {
        const double lp = gen.uniform(0.0, 4.0), ls = gen.uniform(0.0, 4.0), la = gen.uniform(0.0, 4.0);
        const double total = lf::loss_total(lp, ls, la, 0.01);
        CHECK(total >= 0.0);
        if (total == 0.0) {
            CHECK(lp == 0.0);
            CHECK(ls == 0.0);
            CHECK(la == 0.0);
        }
    }
}

TEST_CASE("predict: zero weights expose the head biases; repeat runs are bitwise equal") {
    model_spec m = lf::build_alas_dads({3, 3, 32, 32, 3}, model_scale::tiny, 5);
    for (auto& st : m.steps)
        for (double& w : st.layer.weights) w = 0.0;
    // set the primary head's bias
    m.steps[m.primary_out].layer.bias[0] = 1.25;

    lf::rng gen(52);
    tensor input = tensor::zeros(m.input);
    for (double& value : input.data()) value = gen.uniform(0.0, 255.0);

    const lf::prediction p1 = lf::predict(m, input);
    CHECK(p1.score == 1.25);
    const lf::prediction p2 = lf::predict(m, input);
    CHECK(p1.score == p2.score);
    CHECK(p1.spatial == p2.spatial);
    CHECK(p1.angular == p2.angular);
}

TEST_CASE("predict rejects mismatched input shapes") {
    const model_spec m = lf::build_alas_dads({3, 3, 32, 32, 3}, model_scale::tiny, 1);
    CHECK_THROWS_MATCHES(lf::predict(m, tensor::zeros({3, 3, 16, 16, 3})), lf::error,
                         Catch::Matchers::Predicate<lf::error>(
                             [](const lf::error& e) { return e.code() == lf::errc::shape_mismatch; }));
}

TEST_CASE("checkpoint: quantized round trip is a fixed point with bitwise-equal predictions") {
    const model_spec m0 = lf::build_alas_dads({3, 3, 32, 32, 3}, model_scale::tiny, 9);

    std::stringstream buf1;
    lf::save_checkpoint(buf1, m0);
    const std::string bytes1 = buf1.str();
    CHECK(bytes1.substr(0, 4) == "ALAS");

    std::stringstream in1(bytes1);
    const model_spec m1 = lf::load_checkpoint(in1);
    CHECK(m1.input == m0.input);
    CHECK(m1.steps.size() == m0.steps.size());

    std::stringstream buf2;
    lf::save_checkpoint(buf2, m1);
    REQUIRE(buf2.str() == bytes1);  // second save is byte-identical
    std::stringstream in2(buf2.str());
    const model_spec m2 = lf::load_checkpoint(in2);

    lf::rng gen(53);
    tensor input = tensor::zeros(m0.input);
    for (double& value : input.data()) value = gen.uniform(0.0, 255.0);
    const lf::prediction p1 = lf::predict(m1, input);
    const lf::prediction p2 = lf::predict(m2, input);
    CHECK(p1.score == p2.score);
    CHECK(p1.spatial == p2.spatial);
    CHECK(p1.angular == p2.angular);
}

TEST_CASE("ablation backbones share stem and heads; parameter ordering matches") {
    const shape input{3, 3, 16, 16, 3};
    const std::size_t channels = 4, k = 3, a = 3;
    std::vector<model_spec> models;
    for (auto kind : {lf::ablation_kind::four_d_conv, lf::ablation_kind::lf_dsc, lf::ablation_kind::lf_asc,
                      lf::ablation_kind::lf_dsc_asc})
        models.push_back(lf::build_ablation(kind, input, channels, k, a, 1));

    for (const auto& m : models) {
        const std::vector<shape> shapes = lf::propagate_shapes(m.steps, m.input);
        CHECK(shapes[m.primary_out].c == 1);
        CHECK(shapes[m.spatial_out].c == 36);
        CHECK(shapes[m.angular_out].c == 8);
    }

    auto total_params = [](const model_spec& m) {
        std::int64_t total = 0;
        for (const auto& st : m.steps) total += lf::cost::count_params(st.layer);
        return total;
    };
    CHECK(total_params(models[0]) > total_params(models[3]));  // 4D conv outweighs DSC+ASC

    // the combination model stacks ten DSC and ten ASC blocks
    CHECK(steps_of_kind(models[3], layer_kind::depthwise).size() == 10);
    CHECK(steps_of_kind(models[3], layer_kind::anglewise_h).size() == 10);
    CHECK(steps_of_kind(models[3], layer_kind::anglewise_v).size() == 10);
    CHECK(steps_of_kind(models[0], layer_kind::full4d).size() == 10);
}

TEST_CASE("auxiliary heads contribute trunk gradients only when seeded") {
    const model_spec m = lf::build_alas_dads({3, 3, 32, 32, 3}, model_scale::tiny, 11);
    lf::rng gen(54);
    tensor input = tensor::zeros(m.input);
    for (double& value : input.data()) value = gen.uniform(-1.0, 1.0);
    const lf::tape t = lf::forward_record(m.steps, input);

    tensor seed_p = tensor::zeros({1, 1, 1, 1, 1});
    seed_p.data()[0] = 1.0;
    tensor seed_s = tensor::zeros({1, 1, 1, 1, 36});
    for (double& value : seed_s.data()) value = 0.5;
    tensor seed_a = tensor::zeros({1, 1, 1, 1, 8});
    for (double& value : seed_a.data()) value = 0.5;

    const lf::gradients primary_only = lf::backward(m.steps, t, {{m.primary_out, seed_p}});
    const lf::gradients with_aux = lf::backward(
        m.steps, t, {{m.primary_out, seed_p}, {m.spatial_out, seed_s}, {m.angular_out, seed_a}});

    // an auxiliary dense layer: zero gradient without its seed, nonzero with
    const int aux_dense = m.steps[m.spatial_out].input0;
    REQUIRE(m.steps[aux_dense].layer.kind == layer_kind::dense);
    double po_sum = 0.0, wa_sum = 0.0;
    for (double g : primary_only.weight[aux_dense]) po_sum += std::fabs(g);
    for (double g : with_aux.weight[aux_dense]) wa_sum += std::fabs(g);
    CHECK(po_sum == 0.0);
    CHECK(wa_sum > 0.0);

    // the trunk stem receives extra contributions from the auxiliary heads
    double diff = 0.0;
    for (std::size_t i = 0; i < primary_only.weight[0].size(); ++i)
        diff += std::fabs(primary_only.weight[0][i] - with_aux.weight[0][i]);
    CHECK(diff > 0.0);
}
