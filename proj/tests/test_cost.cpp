#include <catch_amalgamated.hpp>

#include <vector>

#include "lf/cost.hpp"
#include "lf/rng.hpp"

using lf::cost::cost_kind;
using lf::cost::dims;
using lf::cost::savings_kind;

namespace {

// Shared reference dims: u=v=7, x=y=8, ci=3, cj=8, k=3 (a=3 where needed).
dims reference_dims() {
    dims d;
    d.u = d.v = 7;
    d.x = d.y = 8;
    d.ci = 3;
    d.cj = 8;
    d.k = 3;
    d.a = 3;
    return d;
}

dims random_dims(lf::rng& gen, bool with_a) {
    dims d;
    d.u = 1 + static_cast<std::int64_t>(gen.below(8));
    d.v = 1 + static_cast<std::int64_t>(gen.below(8));
    d.x = 1 + static_cast<std::int64_t>(gen.below(8));
    d.y = 1 + static_cast<std::int64_t>(gen.below(8));
    d.ci = 1 + static_cast<std::int64_t>(gen.below(5));
    d.cj = 1 + static_cast<std::int64_t>(gen.below(5));
    d.k = 1 + static_cast<std::int64_t>(gen.below(4));
    d.a = with_a ? 1 + static_cast<std::int64_t>(gen.below(3)) : 0;
    return d;
}

}  // namespace

TEST_CASE("closed-form MAC counts at the reference dims") {
    const dims d = reference_dims();
    CHECK(lf::cost::mac_cost(cost_kind::subview2d, d) == 677376);
    CHECK(lf::cost::mac_cost(cost_kind::lf_dsc, d) == 159936);  // 3136*3*(8+9)
    CHECK(lf::cost::mac_cost(cost_kind::full4d, d) == 6096384);
    CHECK(lf::cost::mac_cost(cost_kind::lf_asc, d) == 4064256);
}

TEST_CASE("savings formulas and their difference identities") {
    const dims d = reference_dims();
    CHECK(lf::cost::mac_savings(savings_kind::dsc_vs_2d, d) == 517440);
    CHECK(lf::cost::mac_savings(savings_kind::dsc_vs_2d, d) ==
          lf::cost::mac_cost(cost_kind::subview2d, d) - lf::cost::mac_cost(cost_kind::lf_dsc, d));
    CHECK(lf::cost::mac_savings(savings_kind::combo_vs_4d, d) == 1872192);
    CHECK(lf::cost::mac_savings(savings_kind::combo_vs_4d, d) ==
          lf::cost::mac_cost(cost_kind::full4d, d) - lf::cost::mac_cost(cost_kind::dsc_asc, d));

    // k = 1, cj = 1: the factorization costs MORE by exactly u*v*x*y*ci
    dims tiny = d;
    tiny.k = 1;
    tiny.cj = 1;
    CHECK(lf::cost::mac_savings(savings_kind::dsc_vs_2d, tiny) == -(tiny.u * tiny.v * tiny.x * tiny.y * tiny.ci));
}

TEST_CASE("difference identities hold on 100 random tuples") {
    lf::rng gen(21);
    for (int round = 0; round < 100; ++round) {
        const dims d = random_dims(gen, true);
        CHECK(lf::cost::mac_cost(cost_kind::subview2d, d) - lf::cost::mac_cost(cost_kind::lf_dsc, d) ==
              lf::cost::mac_savings(savings_kind::dsc_vs_2d, d));
        CHECK(lf::cost::mac_cost(cost_kind::full4d, d) - lf::cost::mac_cost(cost_kind::dsc_asc, d) ==
              lf::cost::mac_savings(savings_kind::combo_vs_4d, d));
    }
}

TEST_CASE("missing angular extent is rejected") {
    dims d = reference_dims();
    d.a = 0;
    CHECK_THROWS_MATCHES(lf::cost::mac_cost(cost_kind::full4d, d), lf::error,
                         Catch::Matchers::Predicate<lf::error>([](const lf::error& e) {
                             return e.code() == lf::errc::missing_angular_extent;
                         }));
}

TEST_CASE("instrumented executor matches every closed form exactly") {
    lf::rng gen(22);
    for (cost_kind kind : {cost_kind::subview2d, cost_kind::lf_dsc, cost_kind::full4d, cost_kind::lf_asc,
                           cost_kind::dsc_asc}) {
        const bool with_a =
            kind == cost_kind::full4d || kind == cost_kind::lf_asc || kind == cost_kind::dsc_asc;
        for (int round = 0; round < 20; ++round) {
            const dims d = random_dims(gen, with_a);
            auto [steps, input] = lf::cost::cost_program(kind, d);
            const std::uint64_t measured = lf::cost::measure_macs(steps, input);
            REQUIRE(measured == static_cast<std::uint64_t>(lf::cost::mac_cost(kind, d)));
        }
    }
}

TEST_CASE("mac_cost is strictly monotone in every relevant dimension") {
    lf::rng gen(23);
    for (cost_kind kind : {cost_kind::subview2d, cost_kind::lf_dsc, cost_kind::full4d, cost_kind::lf_asc,
                           cost_kind::dsc_asc}) {
        const bool with_a =
            kind == cost_kind::full4d || kind == cost_kind::lf_asc || kind == cost_kind::dsc_asc;
        for (int round = 0; round < 20; ++round) {
            const dims d = random_dims(gen, with_a);
            const std::int64_t base = lf::cost::mac_cost(kind, d);
            auto bump = [&](auto member) {
                dims up = d;
                up.*member += 1;
                CHECK(lf::cost::mac_cost(kind, up) > base);
            };
            bump(&dims::u);
            bump(&dims::v);
            bump(&dims::x);
            bump(&dims::y);
            bump(&dims::ci);
            bump(&dims::cj);
            bump(&dims::k);
            if (with_a) bump(&dims::a);
        }
    }
}

TEST_CASE("parameter counting") {
    lf::layer_spec pw;
    pw.kind = lf::layer_kind::pointwise;
    pw.ci = 192;
    pw.co = 1024;
    pw.weights.assign(pw.weight_count(), 0.0);
    CHECK(lf::cost::count_params(pw) == 196608);

    lf::layer_spec dense;
    dense.kind = lf::layer_kind::dense;
    dense.ci = 451584;
    dense.co = 1;
    dense.weights.assign(dense.weight_count(), 0.0);
    dense.bias.assign(1, 0.0);
    CHECK(lf::cost::count_params(dense) == 451585);

    lf::layer_spec dw;
    dw.kind = lf::layer_kind::depthwise;
    dw.ci = 3;
    dw.k = 4;
    dw.weights.assign(dw.weight_count(), 0.0);
    CHECK(lf::cost::count_params(dw) == 48);
}

TEST_CASE("measure_macs on single layers and the empty model") {
    CHECK(lf::cost::measure_macs({}, {1, 1, 1, 1, 1}) == 0);

    dims d = reference_dims();
    auto [steps, input] = lf::cost::cost_program(cost_kind::subview2d, d);
    CHECK(lf::cost::measure_macs(steps, input) == 677376);

    // single pointwise ci=3, cj=8 on (7,7,8,8,3): 3136*3*8
    dims pd = d;
    pd.k = 1;
    std::vector<lf::step> pw_steps;
    lf::layer_spec pw;
    pw.kind = lf::layer_kind::pointwise;
    pw.ci = 3;
    pw.co = 8;
    pw.weights.assign(pw.weight_count(), 0.0);
    pw_steps.push_back({pw, -1, -1});
    CHECK(lf::cost::measure_macs(pw_steps, {7, 7, 8, 8, 3}) == 75264);
}

TEST_CASE("cost_report rows: measured equals analytic per layer") {
    lf::rng gen(24);
    const dims d = random_dims(gen, true);
    auto [steps, input] = lf::cost::cost_program(cost_kind::dsc_asc, d);
    const lf::cost::report rep = lf::cost::cost_report(steps, input);
    REQUIRE(rep.rows.size() == 4);
    for (const auto& row : rep.rows)
        CHECK(row.measured_macs == static_cast<std::uint64_t>(row.analytic_macs));
    CHECK(rep.total_measured == static_cast<std::uint64_t>(rep.total_analytic));
}
