// lfqa: command-line front end for the light-field IQA kernel library.
// Workflows: cost modeling, gradient checking, feature extraction, synthetic
// dataset generation, training, evaluation, prediction and augmentation.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lf/autodiff.hpp"
#include "lf/cost.hpp"
#include "lf/data.hpp"
#include "lf/features.hpp"
#include "lf/format.hpp"
#include "lf/model.hpp"
#include "lf/ops.hpp"
#include "lf/tensor.hpp"
#include "lf/train.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_failed_check = 1;
constexpr int exit_usage = 2;

lf::tensor load_input(const std::string& path) {
    if (path.size() >= 4 && path.substr(path.size() - 4) == ".lft") return lf::read_lft(path);
    return lf::data::load_lfi(path);
}

lf::model_scale parse_scale(const std::string& name) {
    if (name == "full") return lf::model_scale::full;
    if (name == "tiny") return lf::model_scale::tiny;
    lf::fail(lf::errc::bad_argument, "scale must be 'full' or 'tiny'");
}

lf::shape default_input(lf::model_scale scale) {
    return scale == lf::model_scale::full ? lf::shape{7, 7, 434, 434, 3} : lf::shape{3, 3, 32, 32, 3};
}

// ---------------------------------------------------------------------------
// cost-report
// ---------------------------------------------------------------------------

int run_cost_report(const std::string& scale_name, const std::string& out_path, std::uint64_t seed) {
    const lf::model_scale scale = parse_scale(scale_name);
    const lf::model_spec model = lf::build_alas_dads(default_input(scale), scale, seed);
    const lf::cost::report rep = lf::cost::cost_report(model.steps, model.input);

    std::ofstream os(out_path, std::ios::binary);
    lf::require(os.good(), lf::errc::io_error, "cannot open " + out_path);
    lf::cost::write_report_csv(os, rep);

    bool all_equal = true;
    for (const auto& row : rep.rows)
        if (row.analytic_macs >= 0 &&
            static_cast<std::uint64_t>(row.analytic_macs) != row.measured_macs)
            all_equal = false;

    // Savings summary: each factored stage against the unfactored kernel it
    // replaces, evaluated at the stage's own dimensions.
    const std::vector<lf::shape> shapes = lf::propagate_shapes(model.steps, model.input);
    auto in_shape = [&](std::size_t i) {
        return model.steps[i].input0 < 0 ? model.input : shapes[model.steps[i].input0];
    };
    long long dsc_actual = 0, dsc_equivalent = 0, asc_actual = 0, asc_equivalent = 0;
    for (std::size_t i = 0; i < model.steps.size(); ++i) {
        const lf::layer_spec& l = model.steps[i].layer;
        if (l.kind == lf::layer_kind::depthwise) {
            // pair with the closing pointwise of the same block
            for (std::size_t j = i + 1; j < model.steps.size(); ++j) {
                if (model.steps[j].layer.kind != lf::layer_kind::pointwise) continue;
                const long long dw = lf::cost::layer_macs(l, in_shape(i));
                const long long pw = lf::cost::layer_macs(model.steps[j].layer, in_shape(j));
                const lf::shape out = shapes[i];
                const long long positions =
                    static_cast<long long>(out.u * out.v * out.x * out.y);
                dsc_actual += dw + pw;
                dsc_equivalent += positions * static_cast<long long>(l.ci) *
                                  static_cast<long long>(model.steps[j].layer.co) *
                                  static_cast<long long>(l.k * l.k);
                break;
            }
        } else if (l.kind == lf::layer_kind::anglewise_h) {
            for (std::size_t j = i + 1; j < model.steps.size(); ++j) {
                if (model.steps[j].layer.kind != lf::layer_kind::anglewise_v) continue;
                const long long h = lf::cost::layer_macs(l, in_shape(i));
                const long long v = lf::cost::layer_macs(model.steps[j].layer, in_shape(j));
                const lf::shape in = in_shape(i);
                const long long positions = static_cast<long long>(in.u * in.v * in.x * in.y);
                asc_actual += h + v;
                asc_equivalent += positions * static_cast<long long>(l.ci) *
                                  static_cast<long long>(model.steps[j].layer.co) *
                                  static_cast<long long>(l.k * l.k) * static_cast<long long>(l.a * l.a);
                break;
            }
        }
    }
    std::cout << "total_analytic_macs," << rep.total_analytic << "\n";
    std::cout << "total_measured_macs," << rep.total_measured << "\n";
    std::cout << "total_params," << rep.total_params << "\n";
    std::cout << "dsc_macs," << dsc_actual << "\n";
    std::cout << "dsc_unfactored_2d_macs," << dsc_equivalent << "\n";
    std::cout << "dsc_savings," << (dsc_equivalent - dsc_actual) << "\n";
    std::cout << "asc_macs," << asc_actual << "\n";
    std::cout << "asc_unfactored_4d_macs," << asc_equivalent << "\n";
    std::cout << "asc_savings," << (asc_equivalent - asc_actual) << "\n";
    if (!all_equal) {
        std::cerr << "cost-report: measured MACs diverged from the analytic model\n";
        return exit_failed_check;
    }
    return exit_ok;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

lf::tensor random_tensor(const lf::shape& s, lf::rng& gen, bool away_from_zero) {
    lf::tensor t = lf::tensor::zeros(s);
    for (double& value : t.data()) {
        double draw = gen.uniform(-1.0, 1.0);
        if (away_from_zero)
            while (std::fabs(draw) < 0.1) draw = gen.uniform(-1.0, 1.0);
        value = draw;
    }
    return t;
}

// Distinct, well-separated values so max-pool argmaxes sit far from the
// finite-difference step.
lf::tensor separated_tensor(const lf::shape& s, lf::rng& gen) {
    const std::size_t n = s.count();
    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i)
        values[i] = -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(n);
    gen.shuffle(values);
    return lf::tensor(s, std::move(values));
}

struct gradcheck_case {
    std::string name;
    lf::layer_spec layer;
    lf::shape input;
    bool away_from_zero = false;
    bool separated = false;
};

std::vector<gradcheck_case> gradcheck_cases(std::uint64_t seed) {
    lf::rng gen(seed);
    auto conv = [&](lf::layer_kind kind, std::size_t ci, std::size_t co, std::size_t k, std::size_t a,
                    std::size_t stride, bool bias) {
        lf::layer_spec l;
        l.kind = kind;
        l.ci = ci;
        l.co = co;
        l.k = k;
        l.a = a;
        l.stride = stride;
        l.weights.resize(l.weight_count());
        for (double& w : l.weights) w = gen.uniform(-1.0, 1.0);
        if (bias) {
            l.bias.resize(l.bias_count());
            for (double& b : l.bias) b = gen.uniform(-0.5, 0.5);
        }
        return l;
    };
    auto plain = [](lf::layer_kind kind, std::size_t stride = 1) {
        lf::layer_spec l;
        l.kind = kind;
        l.stride = stride;
        return l;
    };
    std::vector<gradcheck_case> cases;
    cases.push_back({"subview2d_s1", conv(lf::layer_kind::subview2d, 2, 3, 3, 1, 1, true), {2, 2, 5, 5, 2}});
    cases.push_back({"subview2d_s2", conv(lf::layer_kind::subview2d, 2, 2, 4, 1, 2, false), {1, 2, 6, 6, 2}});
    cases.push_back({"depthwise", conv(lf::layer_kind::depthwise, 3, 3, 3, 1, 1, false), {2, 2, 5, 5, 3}});
    cases.push_back({"depthwise_s2", conv(lf::layer_kind::depthwise, 2, 2, 4, 1, 2, false), {2, 2, 6, 6, 2}});
    cases.push_back({"pointwise", conv(lf::layer_kind::pointwise, 3, 4, 1, 1, 1, true), {2, 2, 4, 4, 3}});
    cases.push_back({"anglewise_h", conv(lf::layer_kind::anglewise_h, 2, 2, 3, 3, 1, false), {3, 3, 6, 6, 2}});
    cases.push_back({"anglewise_v", conv(lf::layer_kind::anglewise_v, 2, 2, 3, 3, 1, false), {3, 3, 6, 6, 2}});
    cases.push_back({"full4d", conv(lf::layer_kind::full4d, 2, 2, 3, 3, 1, false), {3, 3, 4, 4, 2}});
    cases.push_back({"dense", conv(lf::layer_kind::dense, 12, 5, 1, 1, 1, true), {1, 1, 1, 1, 12}});
    cases.push_back({"relu", plain(lf::layer_kind::relu), {2, 2, 4, 4, 2}, true});
    cases.push_back({"max_pool_s2", plain(lf::layer_kind::max_pool_spatial, 2), {2, 2, 6, 6, 2}, false, true});
    cases.push_back({"max_pool_s4", plain(lf::layer_kind::max_pool_spatial, 4), {1, 2, 8, 8, 2}, false, true});
    cases.push_back({"residual_add", plain(lf::layer_kind::residual_add), {2, 2, 4, 4, 2}});
    cases.push_back({"global_avg_pool", plain(lf::layer_kind::global_avg_pool), {2, 2, 4, 4, 3}});
    cases.push_back({"flatten", plain(lf::layer_kind::flatten), {2, 2, 3, 3, 2}});
    return cases;
}

int run_gradcheck(const std::string& which, std::uint64_t seed, std::size_t rounds) {
    constexpr double tolerance = 1e-4;
    bool all_ok = true;
    std::cout << "op,max_rel_error,status\n";
    for (std::size_t round = 0; round < rounds; ++round) {
        for (auto& c : gradcheck_cases(seed + round)) {
            if (which != "all" && which != c.name) continue;
            lf::rng gen(seed * 1000 + round * 17 + 3);
            const lf::tensor input = c.separated ? separated_tensor(c.input, gen)
                                                 : random_tensor(c.input, gen, c.away_from_zero);
            const double err = lf::grad_check(c.layer, input, 1e-5, seed + round * 101);
            const bool ok = err <= tolerance;
            all_ok = all_ok && ok;
            if (round == rounds - 1 || !ok)
                std::cout << c.name << ',' << lf::format_double(err) << ',' << (ok ? "ok" : "FAIL")
                          << "\n";
        }
    }
    return all_ok ? exit_ok : exit_failed_check;
}

// ---------------------------------------------------------------------------
// features
// ---------------------------------------------------------------------------

int run_features(const std::vector<std::string>& inputs, const std::string& out_path) {
    std::ofstream os(out_path, std::ios::binary);
    lf::require(os.good(), lf::errc::io_error, "cannot open " + out_path);
    for (const auto& path : inputs) {
        const lf::tensor t = load_input(path);
        os << path << ",spatial";
        for (double value : lf::features::spatial_features(t)) os << ',' << lf::format_double(value);
        os << "\n" << path << ",angular";
        for (double value : lf::features::angular_features(t)) os << ',' << lf::format_double(value);
        os << "\n";
    }
    return exit_ok;
}

// ---------------------------------------------------------------------------
// synth / augment
// ---------------------------------------------------------------------------

int run_synth(std::size_t count, const std::string& scale_name, const std::string& out_dir,
              std::uint64_t seed) {
    const lf::shape s = default_input(parse_scale(scale_name));
    fs::create_directories(out_dir);
    lf::rng gen(seed);
    std::vector<lf::data::label_row> rows;
    for (std::size_t i = 0; i < count; ++i) {
        lf::rng scene_gen = gen.fork(i + 1);
        const double b = scene_gen.uniform(0.0, 3.0);
        const lf::tensor degraded = lf::data::gaussian_blur(lf::data::synth_scene(s, scene_gen), b);
        char name[32];
        std::snprintf(name, sizeof(name), "lfi_%04zu.lft", i);
        lf::write_lft((fs::path(out_dir) / name).string(), degraded);
        rows.push_back({"synth-" + std::to_string(i), name, lf::data::score_for_blur(b)});
    }
    lf::data::write_labels_csv((fs::path(out_dir) / "labels.csv").string(), rows);
    std::cout << "wrote " << count << " tensors to " << out_dir << "\n";
    return exit_ok;
}

int run_augment(const std::string& in_path, const std::string& out_dir) {
    const lf::tensor t = load_input(in_path);
    fs::create_directories(out_dir);
    const std::vector<lf::tensor> variants = lf::data::augment(t);
    for (std::size_t i = 0; i < variants.size(); ++i)
        lf::write_lft((fs::path(out_dir) / ("aug" + std::to_string(i) + ".lft")).string(), variants[i]);
    std::cout << "wrote " << variants.size() << " variants to " << out_dir << "\n";
    return exit_ok;
}

// ---------------------------------------------------------------------------
// train / eval / predict
// ---------------------------------------------------------------------------

int run_train(const std::string& labels_csv, const std::string& scale_name, const std::string& out_dir,
              lf::train::config cfg, double split_ratio, std::uint64_t split_seed, double dropout_rate,
              bool augment) {
    const lf::model_scale scale = parse_scale(scale_name);
    auto entries = lf::data::load_dataset(labels_csv);
    if (augment) entries = lf::data::augment_entries(entries);
    auto [train_set, test_set] = lf::data::split(std::move(entries), split_ratio, split_seed);
    lf::require(!train_set.empty(), lf::errc::empty_dataset, "train segment is empty");

    const lf::shape input = train_set.front().lfi.dims();
    lf::model_spec model = lf::build_alas_dads(input, scale, cfg.seed, dropout_rate);
    model.lambda = cfg.lambda;

    lf::train::train_result result = lf::train::train(model, train_set, cfg);

    fs::create_directories(out_dir);
    lf::save_checkpoint((fs::path(out_dir) / "model.alas").string(), result.model);
    std::ofstream hs((fs::path(out_dir) / "history.csv").string(), std::ios::binary);
    lf::require(hs.good(), lf::errc::io_error, "cannot open history.csv");
    lf::train::write_history_csv(hs, result.hist);
    std::cout << "trained on " << train_set.size() << " entries, held out " << test_set.size() << "\n";
    return exit_ok;
}

int run_eval(const std::string& labels_csv, const std::string& model_path, const std::string& out_path,
             double split_ratio, std::uint64_t split_seed, const std::string& segment) {
    const lf::model_spec model = lf::load_checkpoint(model_path);
    auto entries = lf::data::load_dataset(labels_csv);
    std::vector<lf::data::dataset_entry> chosen;
    if (segment == "all") {
        chosen = std::move(entries);
    } else {
        auto [train_set, test_set] = lf::data::split(std::move(entries), split_ratio, split_seed);
        chosen = segment == "train" ? std::move(train_set) : std::move(test_set);
    }
    const lf::train::metrics m = lf::train::evaluate(model, chosen);
    std::ofstream os(out_path, std::ios::binary);
    lf::require(os.good(), lf::errc::io_error, "cannot open " + out_path);
    lf::train::write_metrics_csv(os, m);
    std::cout << "rmse=" << lf::format_double(m.rmse)
              << " srocc=" << (m.srocc ? lf::format_double(*m.srocc) : "nan")
              << " plcc=" << (m.plcc ? lf::format_double(*m.plcc) : "nan") << "\n";
    return exit_ok;
}

int run_predict(const std::string& in_path, const std::string& model_path, const std::string& out_path) {
    const lf::model_spec model = lf::load_checkpoint(model_path);
    const lf::tensor t = load_input(in_path);
    const lf::prediction p = lf::predict(model, t);
    auto emit = [&](std::ostream& os) {
        os << "score," << lf::format_double(p.score) << "\n";
        os << "spatial";
        for (double value : p.spatial) os << ',' << lf::format_double(value);
        os << "\nangular";
        for (double value : p.angular) os << ',' << lf::format_double(value);
        os << "\n";
    };
    if (out_path.empty()) {
        emit(std::cout);
    } else {
        std::ofstream os(out_path, std::ios::binary);
        lf::require(os.good(), lf::errc::io_error, "cannot open " + out_path);
        emit(os);
        std::cout << "score," << lf::format_double(p.score) << "\n";
    }
    return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"light-field IQA kernels: separable convolutions, cost model, training"};
    app.require_subcommand(1);
    app.fallthrough();

    std::uint64_t seed = 1;
    std::string scale = "tiny";
    app.add_option("--seed", seed, "global random seed")->capture_default_str();
    app.add_option("--scale", scale, "model scale: full or tiny")->capture_default_str();

    auto* cost_cmd = app.add_subcommand("cost-report", "per-layer analytic vs measured MACs and params");
    std::string cost_out = "cost_report.csv";
    cost_cmd->add_option("--out", cost_out, "output CSV path")->capture_default_str();

    auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference check of every op's gradients");
    std::string grad_ops = "all";
    std::size_t grad_rounds = 5;
    grad_cmd->add_option("--ops", grad_ops, "op name or 'all'")->capture_default_str();
    grad_cmd->add_option("--rounds", grad_rounds, "random seeds per op")->capture_default_str();

    auto* feat_cmd = app.add_subcommand("features", "36-dim spatial and 8-dim angular features");
    std::vector<std::string> feat_inputs;
    std::string feat_out = "features.csv";
    feat_cmd->add_option("--in", feat_inputs, "input .lft files or manifests")->required();
    feat_cmd->add_option("--out", feat_out, "output CSV path")->capture_default_str();

    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic labeled dataset");
    std::size_t synth_count = 64;
    std::string synth_out = "synth_data";
    synth_cmd->add_option("--count", synth_count, "number of entries")->capture_default_str();
    synth_cmd->add_option("--out", synth_out, "output directory")->capture_default_str();

    auto* train_cmd = app.add_subcommand("train", "train ALAS-DADS on a labeled dataset");
    std::string train_data, train_out = "run";
    lf::train::config cfg;
    double split_ratio = 0.8;
    std::uint64_t split_seed = 7;
    double dropout_rate = 0.2;
    train_cmd->add_option("--data", train_data, "labels.csv of the dataset")->required();
    train_cmd->add_option("--out", train_out, "output directory")->capture_default_str();
    train_cmd->add_option("--batches", cfg.batches, "tiny batches")->capture_default_str();
    train_cmd->add_option("--m", cfg.m, "training draws per batch")->capture_default_str();
    train_cmd->add_option("--n", cfg.n, "validation draws per batch")->capture_default_str();
    train_cmd->add_option("--epochs", cfg.epoch_limit, "epoch limit per batch")->capture_default_str();
    train_cmd->add_option("--patience", cfg.patience, "early-stop patience")->capture_default_str();
    train_cmd->add_option("--lambda", cfg.lambda, "auxiliary loss weight")->capture_default_str();
    train_cmd->add_option("--lr", cfg.lr, "learning rate")->capture_default_str();
    train_cmd->add_option("--replicas", cfg.replicas, "deterministic replicas")->capture_default_str();
    train_cmd->add_option("--sync-every", cfg.sync_every, "batches between syncs")->capture_default_str();
    train_cmd->add_option("--split", split_ratio, "train fraction")->capture_default_str();
    train_cmd->add_option("--split-seed", split_seed, "split shuffle seed")->capture_default_str();
    train_cmd->add_option("--dropout", dropout_rate, "head dropout rate")->capture_default_str();
    bool train_augment = false;
    train_cmd->add_flag("--augment", train_augment, "expand entries eightfold before splitting");

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint: RMSE, SROCC, PLCC");
    std::string eval_data, eval_model, eval_out = "metrics.csv", eval_segment = "test";
    double eval_split = 0.8;
    std::uint64_t eval_split_seed = 7;
    eval_cmd->add_option("--data", eval_data, "labels.csv of the dataset")->required();
    eval_cmd->add_option("--model", eval_model, "checkpoint path")->required();
    eval_cmd->add_option("--out", eval_out, "output CSV path")->capture_default_str();
    eval_cmd->add_option("--segment", eval_segment, "test, train or all")->capture_default_str();
    eval_cmd->add_option("--split", eval_split, "train fraction")->capture_default_str();
    eval_cmd->add_option("--split-seed", eval_split_seed, "split shuffle seed")->capture_default_str();

    auto* pred_cmd = app.add_subcommand("predict", "score one LFI with a trained checkpoint");
    std::string pred_in, pred_model, pred_out;
    pred_cmd->add_option("--in", pred_in, "input .lft or manifest")->required();
    pred_cmd->add_option("--model", pred_model, "checkpoint path")->required();
    pred_cmd->add_option("--out", pred_out, "optional output CSV path");

    auto* aug_cmd = app.add_subcommand("augment", "write the 8 geometric variants of one LFI");
    std::string aug_in, aug_out = "augments";
    aug_cmd->add_option("--in", aug_in, "input .lft or manifest")->required();
    aug_cmd->add_option("--out", aug_out, "output directory")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_usage;
    }

    try {
        cfg.seed = seed;
        if (cost_cmd->parsed()) return run_cost_report(scale, cost_out, seed);
        if (grad_cmd->parsed()) return run_gradcheck(grad_ops, seed, grad_rounds);
        if (feat_cmd->parsed()) return run_features(feat_inputs, feat_out);
        if (synth_cmd->parsed()) return run_synth(synth_count, scale, synth_out, seed);
        if (train_cmd->parsed())
            return run_train(train_data, scale, train_out, cfg, split_ratio, split_seed, dropout_rate,
                             train_augment);
        if (eval_cmd->parsed())
            return run_eval(eval_data, eval_model, eval_out, eval_split, eval_split_seed, eval_segment);
        if (pred_cmd->parsed()) return run_predict(pred_in, pred_model, pred_out);
        if (aug_cmd->parsed()) return run_augment(aug_in, aug_out);
    } catch (const lf::error& e) {
        std::cerr << "lfqa: " << e.what() << "\n";
        return exit_usage;
    } catch (const std::exception& e) {
        std::cerr << "lfqa: " << e.what() << "\n";
        return exit_usage;
    }
    return exit_usage;
}
