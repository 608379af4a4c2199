#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "lf/autodiff.hpp"
#include "lf/data.hpp"
#include "lf/error.hpp"
#include "lf/features.hpp"
#include "lf/format.hpp"
#include "lf/model.hpp"
#include "lf/rng.hpp"
#include "lf/tensor.hpp"

namespace lf::train {

struct config {
    std::size_t m = 2;            // training draws per tiny batch (no replacement)
    std::size_t n = 2;            // validation draws per tiny batch (with replacement)
    std::size_t patience = 2;     // epochs without improvement before the batch stops
    std::size_t epoch_limit = 5;  // hard epoch cap per tiny batch
    std::size_t batches = 100;
    double lambda = 0.01;
    double lr = 1e-3;  // canonical Adam step size
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t seed = 1;
    std::size_t replicas = 1;
    std::size_t sync_every = 100;  // batches between replica syncs
    double min_improvement = 1e-6;

    void validate() const {
        require(m >= 1 && n >= 1 && epoch_limit >= 1 && patience >= 1 && batches >= 1 && replicas >= 1 &&
                    sync_every >= 1,
                errc::bad_argument, "train config counts must be >= 1");
        require(lr > 0.0 && beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0 && eps > 0.0,
                errc::bad_argument, "invalid optimizer hyperparameters");
        require(lambda >= 0.0, errc::bad_argument, "lambda must be non-negative");
    }
};

// Adam with the AMS gradient: the second-moment estimate entering the
// denominator is the elementwise running maximum, so the effective step size
// never grows back after a large gradient. Bias correction is applied to
// both moments.
struct optimizer_state {
    std::vector<std::vector<double>> m_w, v_w, vmax_w;
    std::vector<std::vector<double>> m_b, v_b, vmax_b;
    std::uint64_t steps = 0;

    static optimizer_state for_model(const model_spec& model) {
        optimizer_state st;
        const std::size_t n = model.steps.size();
        st.m_w.resize(n);
        st.v_w.resize(n);
        st.vmax_w.resize(n);
        st.m_b.resize(n);
        st.v_b.resize(n);
        st.vmax_b.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            st.m_w[i].assign(model.steps[i].layer.weights.size(), 0.0);
            st.v_w[i].assign(model.steps[i].layer.weights.size(), 0.0);
            st.vmax_w[i].assign(model.steps[i].layer.weights.size(), 0.0);
            st.m_b[i].assign(model.steps[i].layer.bias.size(), 0.0);
            st.v_b[i].assign(model.steps[i].layer.bias.size(), 0.0);
            st.vmax_b[i].assign(model.steps[i].layer.bias.size(), 0.0);
        }
        return st;
    }
};

namespace detail {

inline void adam_update(std::vector<double>& params, const std::vector<double>& grad,
                        std::vector<double>& m, std::vector<double>& v, std::vector<double>& vmax,
                        double corr1, double corr2, const config& c) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * grad[i];
        v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * grad[i] * grad[i];
        vmax[i] = std::max(vmax[i], v[i]);
        const double m_hat = m[i] / corr1;
        const double v_hat = vmax[i] / corr2;
        params[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
}

}  // namespace detail

inline void adam_amsgrad_step(model_spec& model, const gradients& g, optimizer_state& st,
                              const config& c) {
    require(g.weight.size() == model.steps.size() && g.bias.size() == model.steps.size(),
            errc::shape_mismatch, "gradient layout does not match the model");
    st.steps += 1;
    const double corr1 = 1.0 - std::pow(c.beta1, static_cast<double>(st.steps));
    const double corr2 = 1.0 - std::pow(c.beta2, static_cast<double>(st.steps));
    for (std::size_t i = 0; i < model.steps.size(); ++i) {
        layer_spec& l = model.steps[i].layer;
        require(g.weight[i].size() == l.weights.size() && g.bias[i].size() == l.bias.size(),
                errc::shape_mismatch, "gradient shape mismatch at step " + std::to_string(i));
        detail::adam_update(l.weights, g.weight[i], st.m_w[i], st.v_w[i], st.vmax_w[i], corr1, corr2, c);
        detail::adam_update(l.bias, g.bias[i], st.m_b[i], st.v_b[i], st.vmax_b[i], corr1, corr2, c);
    }
}

// Without-replacement draw queue: a seeded shuffle is consumed in order and
// reshuffled when exhausted, so every entry is drawn exactly once before any
// entry repeats.
class draw_queue {
public:
    draw_queue(std::size_t n, rng gen) : n_(n), gen_(gen) {}

    std::vector<std::size_t> draw(std::size_t count) {
        std::vector<std::size_t> out;
        out.reserve(count);
        while (out.size() < count) {
            if (queue_.empty()) refill();
            out.push_back(queue_.front());
            queue_.pop_front();
        }
        return out;
    }

private:
    void refill() {
        std::vector<std::size_t> order(n_);
        std::iota(order.begin(), order.end(), std::size_t{0});
        gen_.shuffle(order);
        queue_.assign(order.begin(), order.end());
    }

    std::size_t n_;
    rng gen_;
    std::deque<std::size_t> queue_;
};

struct history_row {
    std::size_t batch = 0;
    std::size_t epoch = 0;
    std::size_t replica = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_primary = 0.0;  // primary-task component of val_loss
};

struct history {
    std::vector<history_row> rows;

    const history_row& last_for_replica(std::size_t replica) const {
        for (auto it = rows.rbegin(); it != rows.rend(); ++it)
            if (it->replica == replica) return *it;
        fail(errc::bad_argument, "no history for replica " + std::to_string(replica));
    }
};

// CSV: batch,epoch,replica,train_loss,val_loss
inline void write_history_csv(std::ostream& os, const history& h) {
    os << "batch,epoch,replica,train_loss,val_loss\n";
    for (const auto& row : h.rows)
        os << row.batch << ',' << row.epoch << ',' << row.replica << ',' << format_double(row.train_loss)
           << ',' << format_double(row.val_loss) << '\n';
}

struct train_result {
    model_spec model;
    history hist;
    features::label_stats spatial_stats;
    features::label_stats angular_stats;
};

namespace detail {

struct prepared_entry {
    tensor input;  // normalized
    double score = 0.0;
    std::vector<double> spatial;  // z-scored
    std::vector<double> angular;  // z-scored
};

struct batch_losses {
    double primary = 0.0, spatial = 0.0, angular = 0.0, total = 0.0;
};

// Forward the given entries and return the three loss components.
inline batch_losses eval_losses(const model_spec& model, const std::vector<prepared_entry>& entries,
                                const std::vector<std::size_t>& ids, double lambda) {
    std::vector<double> y, y_hat;
    std::vector<std::vector<double>> s_true, s_hat, a_true, a_hat;
    for (std::size_t id : ids) {
        const prepared_entry& e = entries[id];
        auto outs = run_program(model.steps, e.input, model.head_outputs());
        y.push_back(e.score);
        y_hat.push_back(outs[0].data()[0]);
        s_true.push_back(e.spatial);
        s_hat.push_back(outs[1].data());
        a_true.push_back(e.angular);
        a_hat.push_back(outs[2].data());
    }
    batch_losses out;
    out.primary = loss_primary(y, y_hat);
    out.spatial = loss_feature(s_true, s_hat, s_true[0].size());
    out.angular = loss_feature(a_true, a_hat, a_true[0].size());
    out.total = loss_total(out.primary, out.spatial, out.angular, lambda);
    return out;
}

// One gradient step over a tiny batch: per-entry tapes are seeded with the
// analytic MSE derivatives (scaled by lambda for the auxiliary heads) and
// the parameter gradients are summed across entries.
inline double train_epoch(model_spec& model, optimizer_state& opt, const config& c,
                          const std::vector<prepared_entry>& entries,
                          const std::vector<std::size_t>& ids, rng& dropout_gen) {
    gradients total;
    bool first = true;
    double lp_acc = 0.0, ls_acc = 0.0, la_acc = 0.0;
    const double inv_m = 1.0 / static_cast<double>(ids.size());
    const std::size_t spatial_dim = entries[ids[0]].spatial.size();
    const std::size_t angular_dim = entries[ids[0]].angular.size();

    for (std::size_t id : ids) {
        const prepared_entry& e = entries[id];
        exec_options opt_exec;
        opt_exec.training = true;
        opt_exec.gen = &dropout_gen;
        const tape t = forward_record(model.steps, e.input, opt_exec);

        const double y_hat = t.values[model.primary_out].data()[0];
        const auto& s_hat = t.values[model.spatial_out].data();
        const auto& a_hat = t.values[model.angular_out].data();

        tensor seed_p = tensor::zeros({1, 1, 1, 1, 1});
        seed_p.data()[0] = 2.0 * (y_hat - e.score) * inv_m;
        lp_acc += (y_hat - e.score) * (y_hat - e.score) * inv_m;

        std::vector<std::pair<int, tensor>> seeds;
        seeds.emplace_back(model.primary_out, std::move(seed_p));
        if (c.lambda > 0.0) {
            tensor seed_s = tensor::zeros({1, 1, 1, 1, spatial_dim});
            for (std::size_t j = 0; j < spatial_dim; ++j) {
                const double d = s_hat[j] - e.spatial[j];
                seed_s.data()[j] = c.lambda * 2.0 * d * inv_m / static_cast<double>(spatial_dim);
                ls_acc += d * d * inv_m / static_cast<double>(spatial_dim);
            }
            tensor seed_a = tensor::zeros({1, 1, 1, 1, angular_dim});
            for (std::size_t j = 0; j < angular_dim; ++j) {
                const double d = a_hat[j] - e.angular[j];
                seed_a.data()[j] = c.lambda * 2.0 * d * inv_m / static_cast<double>(angular_dim);
                la_acc += d * d * inv_m / static_cast<double>(angular_dim);
            }
            seeds.emplace_back(model.spatial_out, std::move(seed_s));
            seeds.emplace_back(model.angular_out, std::move(seed_a));
        } else {
            for (std::size_t j = 0; j < spatial_dim; ++j) {
                const double d = s_hat[j] - e.spatial[j];
                ls_acc += d * d * inv_m / static_cast<double>(spatial_dim);
            }
            for (std::size_t j = 0; j < angular_dim; ++j) {
                const double d = a_hat[j] - e.angular[j];
                la_acc += d * d * inv_m / static_cast<double>(angular_dim);
            }
        }

        gradients g = backward(model.steps, t, seeds);
        if (first) {
            total = std::move(g);
            first = false;
        } else {
            for (std::size_t i = 0; i < total.weight.size(); ++i) {
                for (std::size_t j = 0; j < total.weight[i].size(); ++j)
                    total.weight[i][j] += g.weight[i][j];
                for (std::size_t j = 0; j < total.bias[i].size(); ++j) total.bias[i][j] += g.bias[i][j];
            }
        }
    }
    adam_amsgrad_step(model, total, opt, c);
    return loss_total(lp_acc, ls_acc, la_acc, c.lambda);
}

}  // namespace detail

// The tiny-batch stochastic scheme: for every batch, m training entries are
// drawn without replacement (reshuffling once the pool is exhausted) and n
// validation entries with replacement; up to epoch_limit gradient steps
// minimize the lambda-weighted total loss, stopping early after `patience`
// epochs without a validation improvement of at least min_improvement.
// With replicas > 1, every sync_every batches all replicas adopt the
// parameters of the replica with the lowest current validation loss.
inline train_result train(const model_spec& model, const std::vector<data::dataset_entry>& train_set,
                          const config& c) {
    c.validate();
    require(!train_set.empty(), errc::empty_dataset, "training set is empty");
    for (const auto& e : train_set) {
        require(e.lfi.dims() == model.input, errc::shape_mismatch,
                "entry shape " + e.lfi.dims().str() + " != model input " + model.input.str());
        require(e.label.spatial.size() == 36 && e.label.angular.size() == 8, errc::dimension_mismatch,
                "labels must carry 36-dim spatial and 8-dim angular features");
    }

    // Preprocess once: input normalization and z-scored auxiliary labels
    // (statistics from this training set; scores are left on their scale).
    std::vector<std::vector<double>> spatial_rows, angular_rows;
    for (const auto& e : train_set) {
        spatial_rows.push_back(e.label.spatial);
        angular_rows.push_back(e.label.angular);
    }
    train_result result;
    if (train_set.size() >= 2) {
        result.spatial_stats = features::normalize_labels(spatial_rows);
        result.angular_stats = features::normalize_labels(angular_rows);
    } else {
        result.spatial_stats.mean.assign(36, 0.0);
        result.spatial_stats.stddev.assign(36, 1.0);
        result.angular_stats.mean.assign(8, 0.0);
        result.angular_stats.stddev.assign(8, 1.0);
    }
    std::vector<detail::prepared_entry> prepared(train_set.size());
    for (std::size_t i = 0; i < train_set.size(); ++i) {
        prepared[i].input = normalize(train_set[i].lfi);
        prepared[i].score = train_set[i].label.score;
        prepared[i].spatial = train_set.size() >= 2
                                  ? spatial_rows[i]
                                  : features::apply_label_stats(train_set[i].label.spatial, result.spatial_stats);
        prepared[i].angular = train_set.size() >= 2
                                  ? angular_rows[i]
                                  : features::apply_label_stats(train_set[i].label.angular, result.angular_stats);
    }

    struct replica_state {
        model_spec model;
        optimizer_state opt;
        draw_queue draws;
        rng val_gen;
        rng dropout_gen;
        double last_val = 0.0;
    };
    rng root(c.seed);
    std::vector<replica_state> reps;
    for (std::size_t r = 0; r < c.replicas; ++r) {
        rng stream = root.fork(r + 1);
        reps.push_back(replica_state{model, optimizer_state::for_model(model),
                                     draw_queue(prepared.size(), stream.fork(1)), stream.fork(2),
                                     stream.fork(3), 0.0});
    }

    for (std::size_t batch = 0; batch < c.batches; ++batch) {
        for (std::size_t r = 0; r < reps.size(); ++r) {
            replica_state& rep = reps[r];
            const std::vector<std::size_t> train_ids = rep.draws.draw(c.m);
            std::vector<std::size_t> val_ids(c.n);
            for (auto& id : val_ids) id = rep.val_gen.below(prepared.size());

            double best_val = std::numeric_limits<double>::infinity();
            std::size_t stall = 0;
            for (std::size_t epoch = 0; epoch < c.epoch_limit; ++epoch) {
                const double train_loss =
                    detail::train_epoch(rep.model, rep.opt, c, prepared, train_ids, rep.dropout_gen);
                const detail::batch_losses val =
                    detail::eval_losses(rep.model, prepared, val_ids, c.lambda);
                result.hist.rows.push_back({batch, epoch, r, train_loss, val.total, val.primary});
                rep.last_val = val.total;
                if (best_val - val.total >= c.min_improvement) {
                    best_val = val.total;
                    stall = 0;
                } else if (++stall >= c.patience) {
                    break;
                }
            }
        }
        if (reps.size() > 1 && (batch + 1) % c.sync_every == 0) {
            std::size_t best = 0;
            for (std::size_t r = 1; r < reps.size(); ++r)
                if (reps[r].last_val < reps[best].last_val) best = r;
            for (std::size_t r = 0; r < reps.size(); ++r) {
                if (r == best) continue;
                reps[r].model = reps[best].model;
                reps[r].opt = reps[best].opt;
            }
        }
    }

    std::size_t best = 0;
    for (std::size_t r = 1; r < reps.size(); ++r)
        if (reps[r].last_val < reps[best].last_val) best = r;
    result.model = std::move(reps[best].model);
    return result;
}

// ---------------------------------------------------------------------------
// Evaluation metrics.
// ---------------------------------------------------------------------------

inline double rmse(const std::vector<double>& y, const std::vector<double>& y_hat) {
    require(!y.empty() && y.size() == y_hat.size(), errc::length_mismatch,
            "rmse needs nonempty vectors of equal length");
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double d = y[i] - y_hat[i];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(y.size()));
}

inline double plcc(const std::vector<double>& y, const std::vector<double>& y_hat) {
    require(y.size() == y_hat.size(), errc::length_mismatch, "plcc needs equal lengths");
    require(y.size() >= 2, errc::length_mismatch, "plcc needs at least 2 samples");
    const double n = static_cast<double>(y.size());
    double mean_a = 0.0, mean_b = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        mean_a += y[i];
        mean_b += y_hat[i];
    }
    mean_a /= n;
    mean_b /= n;
    double cov = 0.0, var_a = 0.0, var_b = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double da = y[i] - mean_a, db = y_hat[i] - mean_b;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    require(var_a > 0.0 && var_b > 0.0, errc::zero_variance, "correlation of a constant vector");
    return cov / std::sqrt(var_a * var_b);
}

// 1-based fractional ranks with average-rank tie handling.
inline std::vector<double> average_ranks(const std::vector<double>& v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size(), 0.0);
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
        i = j + 1;
    }
    return ranks;
}

inline double srocc(const std::vector<double>& y, const std::vector<double>& y_hat) {
    require(y.size() == y_hat.size(), errc::length_mismatch, "srocc needs equal lengths");
    require(y.size() >= 2, errc::length_mismatch, "srocc needs at least 2 samples");
    return plcc(average_ranks(y), average_ranks(y_hat));
}

struct metrics {
    double rmse = 0.0;
    std::optional<double> srocc;
    std::optional<double> plcc;
};

// CSV: rmse,srocc,plcc (correlations print as nan when undefined).
inline void write_metrics_csv(std::ostream& os, const metrics& m) {
    os << "rmse,srocc,plcc\n";
    os << format_double(m.rmse) << ',' << (m.srocc ? format_double(*m.srocc) : "nan") << ','
       << (m.plcc ? format_double(*m.plcc) : "nan") << '\n';
}

// Scores the whole test set. ZeroVariance (constant predictions or labels)
// suppresses the correlations but never the RMSE.
inline metrics evaluate(const model_spec& model, const std::vector<data::dataset_entry>& test_set) {
    require(!test_set.empty(), errc::empty_dataset, "test set is empty");
    std::vector<double> y, y_hat;
    for (const auto& e : test_set) {
        y.push_back(e.label.score);
        y_hat.push_back(predict(model, e.lfi).score);
    }
    metrics out;
    out.rmse = rmse(y, y_hat);
    if (y.size() >= 2) {
        try {
            out.srocc = srocc(y, y_hat);
        } catch (const error& e) {
            if (e.code() != errc::zero_variance) throw;
        }
        try {
            out.plcc = plcc(y, y_hat);
        } catch (const error& e) {
            if (e.code() != errc::zero_variance) throw;
        }
    }
    return out;
}

}  // namespace lf::train
