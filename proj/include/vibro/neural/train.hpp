#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <chrono>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include "vibro/error.hpp"
#include "vibro/neural/model.hpp"
#include "vibro/neural/params.hpp"
#include "vibro/parallel.hpp"
#include "vibro/rng.hpp"

namespace vibro::neural {

struct TrainConfig {
    int batch_size = 256;
    int max_iterations = 500;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 1;
    int patience = 0; // early stop on validation loss; 0 disables
    // per-iteration validation subset size; 0 evaluates the full split
    int val_eval_size = 0;
    std::string lr_schedule = "constant"; // constant | cosine
    double lr_final = 1e-5;               // cosine floor

    void validate() const {
        if (batch_size < 1) throw ValidationError("train.batch_size: must be >= 1");
        if (max_iterations < 1) throw ValidationError("train.max_iterations: must be >= 1");
        if (learning_rate <= 0) throw ValidationError("train.learning_rate: must be > 0");
        if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
            throw ValidationError("train: beta1/beta2 must be in [0, 1)");
        if (epsilon <= 0) throw ValidationError("train.epsilon: must be > 0");
        if (patience < 0) throw ValidationError("train.patience: must be >= 0");
        if (val_eval_size < 0) throw ValidationError("train.val_eval_size: must be >= 0");
        if (lr_schedule != "constant" && lr_schedule != "cosine")
            throw ValidationError("train.lr_schedule: constant or cosine");
    }

    double lr_at(int iteration) const {
        if (lr_schedule == "cosine") {
            const double u = static_cast<double>(iteration) /
                             static_cast<double>(std::max(1, max_iterations - 1));
            return lr_final + (learning_rate - lr_final) * 0.5 *
                                  (1.0 + std::cos(3.141592653589793 * u));
        }
        return learning_rate;
    }
};

// First/second-moment state with bias correction.
struct AdamState {
    std::vector<double> m, v;
    std::int64_t step = 0;

    static AdamState for_params(const ModelParams& p) {
        AdamState s;
        s.m.assign(p.total_count(), 0.0);
        s.v.assign(p.total_count(), 0.0);
        return s;
    }
};

inline void adam_step(ModelParams& params, std::span<const double> grad, AdamState& state,
                      double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
    if (grad.size() != params.total_count() || state.m.size() != grad.size())
        throw ValidationError("adam_step: shape mismatch");
    ++state.step;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < grad.size(); ++i) {
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grad[i];
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grad[i] * grad[i];
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        params.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

// One training example: the m per-signal feature bundles plus the clean target.
struct TrainRecord {
    std::vector<dsp::FeatureBundle> bundles;
    std::vector<double> clean;
};

struct IterStats {
    int iteration = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct TrainOutcome {
    ModelParams params; // best-validation parameters
    std::vector<IterStats> history;
    int best_iteration = -1;
    double best_val_loss = 0.0;
    LossBreakdown last_breakdown;
};

namespace detail {

// Deterministic block-parallel loss evaluation: per-record values are summed
// in record order regardless of worker count.
inline double mean_loss(std::span<const TrainRecord> records, std::span<const std::size_t> subset,
                        const ModelParams& params, const ModelConfig& cfg,
                        const LossWeights& weights) {
    const std::size_t n = subset.size();
    std::vector<double> per_record(n, 0.0);
    parallel_for(n, [&](std::size_t i) {
        const auto& rec = records[subset[i]];
        const auto res = model_forward(rec.bundles, params, cfg, RunMode::eval);
        const auto b = loss(res.yhat, rec.clean, params, res, weights);
        per_record[i] = b.data + b.pairwise;
    });
    double acc = 0.0;
    for (double v : per_record) acc += v;
    double total = acc / static_cast<double>(n);
    total += weights.lambda_lstm * group_mean_square(params, ParamGroup::lstm);
    total += weights.lambda_cnn * group_mean_square(params, ParamGroup::cnn);
    total += weights.lambda_nn * group_mean_square(params, ParamGroup::nn);
    return total;
}

} // namespace detail

// Mini-batch training loop with seeded shuffling, deterministic block-wise
// gradient reduction, and best-validation parameter selection.
inline TrainOutcome train(std::span<const TrainRecord> train_split,
                          std::span<const TrainRecord> val_split, const ModelConfig& model_cfg,
                          const TrainConfig& train_cfg, const LossWeights& weights) {
    model_cfg.validate();
    train_cfg.validate();
    weights.validate();
    if (train_split.empty() || val_split.empty())
        throw ValidationError("train: splits must be nonempty");

    ModelParams params = ModelParams::build(model_cfg);
    params.init(derive_seed(train_cfg.seed, {0x696e6974ULL}));
    AdamState adam = AdamState::for_params(params);

    // fixed validation subset for the per-iteration loss
    std::vector<std::size_t> val_subset(val_split.size());
    std::iota(val_subset.begin(), val_subset.end(), std::size_t{0});
    if (train_cfg.val_eval_size > 0 &&
        static_cast<std::size_t>(train_cfg.val_eval_size) < val_subset.size()) {
        Rng vr(derive_seed(train_cfg.seed, {0x76616cULL}));
        for (std::size_t i = val_subset.size(); i-- > 1;)
            std::swap(val_subset[i], val_subset[static_cast<std::size_t>(vr.uniform_int(0, static_cast<std::int64_t>(i)))]);
        val_subset.resize(static_cast<std::size_t>(train_cfg.val_eval_size));
        std::sort(val_subset.begin(), val_subset.end());
    }

    const std::size_t n_train = train_split.size();
    std::vector<std::size_t> order(n_train);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t cursor = n_train; // forces a shuffle on the first batch
    Rng shuffle_rng(derive_seed(train_cfg.seed, {0x73687566ULL}));

    const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(train_cfg.batch_size),
                                                    n_train);
    const std::size_t grad_block = 32;
    const std::size_t n_blocks = (batch + grad_block - 1) / grad_block;
    std::vector<std::vector<double>> block_grads(n_blocks);
    std::vector<double> block_data(n_blocks), block_pair(n_blocks);
    std::vector<double> grad(params.total_count(), 0.0);

    TrainOutcome out;
    out.params = params;
    out.best_val_loss = std::numeric_limits<double>::infinity();

    for (int iter = 0; iter < train_cfg.max_iterations; ++iter) {
        std::vector<std::size_t> batch_idx(batch);
        for (std::size_t i = 0; i < batch; ++i) {
            if (cursor == n_train) {
                for (std::size_t j = n_train; j-- > 1;)
                    std::swap(order[j],
                              order[static_cast<std::size_t>(shuffle_rng.uniform_int(0, static_cast<std::int64_t>(j)))]);
                cursor = 0;
            }
            batch_idx[i] = order[cursor++];
        }

        const double data_scale = 1.0 / static_cast<double>(batch);
        const auto t0 = std::chrono::steady_clock::now();
        parallel_for_blocks(batch, grad_block, [&](std::size_t b, std::size_t lo, std::size_t hi) {
            auto& g = block_grads[b];
            g.assign(params.total_count(), 0.0);
            double data_acc = 0.0, pair_acc = 0.0;
            for (std::size_t i = lo; i < hi; ++i) {
                const auto& rec = train_split[batch_idx[i]];
                Rng drop_rng(derive_seed(train_cfg.seed,
                                         {0x64726f70ULL, static_cast<std::uint64_t>(iter),
                                          static_cast<std::uint64_t>(batch_idx[i])}));
                const auto res = model_forward(rec.bundles, params, model_cfg, RunMode::train,
                                               &drop_rng);
                const auto bd = loss_backward(rec.bundles, rec.clean, params, model_cfg, res,
                                              weights, g, data_scale, false);
                data_acc += bd.data;
                pair_acc += bd.pairwise;
            }
            block_data[b] = data_acc;
            block_pair[b] = pair_acc;
        });
        const auto t1 = std::chrono::steady_clock::now();
        std::fill(grad.begin(), grad.end(), 0.0);
        double data_sum = 0.0, pair_sum = 0.0;
        for (std::size_t b = 0; b < n_blocks; ++b) {
            const auto& g = block_grads[b];
            for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += g[i];
            data_sum += block_data[b];
            pair_sum += block_pair[b];
        }
        LossBreakdown batch_loss;
        batch_loss.data = data_sum * data_scale;
        batch_loss.pairwise = pair_sum * data_scale;
        batch_loss.reg_lstm =
            weights.lambda_lstm * detail::group_mean_square(params, ParamGroup::lstm);
        batch_loss.reg_cnn = weights.lambda_cnn * detail::group_mean_square(params, ParamGroup::cnn);
        batch_loss.reg_nn = weights.lambda_nn * detail::group_mean_square(params, ParamGroup::nn);
        batch_loss.total = batch_loss.data + batch_loss.pairwise + batch_loss.reg_lstm +
                           batch_loss.reg_cnn + batch_loss.reg_nn;
        const auto check_term = [&](double v, const char* term) {
            if (!std::isfinite(v))
                throw RuntimeError("train: non-finite " + std::string(term) + " at iteration " +
                                   std::to_string(iter));
        };
        check_term(batch_loss.data, "data term");
        check_term(batch_loss.pairwise, "pairwise term");
        check_term(batch_loss.total, "total loss");

        // regularizer gradients enter once per batch
        const auto add_reg = [&](ParamGroup ggroup, double lambda) {
            if (lambda == 0.0) return;
            const double n = static_cast<double>(params.group_count(ggroup));
            for (const auto& blk : params.blocks) {
                if (blk.group != ggroup) continue;
                const double* p = params.data.data() + blk.offset;
                double* dp = grad.data() + blk.offset;
                for (std::size_t i = 0; i < blk.size(); ++i) dp[i] += 2.0 * lambda * p[i] / n;
            }
        };
        add_reg(ParamGroup::lstm, weights.lambda_lstm);
        add_reg(ParamGroup::cnn, weights.lambda_cnn);
        add_reg(ParamGroup::nn, weights.lambda_nn);

        const auto t2 = std::chrono::steady_clock::now();
        const double lr = train_cfg.lr_at(iter);
        adam_step(params, grad, adam, lr, train_cfg.beta1, train_cfg.beta2, train_cfg.epsilon);

        const auto t3 = std::chrono::steady_clock::now();
        const double val_loss = detail::mean_loss(val_split, val_subset, params, model_cfg, weights);
        const auto t4 = std::chrono::steady_clock::now();
        const auto ms = [](auto a, auto b){ return std::chrono::duration_cast<std::chrono::milliseconds>(b-a).count(); };
        std::cerr << "iter " << iter << ": grads " << ms(t0,t1) << "ms reduce " << ms(t1,t2) << "ms adam " << ms(t2,t3) << "ms val " << ms(t3,t4) << "ms\n";
        check_term(val_loss, "validation loss");
        out.history.push_back({iter, lr, batch_loss.total, val_loss});
        out.last_breakdown = batch_loss;
        if (val_loss < out.best_val_loss) {
            out.best_val_loss = val_loss;
            out.best_iteration = iter;
            out.params = params;
        }
        if (train_cfg.patience > 0 && iter - out.best_iteration >= train_cfg.patience) break;
    }
    return out;
}

struct GradCheckBlock {
    std::string name;
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    bool applicable = true; // false when every gradient in the block is ~0
};

struct GradCheckReport {
    std::vector<GradCheckBlock> blocks;
    double max_rel_error = 0.0;
};

// Central-difference verification of the full-loss gradient for every
// parameter block on one random record.
inline GradCheckReport grad_check(const ModelConfig& cfg, std::uint64_t seed,
                                  const LossWeights& weights = {}, double h = 1e-5) {
    cfg.validate();
    ModelParams params = ModelParams::build(cfg);
    params.init(seed);

    Rng rng(derive_seed(seed, {0x67636bULL}));
    const std::size_t t = static_cast<std::size_t>(cfg.series_length);
    std::vector<dsp::FeatureBundle> bundles(static_cast<std::size_t>(cfg.signal_count));
    for (auto& b : bundles) {
        b.series_length = t;
        b.lstm_input.resize(static_cast<std::size_t>(cfg.lstm_inputs) * t);
        b.cnn_input.resize(static_cast<std::size_t>(cfg.cnn_inputs) * t);
        for (auto& v : b.lstm_input) v = rng.normal(0.0, 1.0);
        for (auto& v : b.cnn_input) v = rng.normal(0.0, 1.0);
    }
    std::vector<double> clean(t);
    for (auto& v : clean) v = rng.normal(0.0, 1.0);

    std::vector<double> analytic(params.total_count(), 0.0);
    {
        const auto res = model_forward(bundles, params, cfg, RunMode::eval);
        loss_backward(bundles, clean, params, cfg, res, weights, analytic);
    }
    const auto eval_loss = [&]() {
        const auto res = model_forward(bundles, params, cfg, RunMode::eval);
        return loss(res.yhat, clean, params, res, weights).total;
    };

    GradCheckReport report;
    for (const auto& blk : params.blocks) {
        GradCheckBlock gb;
        gb.name = blk.name;
        bool any = false;
        for (std::size_t i = 0; i < blk.size(); ++i) {
            double& p = params.data[blk.offset + i];
            const double saved = p;
            p = saved + h;
            const double lp = eval_loss();
            p = saved - h;
            const double lm = eval_loss();
            p = saved;
            const double numeric = (lp - lm) / (2.0 * h);
            const double a = analytic[blk.offset + i];
            const double abs_err = std::abs(a - numeric);
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
            gb.max_abs_error = std::max(gb.max_abs_error, abs_err);
            gb.max_rel_error = std::max(gb.max_rel_error, abs_err / denom);
            if (std::abs(a) > 1e-12 || std::abs(numeric) > 1e-12) any = true;
        }
        gb.applicable = any;
        report.max_rel_error = std::max(report.max_rel_error, gb.max_rel_error);
        report.blocks.push_back(std::move(gb));
    }
    return report;
}

// Finite-difference check of the plain dense stack (the purely affine path).
inline double dense_grad_check(std::uint64_t seed, double h = 1e-6) {
    Rng rng(seed);
    const std::size_t in = 7, mid = 5, out = 4;
    std::vector<double> x(in), w1(mid * in), b1(mid), w2(out * mid), b2(out), target(out);
    for (auto* vec : {&x, &w1, &b1, &w2, &b2, &target})
        for (auto& v : *vec) v = rng.normal(0.0, 1.0);

    const auto forward = [&]() {
        std::vector<double> pre1;
        auto h1 = dense_forward(x, w1, b1, Activation::relu, &pre1);
        auto y = dense_forward(h1, w2, b2, Activation::linear);
        double l = 0.0;
        for (std::size_t i = 0; i < out; ++i) l += (y[i] - target[i]) * (y[i] - target[i]);
        return l;
    };

    // analytic
    std::vector<double> pre1;
    auto h1 = dense_forward(x, w1, b1, Activation::relu, &pre1);
    auto y = dense_forward(h1, w2, b2, Activation::linear);
    std::vector<double> dy(out);
    for (std::size_t i = 0; i < out; ++i) dy[i] = 2.0 * (y[i] - target[i]);
    std::vector<double> dw2(w2.size(), 0.0), db2(b2.size(), 0.0), dw1(w1.size(), 0.0),
        db1(b1.size(), 0.0);
    auto dh1 = dense_backward(h1, w2, y, dy, Activation::linear, dw2, db2);
    dense_backward(x, w1, pre1, dh1, Activation::relu, dw1, db1);

    double worst = 0.0;
    const auto check = [&](std::vector<double>& vec, const std::vector<double>& dvec) {
        for (std::size_t i = 0; i < vec.size(); ++i) {
            const double saved = vec[i];
            vec[i] = saved + h;
            const double lp = forward();
            vec[i] = saved - h;
            const double lm = forward();
            vec[i] = saved;
            const double numeric = (lp - lm) / (2.0 * h);
            const double denom = std::max({std::abs(dvec[i]), std::abs(numeric), 1e-6});
            worst = std::max(worst, std::abs(dvec[i] - numeric) / denom);
        }
    };
    check(w1, dw1);
    check(b1, db1);
    check(w2, dw2);
    check(b2, db2);
    return worst;
}

} // namespace vibro::neural
