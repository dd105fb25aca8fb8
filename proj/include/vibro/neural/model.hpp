#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "vibro/error.hpp"
#include "vibro/features.hpp"
#include "vibro/neural/layers.hpp"
#include "vibro/neural/lstm.hpp"
#include "vibro/neural/params.hpp"
#include "vibro/rng.hpp"

namespace vibro::neural {

enum class RunMode { train, eval };

struct BranchCache {
    LstmDirCache fwd, bwd;
    std::vector<double> lstm_out;     // T x 2H, dropout already applied
    std::vector<double> dropout_mask; // T x 2H scale factors; empty in eval mode
    std::vector<double> embedding;    // 4H

    std::vector<std::vector<double>> conv_in;  // per layer input (C x T)
    std::vector<std::vector<double>> conv_pre; // per layer pre-activation
    std::vector<std::vector<double>> relu_out; // per layer post-activation
    std::vector<std::vector<std::size_t>> pool_arg;
    std::vector<double> cnn_flat;
};

struct ForwardResult {
    std::vector<double> yhat;
    std::vector<BranchCache> branches; // one per signal
    std::vector<double> fc_in;
    std::vector<double> fc1_pre, fc1_out, fc2_pre, fc2_out;

    const std::vector<double>& lstm_embedding(std::size_t signal) const {
        return branches[signal].embedding;
    }
};

namespace detail {

struct LstmBlockIdx {
    std::size_t wx_f, wh_f, b_f, wx_b, wh_b, b_b;
};

inline LstmBlockIdx lstm_blocks(const ModelParams& p) {
    return {p.block_index("lstm.fwd.Wx"), p.block_index("lstm.fwd.Wh"), p.block_index("lstm.fwd.b"),
            p.block_index("lstm.bwd.Wx"), p.block_index("lstm.bwd.Wh"), p.block_index("lstm.bwd.b")};
}

} // namespace detail

// Recurrent branch: bidirectional pass, per-step concatenation, inverted
// dropout in train mode, then the pooled fixed-size embedding
// [mean_t h_t (2H) | h_fwd(T-1) (H) | h_bwd(0) (H)].
inline void lstm_branch_forward(std::span<const double> lstm_input, const ModelConfig& cfg,
                                const ModelParams& params, RunMode mode, Rng* rng,
                                BranchCache& cache) {
    const std::size_t t = static_cast<std::size_t>(cfg.series_length);
    const std::size_t h = static_cast<std::size_t>(cfg.lstm_hidden);
    const std::size_t in = static_cast<std::size_t>(cfg.lstm_inputs);
    const auto idx = detail::lstm_blocks(params);
    lstm_dir_forward(lstm_input, in, t, params.view(idx.wx_f), params.view(idx.wh_f),
                     params.view(idx.b_f), h, false, cache.fwd);
    lstm_dir_forward(lstm_input, in, t, params.view(idx.wx_b), params.view(idx.wh_b),
                     params.view(idx.b_b), h, true, cache.bwd);

    // concatenated per-step outputs; backward direction step s covers time T-1-s
    cache.lstm_out.assign(t * 2 * h, 0.0);
    for (std::size_t time = 0; time < t; ++time) {
        const double* hf = cache.fwd.h.data() + time * h;
        const double* hb = cache.bwd.h.data() + (t - 1 - time) * h;
        double* out = cache.lstm_out.data() + time * 2 * h;
        std::copy(hf, hf + h, out);
        std::copy(hb, hb + h, out + h);
    }

    if (mode == RunMode::train && cfg.dropout > 0.0) {
        if (!rng) throw RuntimeError("lstm_branch_forward: train mode needs an rng");
        cache.dropout_mask.assign(t * 2 * h, 0.0);
        const double keep = 1.0 - cfg.dropout;
        for (std::size_t i = 0; i < cache.dropout_mask.size(); ++i)
            cache.dropout_mask[i] = rng->uniform01() < keep ? 1.0 / keep : 0.0;
        for (std::size_t i = 0; i < cache.lstm_out.size(); ++i)
            cache.lstm_out[i] *= cache.dropout_mask[i];
    } else {
        cache.dropout_mask.clear();
    }

    cache.embedding.assign(4 * h, 0.0);
    for (std::size_t time = 0; time < t; ++time) {
        const double* out = cache.lstm_out.data() + time * 2 * h;
        for (std::size_t k = 0; k < 2 * h; ++k) cache.embedding[k] += out[k];
    }
    const double inv_t = 1.0 / static_cast<double>(t);
    for (std::size_t k = 0; k < 2 * h; ++k) cache.embedding[k] *= inv_t;
    const double* last = cache.lstm_out.data() + (t - 1) * 2 * h;
    for (std::size_t k = 0; k < h; ++k) cache.embedding[2 * h + k] = last[k];
    const double* first = cache.lstm_out.data();
    for (std::size_t k = 0; k < h; ++k) cache.embedding[3 * h + k] = first[h + k];
}

inline void lstm_branch_backward(std::span<const double> lstm_input, const ModelConfig& cfg,
                                 const ModelParams& params, const BranchCache& cache,
                                 std::span<const double> d_embedding, std::span<double> grad) {
    const std::size_t t = static_cast<std::size_t>(cfg.series_length);
    const std::size_t h = static_cast<std::size_t>(cfg.lstm_hidden);
    const std::size_t in = static_cast<std::size_t>(cfg.lstm_inputs);

    std::vector<double> d_out(t * 2 * h, 0.0);
    const double inv_t = 1.0 / static_cast<double>(t);
    for (std::size_t time = 0; time < t; ++time) {
        double* d = d_out.data() + time * 2 * h;
        for (std::size_t k = 0; k < 2 * h; ++k) d[k] += d_embedding[k] * inv_t;
    }
    for (std::size_t k = 0; k < h; ++k) d_out[(t - 1) * 2 * h + k] += d_embedding[2 * h + k];
    for (std::size_t k = 0; k < h; ++k) d_out[h + k] += d_embedding[3 * h + k];

    if (!cache.dropout_mask.empty())
        for (std::size_t i = 0; i < d_out.size(); ++i) d_out[i] *= cache.dropout_mask[i];

    // split into per-direction step-ordered gradients
    std::vector<double> dh_f(t * h), dh_b(t * h);
    for (std::size_t time = 0; time < t; ++time) {
        const double* d = d_out.data() + time * 2 * h;
        std::copy(d, d + h, dh_f.data() + time * h);
        std::copy(d + h, d + 2 * h, dh_b.data() + (t - 1 - time) * h);
    }
    const auto idx = detail::lstm_blocks(params);
    const auto& blocks = params.blocks;
    lstm_dir_backward(lstm_input, in, t, params.view(idx.wx_f), params.view(idx.wh_f), h, false,
                      cache.fwd, dh_f, grad.subspan(blocks[idx.wx_f].offset, blocks[idx.wx_f].size()),
                      grad.subspan(blocks[idx.wh_f].offset, blocks[idx.wh_f].size()),
                      grad.subspan(blocks[idx.b_f].offset, blocks[idx.b_f].size()));
    lstm_dir_backward(lstm_input, in, t, params.view(idx.wx_b), params.view(idx.wh_b), h, true,
                      cache.bwd, dh_b, grad.subspan(blocks[idx.wx_b].offset, blocks[idx.wx_b].size()),
                      grad.subspan(blocks[idx.wh_b].offset, blocks[idx.wh_b].size()),
                      grad.subspan(blocks[idx.b_b].offset, blocks[idx.b_b].size()));
}

inline void cnn_branch_forward(std::span<const double> cnn_input, const ModelConfig& cfg,
                               const ModelParams& params, BranchCache& cache) {
    std::size_t c_in = static_cast<std::size_t>(cfg.cnn_inputs);
    std::size_t t = static_cast<std::size_t>(cfg.series_length);
    cache.conv_in.clear();
    cache.conv_pre.clear();
    cache.relu_out.clear();
    cache.pool_arg.clear();
    std::vector<double> cur(cnn_input.begin(), cnn_input.end());
    for (std::size_t l = 0; l < cfg.cnn_layers.size(); ++l) {
        const auto& spec = cfg.cnn_layers[l];
        const auto wi = params.block_index("cnn." + std::to_string(l) + ".W");
        const auto bi = params.block_index("cnn." + std::to_string(l) + ".b");
        cache.conv_in.push_back(cur);
        auto pre = conv1d_same(cur, c_in, t, params.view(wi), params.view(bi),
                               static_cast<std::size_t>(spec.kernel));
        cache.conv_pre.push_back(pre);
        for (auto& v : pre) v = std::max(v, 0.0);
        cache.relu_out.push_back(pre);
        std::vector<std::size_t> arg;
        cur = maxpool1d(pre, static_cast<std::size_t>(spec.channels), t,
                        static_cast<std::size_t>(spec.pool), &arg);
        cache.pool_arg.push_back(std::move(arg));
        c_in = static_cast<std::size_t>(spec.channels);
        t = (t + static_cast<std::size_t>(spec.pool) - 1) / static_cast<std::size_t>(spec.pool);
    }
    cache.cnn_flat = std::move(cur);
}

inline void cnn_branch_backward(const ModelConfig& cfg, const ModelParams& params,
                                const BranchCache& cache, std::span<const double> d_flat,
                                std::span<double> grad) {
    std::vector<std::size_t> widths(cfg.cnn_layers.size());
    std::vector<double> d_cur(d_flat.begin(), d_flat.end());
    for (std::size_t l = cfg.cnn_layers.size(); l-- > 0;) {
        const auto& spec = cfg.cnn_layers[l];
        const std::size_t c_out = static_cast<std::size_t>(spec.channels);
        const std::size_t c_in =
            l == 0 ? static_cast<std::size_t>(cfg.cnn_inputs)
                   : static_cast<std::size_t>(cfg.cnn_layers[l - 1].channels);
        std::size_t t = static_cast<std::size_t>(cfg.series_length);
        for (std::size_t j = 0; j < l; ++j)
            t = (t + static_cast<std::size_t>(cfg.cnn_layers[j].pool) - 1) /
                static_cast<std::size_t>(cfg.cnn_layers[j].pool);

        auto d_relu = maxpool1d_backward(d_cur, c_out, t, static_cast<std::size_t>(spec.pool),
                                         cache.pool_arg[l]);
        const auto& pre = cache.conv_pre[l];
        for (std::size_t i = 0; i < d_relu.size(); ++i)
            if (pre[i] <= 0.0) d_relu[i] = 0.0;
        const auto wi = params.block_index("cnn." + std::to_string(l) + ".W");
        const auto bi = params.block_index("cnn." + std::to_string(l) + ".b");
        d_cur = conv1d_same_backward(cache.conv_in[l], c_in, t, params.view(wi),
                                     static_cast<std::size_t>(spec.kernel), d_relu,
                                     grad.subspan(params.blocks[wi].offset, params.blocks[wi].size()),
                                     grad.subspan(params.blocks[bi].offset, params.blocks[bi].size()));
    }
}

// Full hybrid forward over the m per-signal bundles. Branch parameters are
// shared across signals; the FC head reads the per-signal embedding blocks
// in signal order [lstm_i | cnn_i].
inline ForwardResult model_forward(std::span<const dsp::FeatureBundle> bundles,
                                   const ModelParams& params, const ModelConfig& cfg, RunMode mode,
                                   Rng* rng = nullptr) {
    if (bundles.size() != static_cast<std::size_t>(cfg.signal_count))
        throw ValidationError("model_forward: expected " + std::to_string(cfg.signal_count) +
                              " bundles, got " + std::to_string(bundles.size()));
    for (const auto& b : bundles)
        if (b.series_length != static_cast<std::size_t>(cfg.series_length))
            throw ValidationError("model_forward: bundle length mismatch");

    ForwardResult res;
    res.branches.resize(bundles.size());
    const std::size_t emb = static_cast<std::size_t>(cfg.lstm_embedding_dim());
    const std::size_t flat = static_cast<std::size_t>(cfg.cnn_flat_dim());
    res.fc_in.assign(static_cast<std::size_t>(cfg.fc_input_dim()), 0.0);
    for (std::size_t s = 0; s < bundles.size(); ++s) {
        auto& cache = res.branches[s];
        lstm_branch_forward(bundles[s].lstm_input, cfg, params, mode, rng, cache);
        cnn_branch_forward(bundles[s].cnn_input, cfg, params, cache);
        double* dst = res.fc_in.data() + s * (emb + flat);
        std::copy(cache.embedding.begin(), cache.embedding.end(), dst);
        std::copy(cache.cnn_flat.begin(), cache.cnn_flat.end(), dst + emb);
    }

    const auto w1 = params.block_index("fc.0.W"), b1 = params.block_index("fc.0.b");
    const auto w2 = params.block_index("fc.1.W"), b2 = params.block_index("fc.1.b");
    const auto w3 = params.block_index("fc.2.W"), b3 = params.block_index("fc.2.b");
    res.fc1_out = dense_forward(res.fc_in, params.view(w1), params.view(b1), Activation::relu,
                                &res.fc1_pre);
    res.fc2_out = dense_forward(res.fc1_out, params.view(w2), params.view(b2), Activation::relu,
                                &res.fc2_pre);
    res.yhat = dense_forward(res.fc2_out, params.view(w3), params.view(b3), Activation::linear);
    return res;
}

// Backward through the whole model. d_yhat is dL/dyhat; d_embeddings (may be
// empty) carries extra per-signal gradient into the LSTM embeddings (the
// pairwise loss term). Parameter gradients accumulate into grad.
inline void model_backward(std::span<const dsp::FeatureBundle> bundles, const ModelParams& params,
                           const ModelConfig& cfg, const ForwardResult& res,
                           std::span<const double> d_yhat,
                           std::span<const std::vector<double>> d_embeddings,
                           std::span<double> grad) {
    const auto w1 = params.block_index("fc.0.W"), b1 = params.block_index("fc.0.b");
    const auto w2 = params.block_index("fc.1.W"), b2 = params.block_index("fc.1.b");
    const auto w3 = params.block_index("fc.2.W"), b3 = params.block_index("fc.2.b");
    const auto sub = [&](std::size_t i) {
        return grad.subspan(params.blocks[i].offset, params.blocks[i].size());
    };
    auto d_fc2 = dense_backward(res.fc2_out, params.view(w3), res.yhat, d_yhat, Activation::linear,
                                sub(w3), sub(b3));
    auto d_fc1 = dense_backward(res.fc1_out, params.view(w2), res.fc2_pre, d_fc2, Activation::relu,
                                sub(w2), sub(b2));
    auto d_in = dense_backward(res.fc_in, params.view(w1), res.fc1_pre, d_fc1, Activation::relu,
                               sub(w1), sub(b1));

    const std::size_t emb = static_cast<std::size_t>(cfg.lstm_embedding_dim());
    const std::size_t flat = static_cast<std::size_t>(cfg.cnn_flat_dim());
    for (std::size_t s = 0; s < bundles.size(); ++s) {
        std::vector<double> d_emb(d_in.begin() + static_cast<std::ptrdiff_t>(s * (emb + flat)),
                                  d_in.begin() + static_cast<std::ptrdiff_t>(s * (emb + flat) + emb));
        if (!d_embeddings.empty())
            for (std::size_t k = 0; k < emb; ++k) d_emb[k] += d_embeddings[s][k];
        std::span<const double> d_flat{d_in.data() + s * (emb + flat) + emb, flat};
        lstm_branch_backward(bundles[s].lstm_input, cfg, params, res.branches[s], d_emb, grad);
        cnn_branch_backward(cfg, params, res.branches[s], d_flat, grad);
    }
}

struct LossBreakdown {
    double data = 0.0;
    double reg_lstm = 0.0;
    double reg_cnn = 0.0;
    double reg_nn = 0.0;
    double pairwise = 0.0;
    double total = 0.0;
};

namespace detail {

inline double group_mean_square(const ModelParams& p, ParamGroup g) {
    double acc = 0.0;
    std::size_t n = 0;
    for (const auto& b : p.blocks) {
        if (b.group != g) continue;
        const double* d = p.data.data() + b.offset;
        for (std::size_t i = 0; i < b.size(); ++i) acc += d[i] * d[i];
        n += b.size();
    }
    return n == 0 ? 0.0 : acc / static_cast<double>(n);
}

} // namespace detail

// Single-evaluation loss: per-series mean squared error, mean-square weight
// regularizers per parameter group, and the mean-square pairwise spread of
// the per-signal LSTM embeddings over ordered pairs i != j.
inline LossBreakdown loss(std::span<const double> yhat, std::span<const double> clean,
                          const ModelParams& params, const ForwardResult& res,
                          const LossWeights& weights) {
    weights.validate();
    if (yhat.size() != clean.size() || yhat.empty())
        throw ValidationError("loss: prediction/target length mismatch");
    LossBreakdown b;
    for (std::size_t i = 0; i < yhat.size(); ++i) {
        const double d = yhat[i] - clean[i];
        b.data += d * d;
    }
    b.data /= static_cast<double>(yhat.size());
    b.reg_lstm = weights.lambda_lstm * detail::group_mean_square(params, ParamGroup::lstm);
    b.reg_cnn = weights.lambda_cnn * detail::group_mean_square(params, ParamGroup::cnn);
    b.reg_nn = weights.lambda_nn * detail::group_mean_square(params, ParamGroup::nn);
    const std::size_t m = res.branches.size();
    if (m > 1) {
        const std::size_t dim = res.branches[0].embedding.size();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < m; ++j) {
                if (i == j) continue;
                double acc = 0.0;
                for (std::size_t k = 0; k < dim; ++k) {
                    const double d = res.branches[i].embedding[k] - res.branches[j].embedding[k];
                    acc += d * d;
                }
                b.pairwise += acc / static_cast<double>(dim);
            }
        b.pairwise *= weights.lambda_pair;
    }
    b.total = b.data + b.reg_lstm + b.reg_cnn + b.reg_nn + b.pairwise;
    return b;
}

// Gradient of the single-record loss above with respect to every parameter.
// Returns the breakdown; grad must be zero-initialized by the caller (or
// carry an accumulation from other records, with scale applied per record).
inline LossBreakdown loss_backward(std::span<const dsp::FeatureBundle> bundles,
                                   std::span<const double> clean, const ModelParams& params,
                                   const ModelConfig& cfg, const ForwardResult& res,
                                   const LossWeights& weights, std::span<double> grad,
                                   double data_scale = 1.0, bool include_regularizers = true) {
    const auto breakdown = loss(res.yhat, clean, params, res, weights);
    const std::size_t t = res.yhat.size();
    std::vector<double> d_yhat(t);
    for (std::size_t i = 0; i < t; ++i)
        d_yhat[i] = 2.0 * (res.yhat[i] - clean[i]) / static_cast<double>(t) * data_scale;

    std::vector<std::vector<double>> d_embs;
    const std::size_t m = res.branches.size();
    if (m > 1 && weights.lambda_pair > 0.0) {
        const std::size_t dim = res.branches[0].embedding.size();
        d_embs.assign(m, std::vector<double>(dim, 0.0));
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < m; ++j) {
                if (i == j) continue;
                for (std::size_t k = 0; k < dim; ++k) {
                    const double d = res.branches[i].embedding[k] - res.branches[j].embedding[k];
                    // ordered pairs (i,j) and (j,i) both contribute
                    d_embs[i][k] += weights.lambda_pair * 4.0 * d / static_cast<double>(dim) *
                                    data_scale;
                }
            }
    }
    model_backward(bundles, params, cfg, res, d_yhat, d_embs, grad);

    if (include_regularizers) {
        const auto add_reg = [&](ParamGroup g, double lambda) {
            if (lambda == 0.0) return;
            const double n = static_cast<double>(params.group_count(g));
            for (const auto& blk : params.blocks) {
                if (blk.group != g) continue;
                const double* p = params.data.data() + blk.offset;
                double* dp = grad.data() + blk.offset;
                for (std::size_t i = 0; i < blk.size(); ++i) dp[i] += 2.0 * lambda * p[i] / n;
            }
        };
        add_reg(ParamGroup::lstm, weights.lambda_lstm);
        add_reg(ParamGroup::cnn, weights.lambda_cnn);
        add_reg(ParamGroup::nn, weights.lambda_nn);
    }
    return breakdown;
}

} // namespace vibro::neural
