#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "vibro/error.hpp"
#include "vibro/rng.hpp"

namespace vibro::neural {

struct CnnLayerSpec {
    int channels = 8;
    int kernel = 5;
    int pool = 2;
};

struct ModelConfig {
    int lstm_hidden = 32;
    int lstm_inputs = 2; // raw signal + FFT channel
    int cnn_inputs = 3;  // wavelet channels
    std::vector<CnnLayerSpec> cnn_layers = {{8, 5, 2}, {16, 5, 2}};
    std::vector<int> fc_widths = {256, 128};
    double dropout = 0.2;
    int signal_count = 2;    // m
    int series_length = 500; // T

    void validate() const {
        if (lstm_hidden < 1) throw ValidationError("model.lstm_hidden: must be >= 1");
        if (series_length < 2) throw ValidationError("model.series_length: must be >= 2");
        if (signal_count < 1) throw ValidationError("model.signal_count: must be >= 1");
        if (dropout < 0.0 || dropout >= 1.0) throw ValidationError("model.dropout: must be in [0, 1)");
        if (cnn_layers.empty()) throw ValidationError("model.cnn_layers: need at least one layer");
        for (const auto& l : cnn_layers) {
            if (l.channels < 1) throw ValidationError("model.cnn_layers: channels must be >= 1");
            if (l.kernel < 1 || l.kernel % 2 == 0)
                throw ValidationError("model.cnn_layers: kernel width must be odd");
            if (l.pool < 1) throw ValidationError("model.cnn_layers: pool width must be >= 1");
        }
        if (fc_widths.size() != 2) throw ValidationError("model.fc_widths: exactly two hidden widths");
        for (int w : fc_widths)
            if (w < 1) throw ValidationError("model.fc_widths: widths must be >= 1");
    }

    // Pooled LSTM embedding: per-step mean (2H) + final step of each direction.
    int lstm_embedding_dim() const { return 4 * lstm_hidden; }

    int cnn_output_length() const {
        int t = series_length;
        for (const auto& l : cnn_layers) t = (t + l.pool - 1) / l.pool;
        return t;
    }

    int cnn_flat_dim() const { return cnn_layers.back().channels * cnn_output_length(); }

    int fc_input_dim() const { return signal_count * (lstm_embedding_dim() + cnn_flat_dim()); }
};

enum class ParamGroup { lstm, cnn, nn };

struct ParamBlock {
    std::string name;
    ParamGroup group;
    std::size_t offset = 0;
    std::size_t rows = 0;
    std::size_t cols = 0; // 1 for bias vectors

    std::size_t size() const { return rows * cols; }
};

// All trainable tensors in one flat buffer with a fixed block order. The
// block order is part of the checkpoint contract.
struct ModelParams {
    std::vector<ParamBlock> blocks;
    std::vector<double> data;

    static ModelParams build(const ModelConfig& cfg) {
        cfg.validate();
        ModelParams p;
        std::size_t off = 0;
        const auto add = [&](std::string name, ParamGroup g, std::size_t rows, std::size_t cols) {
            p.blocks.push_back({std::move(name), g, off, rows, cols});
            off += rows * cols;
        };
        const auto h = static_cast<std::size_t>(cfg.lstm_hidden);
        const auto in = static_cast<std::size_t>(cfg.lstm_inputs);
        for (const char* dir : {"fwd", "bwd"}) {
            add(std::string("lstm.") + dir + ".Wx", ParamGroup::lstm, 4 * h, in);
            add(std::string("lstm.") + dir + ".Wh", ParamGroup::lstm, 4 * h, h);
            add(std::string("lstm.") + dir + ".b", ParamGroup::lstm, 4 * h, 1);
        }
        int cin = cfg.cnn_inputs;
        for (std::size_t l = 0; l < cfg.cnn_layers.size(); ++l) {
            const auto& spec = cfg.cnn_layers[l];
            add("cnn." + std::to_string(l) + ".W", ParamGroup::cnn,
                static_cast<std::size_t>(spec.channels),
                static_cast<std::size_t>(cin) * static_cast<std::size_t>(spec.kernel));
            add("cnn." + std::to_string(l) + ".b", ParamGroup::cnn,
                static_cast<std::size_t>(spec.channels), 1);
            cin = spec.channels;
        }
        const std::size_t d = static_cast<std::size_t>(cfg.fc_input_dim());
        const std::size_t w1 = static_cast<std::size_t>(cfg.fc_widths[0]);
        const std::size_t w2 = static_cast<std::size_t>(cfg.fc_widths[1]);
        const std::size_t t = static_cast<std::size_t>(cfg.series_length);
        add("fc.0.W", ParamGroup::nn, w1, d);
        add("fc.0.b", ParamGroup::nn, w1, 1);
        add("fc.1.W", ParamGroup::nn, w2, w1);
        add("fc.1.b", ParamGroup::nn, w2, 1);
        add("fc.2.W", ParamGroup::nn, t, w2);
        add("fc.2.b", ParamGroup::nn, t, 1);
        p.data.assign(off, 0.0);
        return p;
    }

    // Uniform +-1/sqrt(fan_in) weights, zero biases.
    void init(std::uint64_t seed) {
        Rng rng(seed);
        for (const auto& b : blocks) {
            double* dst = data.data() + b.offset;
            if (b.cols == 1) {
                for (std::size_t i = 0; i < b.size(); ++i) dst[i] = 0.0;
            } else {
                const double bound = 1.0 / std::sqrt(static_cast<double>(b.cols));
                for (std::size_t i = 0; i < b.size(); ++i) dst[i] = rng.uniform(-bound, bound);
            }
        }
    }

    std::span<double> view(std::size_t block_index) {
        const auto& b = blocks[block_index];
        return {data.data() + b.offset, b.size()};
    }
    std::span<const double> view(std::size_t block_index) const {
        const auto& b = blocks[block_index];
        return {data.data() + b.offset, b.size()};
    }

    std::size_t block_index(const std::string& name) const {
        for (std::size_t i = 0; i < blocks.size(); ++i)
            if (blocks[i].name == name) return i;
        throw RuntimeError("ModelParams: unknown block " + name);
    }

    std::size_t group_count(ParamGroup g) const {
        std::size_t n = 0;
        for (const auto& b : blocks)
            if (b.group == g) n += b.size();
        return n;
    }

    std::size_t total_count() const { return data.size(); }
};

struct LossWeights {
    double lambda_lstm = 1e-4;
    double lambda_cnn = 1e-4;
    double lambda_nn = 1e-4;
    double lambda_pair = 1e-3;

    void validate() const {
        if (lambda_lstm < 0 || lambda_cnn < 0 || lambda_nn < 0 || lambda_pair < 0)
            throw ValidationError("loss weights must be >= 0");
    }
};

} // namespace vibro::neural
