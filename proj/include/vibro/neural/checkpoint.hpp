#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vibro/error.hpp"
#include "vibro/neural/params.hpp"
#include "vibro/neural/train.hpp"

namespace vibro::neural {

inline void to_json(nlohmann::json& j, const CnnLayerSpec& s) {
    j = {{"channels", s.channels}, {"kernel", s.kernel}, {"pool", s.pool}};
}
inline void from_json(const nlohmann::json& j, CnnLayerSpec& s) {
    s.channels = j.value("channels", s.channels);
    s.kernel = j.value("kernel", s.kernel);
    s.pool = j.value("pool", s.pool);
}

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = {{"lstm_hidden", c.lstm_hidden},   {"lstm_inputs", c.lstm_inputs},
         {"cnn_inputs", c.cnn_inputs},     {"cnn_layers", c.cnn_layers},
         {"fc_widths", c.fc_widths},       {"dropout", c.dropout},
         {"signal_count", c.signal_count}, {"series_length", c.series_length}};
}
inline void from_json(const nlohmann::json& j, ModelConfig& c) {
    c.lstm_hidden = j.value("lstm_hidden", c.lstm_hidden);
    c.lstm_inputs = j.value("lstm_inputs", c.lstm_inputs);
    c.cnn_inputs = j.value("cnn_inputs", c.cnn_inputs);
    if (j.contains("cnn_layers")) j.at("cnn_layers").get_to(c.cnn_layers);
    if (j.contains("fc_widths")) j.at("fc_widths").get_to(c.fc_widths);
    c.dropout = j.value("dropout", c.dropout);
    c.signal_count = j.value("signal_count", c.signal_count);
    c.series_length = j.value("series_length", c.series_length);
}

inline void to_json(nlohmann::json& j, const LossWeights& w) {
    j = {{"lambda_lstm", w.lambda_lstm},
         {"lambda_cnn", w.lambda_cnn},
         {"lambda_nn", w.lambda_nn},
         {"lambda_pair", w.lambda_pair}};
}
inline void from_json(const nlohmann::json& j, LossWeights& w) {
    w.lambda_lstm = j.value("lambda_lstm", w.lambda_lstm);
    w.lambda_cnn = j.value("lambda_cnn", w.lambda_cnn);
    w.lambda_nn = j.value("lambda_nn", w.lambda_nn);
    w.lambda_pair = j.value("lambda_pair", w.lambda_pair);
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"batch_size", c.batch_size},   {"max_iterations", c.max_iterations},
         {"learning_rate", c.learning_rate}, {"beta1", c.beta1},
         {"beta2", c.beta2},             {"epsilon", c.epsilon},
         {"seed", c.seed},               {"patience", c.patience},
         {"val_eval_size", c.val_eval_size}, {"lr_schedule", c.lr_schedule},
         {"lr_final", c.lr_final}};
}
inline void from_json(const nlohmann::json& j, TrainConfig& c) {
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_iterations = j.value("max_iterations", c.max_iterations);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.epsilon = j.value("epsilon", c.epsilon);
    c.seed = j.value("seed", c.seed);
    c.patience = j.value("patience", c.patience);
    c.val_eval_size = j.value("val_eval_size", c.val_eval_size);
    c.lr_schedule = j.value("lr_schedule", c.lr_schedule);
    c.lr_final = j.value("lr_final", c.lr_final);
}

inline constexpr char kCheckpointMagic[4] = {'V', 'I', 'B', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    ModelConfig config;
    ModelParams params;
    nlohmann::json meta; // seed, iteration, metrics
};

// Layout: magic, version u32, header_len u64, JSON header, then the f64
// parameter payload in the fixed block order of ModelParams::build.
inline void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                            const ModelConfig& config, const nlohmann::json& meta) {
    nlohmann::json header;
    header["config"] = config;
    header["meta"] = meta;
    header["param_count"] = params.total_count();
    nlohmann::json blocks = nlohmann::json::array();
    for (const auto& b : params.blocks)
        blocks.push_back({{"name", b.name}, {"rows", b.rows}, {"cols", b.cols}});
    header["blocks"] = blocks;
    const std::string hs = header.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw RuntimeError("checkpoint: cannot open " + path.string());
    out.write(kCheckpointMagic, 4);
    const std::uint32_t version = kCheckpointVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    const std::uint64_t hlen = hs.size();
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    out.write(reinterpret_cast<const char*>(params.data.data()),
              static_cast<std::streamsize>(params.data.size() * sizeof(double)));
    if (!out) throw RuntimeError("checkpoint: write failure on " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw RuntimeError("checkpoint: cannot open " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw RuntimeError("checkpoint: bad magic in " + path.string());
    std::uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    if (version != kCheckpointVersion)
        throw RuntimeError("checkpoint: version " + std::to_string(version) + ", expected " +
                           std::to_string(kCheckpointVersion));
    std::uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    std::string hs(hlen, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(hlen));
    if (in.gcount() != static_cast<std::streamsize>(hlen))
        throw RuntimeError("checkpoint: truncated header");
    const auto header = nlohmann::json::parse(hs);

    Checkpoint ck;
    header.at("config").get_to(ck.config);
    ck.meta = header.value("meta", nlohmann::json::object());
    ck.params = ModelParams::build(ck.config);
    if (header.value("param_count", std::uint64_t{0}) != ck.params.total_count())
        throw RuntimeError("checkpoint: parameter count does not match the stored config");
    // block table must agree with the config-derived layout
    const auto& blocks = header.at("blocks");
    if (blocks.size() != ck.params.blocks.size())
        throw RuntimeError("checkpoint: block table mismatch");
    for (std::size_t i = 0; i < ck.params.blocks.size(); ++i) {
        const auto& b = ck.params.blocks[i];
        if (blocks[i].value("name", "") != b.name ||
            blocks[i].value("rows", std::size_t{0}) != b.rows ||
            blocks[i].value("cols", std::size_t{0}) != b.cols)
            throw RuntimeError("checkpoint: block " + b.name + " does not match the stored config");
    }
    in.read(reinterpret_cast<char*>(ck.params.data.data()),
            static_cast<std::streamsize>(ck.params.data.size() * sizeof(double)));
    if (in.gcount() != static_cast<std::streamsize>(ck.params.data.size() * sizeof(double)))
        throw RuntimeError("checkpoint: truncated parameter payload");
    return ck;
}

} // namespace vibro::neural
