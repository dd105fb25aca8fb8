// vibro: synthetic structural-vibration denoising benchmark harness.
//
// Subcommands: generate | train | denoise | compare
// Exit codes: 0 success, 2 configuration/validation error, 3 runtime error.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "vibro/bench.hpp"

namespace fs = std::filesystem;
using vibro::bench::ExperimentConfig;

namespace {

ExperimentConfig load_config(const std::string& path, std::optional<std::uint64_t> seed,
                             std::optional<std::string> out_dir) {
    ExperimentConfig cfg = vibro::bench::load_experiment_config(path);
    if (seed) {
        cfg.seed = *seed;
        cfg.dataset.seed = *seed;
        cfg.train.seed = *seed;
    }
    if (out_dir) cfg.output_dir = *out_dir;
    return cfg;
}

void dump_bundle_csv(const fs::path& data_dir, const vibro::dsp::FeatureSpec& fspec,
                     const fs::path& csv_path) {
    vibro::synth::DatasetReader reader(data_dir);
    auto rec = reader.next();
    if (!rec) throw vibro::RuntimeError("dump-bundle: dataset is empty");
    std::vector<double> x(rec->channels[0].begin(), rec->channels[0].end());
    const auto fb = vibro::dsp::build_feature_bundle(x, fspec);
    std::ofstream out(csv_path, std::ios::trunc);
    const auto put_row = [&](const char* name, const double* data, std::size_t n) {
        out << name;
        char buf[32];
        for (std::size_t i = 0; i < n; ++i) {
            std::snprintf(buf, sizeof(buf), ",%.9e", data[i]);
            out << buf;
        }
        out << "\n";
    };
    const std::size_t t = fb.series_length;
    put_row("lstm_raw", fb.lstm_input.data(), t);
    put_row("lstm_fft", fb.lstm_input.data() + t, t);
    put_row("cnn_detail_a", fb.cnn_input.data(), t);
    put_row("cnn_detail_b", fb.cnn_input.data() + t, t);
    put_row("cnn_approx", fb.cnn_input.data() + 2 * t, t);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"synthetic structural-vibration denoising benchmark"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::string data_dir;
    std::string checkpoint;
    std::string method;
    std::string bundle_csv;

    auto* gen = app.add_subcommand("generate", "synthesize a dataset");
    gen->add_option("--config", config_path, "experiment config JSON")->required();
    gen->add_option("--out", out_dir, "output directory");
    gen->add_option("--seed", seed, "override the global seed");

    auto* tr = app.add_subcommand("train", "train the hybrid ensemble");
    tr->add_option("--config", config_path)->required();
    tr->add_option("--data", data_dir, "dataset directory")->required();
    tr->add_option("--out", out_dir);
    tr->add_option("--seed", seed);

    auto* dn = app.add_subcommand("denoise", "denoise a dataset with one method");
    dn->add_option("--config", config_path)->required();
    dn->add_option("--data", data_dir)->required();
    dn->add_option("--checkpoint", checkpoint, "model checkpoint (ensemble)");
    dn->add_option("--method", method, "ensemble|savgol|wiener|tv|wavelet")->required();
    dn->add_option("--out", out_dir);
    dn->add_option("--dump-bundle-csv", bundle_csv, "debug: dump record 0 feature bundle");

    auto* cp = app.add_subcommand("compare", "evaluate all methods on the test split");
    cp->add_option("--config", config_path)->required();
    cp->add_option("--data", data_dir)->required();
    cp->add_option("--checkpoint", checkpoint)->required();
    cp->add_option("--out", out_dir);
    cp->add_option("--seed", seed);

    CLI11_PARSE(app, argc, argv);

    try {
        const ExperimentConfig cfg = load_config(config_path, seed, out_dir);
        if (gen->parsed()) {
            const auto manifest = vibro::synth::generate_dataset(cfg.dataset, cfg.output_dir);
            std::cout << "wrote " << manifest.record_count << " records (T=" << manifest.series_length
                      << ", m=" << manifest.channel_count << ") to " << cfg.output_dir.string()
                      << "\n"
                      << "  shape R^{" << manifest.record_count << "x" << manifest.series_length
                      << "}, sigma_eps in [" << manifest.sigma_eps_min << ", "
                      << manifest.sigma_eps_max << "], seed " << manifest.global_seed << "\n";
        } else if (tr->parsed()) {
            const auto art = vibro::bench::run_train(cfg, data_dir, cfg.output_dir);
            std::cout << "checkpoint: " << art.checkpoint.string() << "\n"
                      << "histories: " << art.histories.size() << " file(s)\n"
                      << "best combo: " << art.best_combo << " (val MSE " << art.best_val_mse
                      << ")\n";
        } else if (dn->parsed()) {
            if (!bundle_csv.empty()) dump_bundle_csv(data_dir, cfg.features, bundle_csv);
            std::optional<fs::path> ck;
            if (!checkpoint.empty()) ck = checkpoint;
            vibro::bench::run_denoise(cfg, data_dir, ck, method, cfg.output_dir);
            std::cout << "denoised dataset written to " << cfg.output_dir.string() << " (method "
                      << method << ")\n";
        } else if (cp->parsed()) {
            const auto out = vibro::bench::run_compare(cfg, data_dir, checkpoint, cfg.output_dir);
            std::cout << "report rows: " << out.rows.size() << " -> "
                      << (cfg.output_dir / "report.csv").string() << "\n";
        }
    } catch (const vibro::ValidationError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
