#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "vibro/bench.hpp"

using namespace vibro;
using namespace vibro::bench;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
    auto p = fs::temp_directory_path() / ("vibro_bench_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// small, fast experiment for pipeline tests
ExperimentConfig tiny_experiment() {
    ExperimentConfig cfg;
    cfg.dataset.record_count = 60;
    cfg.dataset.series_length = 64;
    cfg.dataset.channel_count = 2;
    cfg.dataset.seed = 5;
    cfg.seed = 5;
    cfg.features.approx_levels = 3;
    cfg.model.lstm_hidden = 4;
    cfg.model.cnn_layers = {{4, 3, 2}, {4, 3, 2}};
    cfg.model.fc_widths = {16, 8};
    cfg.train.batch_size = 16;
    cfg.train.max_iterations = 30;
    cfg.train.seed = 5;
    cfg.noise_grid = {0.0, 0.1};
    cfg.baselines.savgol_windows = {7, 11};
    cfg.baselines.savgol_polyorders = {2};
    cfg.baselines.wiener_windows = {7};
    cfg.baselines.tv_weights = {0.1};
    cfg.baselines.tv_max_iter = 200;
    cfg.baselines.wavelet_levels = {3};
    cfg.baselines.wavelet_rules = {"soft"};
    return cfg;
}

} // namespace

TEST_CASE("split_indices: disjoint cover within one record of the targets") {
    for (std::size_t n : {2000u, 1003u, 10u}) {
        const auto s = split_indices(n, SplitRatios{}, 42);
        std::set<std::size_t> seen;
        for (const auto* part : {&s.train, &s.val, &s.test})
            for (auto i : *part) {
                CHECK(i < n);
                CHECK(seen.insert(i).second); // pairwise disjoint
            }
        CHECK(seen.size() == n); // full coverage
        CHECK(std::abs(static_cast<double>(s.train.size()) - 0.6 * static_cast<double>(n)) <= 1.0);
        CHECK(std::abs(static_cast<double>(s.val.size()) - 0.2 * static_cast<double>(n)) <= 1.0);
        CHECK(std::abs(static_cast<double>(s.test.size()) - 0.2 * static_cast<double>(n)) <= 1.0);

        const auto s2 = split_indices(n, SplitRatios{}, 42);
        CHECK(s.train == s2.train);
        CHECK(s.test == s2.test);
    }
    CHECK_THROWS_AS(split_indices(2, SplitRatios{}, 1), ValidationError);
}

TEST_CASE("experiment config: field-level validation messages") {
    const auto dir = temp_dir("cfg");
    {
        std::ofstream out(dir / "bad_split.json");
        out << R"({"split": {"train": 0.5, "val": 0.2, "test": 0.2}})";
    }
    try {
        load_experiment_config(dir / "bad_split.json");
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("split") != std::string::npos);
    }
    {
        std::ofstream out(dir / "bad_grid.json");
        out << R"({"noise_grid": [-0.1]})";
    }
    CHECK_THROWS_AS(load_experiment_config(dir / "bad_grid.json"), ValidationError);
    CHECK_THROWS_AS(load_experiment_config(dir / "missing.json"), ValidationError);
    fs::remove_all(dir);
}

TEST_CASE("channels_at_sigma: zero sigma reproduces clean, seeded otherwise") {
    synth::DatasetConfig dcfg;
    dcfg.record_count = 1;
    dcfg.series_length = 32;
    const auto rec = synth::synthesize_record(dcfg, 0);
    const auto at0 = channels_at_sigma(rec, 0.0, 0);
    for (const auto& ch : at0)
        for (std::size_t i = 0; i < ch.size(); ++i)
            CHECK(ch[i] == static_cast<double>(rec.clean[i]));
    const auto a = channels_at_sigma(rec, 0.1, 3);
    const auto b = channels_at_sigma(rec, 0.1, 3);
    CHECK(a == b);
    const auto c = channels_at_sigma(rec, 0.1, 4);
    CHECK(a != c);
}

TEST_CASE("pipeline: train artifacts, report shape, deterministic reruns") {
    auto cfg = tiny_experiment();
    cfg.loss_weight_grid = {neural::LossWeights{1e-4, 1e-4, 1e-4, 1e-3},
                            neural::LossWeights{0.0, 0.0, 0.0, 0.0}};
    const auto data = temp_dir("pipe_data");
    const auto train_out = temp_dir("pipe_train");
    const auto cmp_out = temp_dir("pipe_cmp");

    synth::generate_dataset(cfg.dataset, data);
    const auto art = run_train(cfg, data, train_out);
    CHECK(art.histories.size() == 2); // one history per weight combo
    CHECK(fs::exists(art.checkpoint));
    CHECK(fs::exists(train_out / "selection.json"));
    {
        std::ifstream h(art.histories[0]);
        std::string line;
        std::getline(h, line);
        CHECK(line == "iteration,lr,train_loss,val_loss");
        int rows = 0;
        while (std::getline(h, line)) ++rows;
        CHECK(rows == 30); // train/val loss recorded per iteration
    }

    const auto out = run_compare(cfg, data, art.checkpoint, cmp_out);
    // five methods per noise level
    CHECK(out.rows.size() == 5 * cfg.noise_grid.size());
    for (std::size_t si = 0; si < cfg.noise_grid.size(); ++si) {
        std::set<std::string> methods;
        for (std::size_t k = 0; k < 5; ++k) methods.insert(out.rows[si * 5 + k].method);
        CHECK(methods == std::set<std::string>{"ensemble", "savgol", "wiener", "tv", "wavelet"});
    }
    // sigma = 0: the noisy input is perfect (wmape 0, psnr sentinel)
    for (const auto& p : out.scatter) {
        if (p.sigma == 0.0) {
            CHECK(p.noisy_wmape == 0.0);
            CHECK(p.noisy_psnr.infinite);
            CHECK(p.denoised_wmape >= 0.0);
        }
    }
    // byte-identical report on rerun
    const auto report1 = slurp(cmp_out / "report.csv");
    const auto scatter1 = slurp(cmp_out / "scatter.csv");
    const auto cmp_out2 = temp_dir("pipe_cmp2");
    run_compare(cfg, data, art.checkpoint, cmp_out2);
    CHECK(slurp(cmp_out2 / "report.csv") == report1);
    CHECK(slurp(cmp_out2 / "scatter.csv") == scatter1);

    // checkpoint/dataset shape mismatch is rejected
    auto bad_cfg = cfg;
    bad_cfg.dataset.series_length = 32;
    const auto bad_data = temp_dir("pipe_bad");
    synth::generate_dataset(bad_cfg.dataset, bad_data);
    CHECK_THROWS_AS(run_compare(bad_cfg, bad_data, art.checkpoint, cmp_out2), ValidationError);

    for (const auto& d : {data, train_out, cmp_out, cmp_out2, bad_data}) fs::remove_all(d);
}

TEST_CASE("denoise: tv weight zero passes through channel 1; unknown method rejected") {
    auto cfg = tiny_experiment();
    cfg.baselines.tv_weights = {0.0};
    const auto data = temp_dir("dn_data");
    const auto out = temp_dir("dn_out");
    synth::generate_dataset(cfg.dataset, data);

    run_denoise(cfg, data, std::nullopt, "tv", out);
    synth::DatasetReader orig(data), den(out);
    while (auto rec = orig.next()) {
        auto drec = den.next();
        REQUIRE(drec.has_value());
        CHECK(drec->clean == rec->channels[0]); // clean slot replaced by yhat
        CHECK(drec->channels == rec->channels);
    }

    CHECK_THROWS_AS(run_denoise(cfg, data, std::nullopt, "nope", out), ValidationError);
    try {
        run_denoise(cfg, data, std::nullopt, "nope", out);
    } catch (const ValidationError& e) {
        const std::string msg = e.what();
        for (const char* tag : {"ensemble", "savgol", "wiener", "tv", "wavelet"})
            CHECK(msg.find(tag) != std::string::npos);
    }
    fs::remove_all(data);
    fs::remove_all(out);
}

#ifdef VIBRO_CLI_PATH
TEST_CASE("cli: exit codes and determinism") {
    const auto dir = temp_dir("cli");
    const auto cfg_path = dir / "cfg.json";
    {
        auto cfg = tiny_experiment();
        cfg.dataset.record_count = 8;
        nlohmann::json j = cfg;
        std::ofstream(cfg_path) << j.dump(2);
    }
    const std::string cli = VIBRO_CLI_PATH;
    const auto run = [&](const std::string& args) {
        const std::string cmd = cli + " " + args + " > /dev/null 2>&1";
        return WEXITSTATUS(std::system(cmd.c_str()));
    };

    CHECK(run("generate --config " + cfg_path.string() + " --out " + (dir / "d1").string()) == 0);
    CHECK(run("generate --config " + cfg_path.string() + " --out " + (dir / "d2").string()) == 0);
    CHECK(slurp(dir / "d1" / "dataset.vibd") == slurp(dir / "d2" / "dataset.vibd"));

    // invalid config -> exit 2
    {
        std::ofstream bad(dir / "bad.json");
        bad << R"({"split": {"train": 0.9, "val": 0.2, "test": 0.2}})";
    }
    CHECK(run("generate --config " + (dir / "bad.json").string() + " --out " + dir.string()) == 2);
    // unknown method -> exit 2
    CHECK(run("denoise --config " + cfg_path.string() + " --data " + (dir / "d1").string() +
              " --method zigzag --out " + (dir / "dn").string()) == 2);
    // missing dataset -> exit 3
    CHECK(run("compare --config " + cfg_path.string() + " --data " + (dir / "nothere").string() +
              " --checkpoint nope.bin --out " + (dir / "c").string()) == 3);
    fs::remove_all(dir);
}
#endif
