#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "vibro/classical.hpp"
#include "vibro/dataset.hpp"
#include "vibro/error.hpp"
#include "vibro/features.hpp"
#include "vibro/metrics.hpp"
#include "vibro/neural/checkpoint.hpp"
#include "vibro/neural/train.hpp"
#include "vibro/parallel.hpp"

namespace vibro::dsp {

inline void to_json(nlohmann::json& j, const FeatureSpec& f) {
    j = {{"detail_family_a", f.detail_family_a},
         {"detail_family_b", f.detail_family_b},
         {"approx_family", f.approx_family},
         {"approx_levels", f.approx_levels}};
}
inline void from_json(const nlohmann::json& j, FeatureSpec& f) {
    f.detail_family_a = j.value("detail_family_a", f.detail_family_a);
    f.detail_family_b = j.value("detail_family_b", f.detail_family_b);
    f.approx_family = j.value("approx_family", f.approx_family);
    f.approx_levels = j.value("approx_levels", f.approx_levels);
}

} // namespace vibro::dsp

namespace vibro::bench {

struct SplitRatios {
    double train = 0.6, val = 0.2, test = 0.2;

    void validate() const {
        if (train <= 0 || val <= 0 || test <= 0)
            throw ValidationError("split: all ratios must be positive");
        if (std::abs(train + val + test - 1.0) > 1e-9)
            throw ValidationError("split: ratios must sum to 1");
    }
};

inline void to_json(nlohmann::json& j, const SplitRatios& s) {
    j = {{"train", s.train}, {"val", s.val}, {"test", s.test}};
}
inline void from_json(const nlohmann::json& j, SplitRatios& s) {
    s.train = j.value("train", s.train);
    s.val = j.value("val", s.val);
    s.test = j.value("test", s.test);
}

struct BaselineGrids {
    std::vector<int> savgol_windows{7, 11, 15, 21, 31, 41, 51};
    std::vector<int> savgol_polyorders{2, 3};
    std::vector<int> wiener_windows{7, 11, 15, 21, 31};
    std::vector<double> tv_weights{0.05, 0.1, 0.2, 0.3, 0.5, 0.8, 1.0};
    int tv_max_iter = 2000;
    double tv_tol = 1e-6;
    std::vector<std::string> wavelet_families{"db4"};
    std::vector<int> wavelet_levels{3, 4, 5};
    std::vector<std::string> wavelet_rules{"soft", "hard"};
};

inline void to_json(nlohmann::json& j, const BaselineGrids& g) {
    j = {{"savgol", {{"windows", g.savgol_windows}, {"polyorders", g.savgol_polyorders}}},
         {"wiener", {{"windows", g.wiener_windows}}},
         {"tv", {{"weights", g.tv_weights}, {"max_iter", g.tv_max_iter}, {"tol", g.tv_tol}}},
         {"wavelet",
          {{"families", g.wavelet_families},
           {"levels", g.wavelet_levels},
           {"rules", g.wavelet_rules}}}};
}
inline void from_json(const nlohmann::json& j, BaselineGrids& g) {
    if (j.contains("savgol")) {
        g.savgol_windows = j["savgol"].value("windows", g.savgol_windows);
        g.savgol_polyorders = j["savgol"].value("polyorders", g.savgol_polyorders);
    }
    if (j.contains("wiener")) g.wiener_windows = j["wiener"].value("windows", g.wiener_windows);
    if (j.contains("tv")) {
        g.tv_weights = j["tv"].value("weights", g.tv_weights);
        g.tv_max_iter = j["tv"].value("max_iter", g.tv_max_iter);
        g.tv_tol = j["tv"].value("tol", g.tv_tol);
    }
    if (j.contains("wavelet")) {
        g.wavelet_families = j["wavelet"].value("families", g.wavelet_families);
        g.wavelet_levels = j["wavelet"].value("levels", g.wavelet_levels);
        g.wavelet_rules = j["wavelet"].value("rules", g.wavelet_rules);
    }
}

struct ExperimentConfig {
    synth::DatasetConfig dataset;
    SplitRatios split;
    std::vector<double> noise_grid{0.0, 0.025, 0.05, 0.075, 0.1, 0.125, 0.15, 0.175, 0.2};
    dsp::FeatureSpec features;
    neural::ModelConfig model;
    neural::TrainConfig train;
    neural::LossWeights loss_weights;
    std::vector<neural::LossWeights> loss_weight_grid; // empty: single run with defaults
    BaselineGrids baselines;
    std::filesystem::path output_dir = "out";
    std::uint64_t seed = 1;

    void validate() const {
        dataset.validate();
        split.validate();
        if (noise_grid.empty()) throw ValidationError("noise_grid: must be nonempty");
        for (double s : noise_grid)
            if (s < 0) throw ValidationError("noise_grid: sigma_eps must be >= 0");
        neural::ModelConfig effective = model;
        effective.series_length = static_cast<int>(dataset.series_length);
        effective.signal_count = static_cast<int>(dataset.channel_count);
        effective.validate();
        train.validate();
        loss_weights.validate();
        for (const auto& w : loss_weight_grid) w.validate();
    }

    neural::ModelConfig effective_model() const {
        neural::ModelConfig m = model;
        m.series_length = static_cast<int>(dataset.series_length);
        m.signal_count = static_cast<int>(dataset.channel_count);
        return m;
    }
};

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
    j = {{"dataset", c.dataset},
         {"split", c.split},
         {"noise_grid", c.noise_grid},
         {"features", c.features},
         {"model", c.model},
         {"train", c.train},
         {"loss_weights", c.loss_weights},
         {"baselines", c.baselines},
         {"output_dir", c.output_dir.string()},
         {"seed", c.seed}};
    if (!c.loss_weight_grid.empty()) j["loss_weight_grid"] = c.loss_weight_grid;
}
inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
    if (j.contains("dataset")) j.at("dataset").get_to(c.dataset);
    if (j.contains("split")) j.at("split").get_to(c.split);
    if (j.contains("noise_grid")) j.at("noise_grid").get_to(c.noise_grid);
    if (j.contains("features")) j.at("features").get_to(c.features);
    if (j.contains("model")) j.at("model").get_to(c.model);
    if (j.contains("train")) j.at("train").get_to(c.train);
    if (j.contains("loss_weights")) j.at("loss_weights").get_to(c.loss_weights);
    if (j.contains("loss_weight_grid")) j.at("loss_weight_grid").get_to(c.loss_weight_grid);
    if (j.contains("baselines")) j.at("baselines").get_to(c.baselines);
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("config: cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("config: parse error in " + path.string() + ": " + e.what());
    }
    ExperimentConfig cfg;
    try {
        j.get_to(cfg);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("config: invalid field in " + path.string() + ": " + e.what());
    }
    cfg.validate();
    return cfg;
}

struct SplitIndices {
    std::vector<std::size_t> train, val, test;
};

// Disjoint covering split from a seeded permutation; sizes land within one
// record of the requested ratios.
inline SplitIndices split_indices(std::size_t n, const SplitRatios& ratios, std::uint64_t seed) {
    ratios.validate();
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng rng(derive_seed(seed, {0x73706c6974ULL}));
    for (std::size_t i = n; i-- > 1;)
        std::swap(perm[i], perm[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)))]);
    const std::size_t n_train = static_cast<std::size_t>(std::lround(ratios.train * static_cast<double>(n)));
    const std::size_t n_val = static_cast<std::size_t>(std::lround(ratios.val * static_cast<double>(n)));
    if (n_train == 0 || n_val == 0 || n_train + n_val >= n)
        throw ValidationError("split: dataset too small for the requested ratios");
    SplitIndices s;
    s.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.val.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train),
                 perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    s.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), perm.end());
    return s;
}

// Regenerates the m noisy channels of a record at a target noise level on the
// fixed clean signal. Deterministic in (record seed, grid index).
inline std::vector<std::vector<double>> channels_at_sigma(const synth::SignalRecord& rec,
                                                          double sigma, std::size_t sigma_index) {
    Rng rng(derive_seed(rec.seed, {0x6e6f697365ULL, sigma_index}));
    std::vector<std::vector<double>> out(rec.channels.size());
    for (auto& ch : out) {
        ch.resize(rec.clean.size());
        for (std::size_t i = 0; i < ch.size(); ++i)
            ch[i] = static_cast<double>(rec.clean[i]) + (sigma == 0.0 ? 0.0 : rng.normal(0.0, sigma));
    }
    return out;
}

inline neural::TrainRecord make_train_record(const synth::SignalRecord& rec,
                                             const dsp::FeatureSpec& fspec) {
    neural::TrainRecord tr;
    tr.bundles.reserve(rec.channels.size());
    for (const auto& ch : rec.channels) {
        std::vector<double> x(ch.begin(), ch.end());
        tr.bundles.push_back(dsp::build_feature_bundle(x, fspec));
    }
    tr.clean.assign(rec.clean.begin(), rec.clean.end());
    return tr;
}

struct TrainArtifacts {
    std::filesystem::path checkpoint;
    std::vector<std::filesystem::path> histories;
    std::size_t best_combo = 0;
    double best_val_mse = 0.0;
};

namespace detail {

inline double val_data_mse(std::span<const neural::TrainRecord> val,
                           const neural::ModelParams& params, const neural::ModelConfig& cfg) {
    std::vector<double> per(val.size());
    parallel_for(val.size(), [&](std::size_t i) {
        const auto res = neural::model_forward(val[i].bundles, params, cfg, neural::RunMode::eval);
        double acc = 0.0;
        for (std::size_t k = 0; k < res.yhat.size(); ++k) {
            const double d = res.yhat[k] - val[i].clean[k];
            acc += d * d;
        }
        per[i] = acc / static_cast<double>(res.yhat.size());
    });
    double acc = 0.0;
    for (double v : per) acc += v;
    return acc / static_cast<double>(val.size());
}

inline void write_history_csv(const std::filesystem::path& path,
                              const std::vector<neural::IterStats>& history) {
    std::ofstream out(path, std::ios::trunc);
    out << "iteration,lr,train_loss,val_loss\n";
    char buf[160];
    for (const auto& h : history) {
        std::snprintf(buf, sizeof(buf), "%d,%.8e,%.12e,%.12e\n", h.iteration, h.lr, h.train_loss,
                      h.val_loss);
        out << buf;
    }
}

} // namespace detail

// Training pipeline: split, featurize, grid-search loss weights on validation
// MSE, persist histories and the best checkpoint.
inline TrainArtifacts run_train(const ExperimentConfig& cfg, const std::filesystem::path& data_dir,
                                const std::filesystem::path& out_dir) {
    cfg.validate();
    std::filesystem::create_directories(out_dir);
    synth::DatasetReader reader(data_dir);
    const auto records = reader.read_all();
    const auto split = split_indices(records.size(), cfg.split, cfg.seed);
    const auto model_cfg = cfg.effective_model();

    std::vector<neural::TrainRecord> train_recs(split.train.size()), val_recs(split.val.size());
    parallel_for(split.train.size(),
                 [&](std::size_t i) { train_recs[i] = make_train_record(records[split.train[i]], cfg.features); });
    parallel_for(split.val.size(),
                 [&](std::size_t i) { val_recs[i] = make_train_record(records[split.val[i]], cfg.features); });

    std::vector<neural::LossWeights> grid = cfg.loss_weight_grid;
    if (grid.empty()) grid.push_back(cfg.loss_weights);

    TrainArtifacts art;
    std::optional<neural::TrainOutcome> best;
    std::size_t best_combo = 0;
    double best_mse = std::numeric_limits<double>::infinity();
    nlohmann::json selection = nlohmann::json::array();
    for (std::size_t g = 0; g < grid.size(); ++g) {
        auto outcome = neural::train(train_recs, val_recs, model_cfg, cfg.train, grid[g]);
        const auto hist_path = out_dir / ("history_" + std::to_string(g) + ".csv");
        detail::write_history_csv(hist_path, outcome.history);
        art.histories.push_back(hist_path);
        const double mse = detail::val_data_mse(val_recs, outcome.params, model_cfg);
        selection.push_back({{"combo", g},
                             {"lambda_lstm", grid[g].lambda_lstm},
                             {"lambda_cnn", grid[g].lambda_cnn},
                             {"lambda_nn", grid[g].lambda_nn},
                             {"lambda_pair", grid[g].lambda_pair},
                             {"best_iteration", outcome.best_iteration},
                             {"val_data_mse", mse}});
        if (mse < best_mse) {
            best_mse = mse;
            best_combo = g;
            best = std::move(outcome);
        }
    }

    art.best_combo = best_combo;
    art.best_val_mse = best_mse;
    art.checkpoint = out_dir / "checkpoint.bin";
    nlohmann::json meta{{"seed", cfg.seed},
                        {"iteration", best->best_iteration},
                        {"val_data_mse", best_mse},
                        {"loss_weights", grid[best_combo]},
                        {"selection", selection}};
    neural::save_checkpoint(art.checkpoint, best->params, model_cfg, meta);
    std::ofstream(out_dir / "selection.json", std::ios::trunc) << selection.dump(2) << "\n";
    return art;
}

inline const std::vector<std::string>& method_tags() {
    static const std::vector<std::string> tags{"ensemble", "savgol", "wiener", "tv", "wavelet"};
    return tags;
}

// Best baseline configuration per method at one noise level, chosen on the
// validation split by mean PSNR (perfect reconstructions count as 300 dB).
inline classical::BaselineConfig tune_baseline(const std::string& method,
                                               std::span<const synth::SignalRecord> val_records,
                                               double sigma, std::size_t sigma_index,
                                               const BaselineGrids& grids) {
    std::vector<classical::BaselineConfig> candidates;
    if (method == "savgol") {
        for (int w : grids.savgol_windows)
            for (int p : grids.savgol_polyorders) {
                if (p >= w) continue;
                classical::BaselineConfig c;
                c.method = "savgol";
                c.window = w;
                c.polyorder = p;
                candidates.push_back(c);
            }
    } else if (method == "wiener") {
        for (int w : grids.wiener_windows) {
            classical::BaselineConfig c;
            c.method = "wiener";
            c.window = w;
            candidates.push_back(c);
        }
    } else if (method == "tv") {
        for (double wgt : grids.tv_weights) {
            classical::BaselineConfig c;
            c.method = "tv";
            c.tv_weight = wgt;
            c.tv_max_iter = grids.tv_max_iter;
            c.tv_tol = grids.tv_tol;
            candidates.push_back(c);
        }
    } else if (method == "wavelet") {
        for (const auto& fam : grids.wavelet_families)
            for (int lv : grids.wavelet_levels)
                for (const auto& rule : grids.wavelet_rules) {
                    classical::BaselineConfig c;
                    c.method = "wavelet";
                    c.wavelet = {fam, lv, dsp::BoundaryMode::symmetric};
                    c.rule = rule == "hard" ? classical::ShrinkRule::hard
                                            : classical::ShrinkRule::soft;
                    candidates.push_back(c);
                }
    } else {
        throw ValidationError("tune_baseline: unknown method " + method);
    }

    double best_score = -std::numeric_limits<double>::infinity();
    std::size_t best = 0;
    for (std::size_t ci = 0; ci < candidates.size(); ++ci) {
        std::vector<double> scores(val_records.size());
        parallel_for(val_records.size(), [&](std::size_t i) {
            const auto chans = channels_at_sigma(val_records[i], sigma, sigma_index);
            const auto den = classical::apply_baseline(chans[0], candidates[ci]);
            std::vector<double> clean(val_records[i].clean.begin(), val_records[i].clean.end());
            const auto p = metrics::psnr(den, clean);
            scores[i] = p.infinite ? 300.0 : std::min(p.value, 300.0);
        });
        double mean = 0.0;
        for (double s : scores) mean += s;
        mean /= static_cast<double>(scores.size());
        if (mean > best_score) {
            best_score = mean;
            best = ci;
        }
    }
    return candidates[best];
}

struct ScatterPoint {
    std::string method;
    double sigma = 0.0;
    std::size_t record = 0;
    metrics::MetricValue noisy_psnr, denoised_psnr;
    double noisy_wmape = 0.0, denoised_wmape = 0.0;
};

struct CompareOutput {
    std::vector<metrics::EvalRow> rows;
    std::vector<ScatterPoint> scatter;
    nlohmann::json tuned; // per sigma, per method baseline choices
};

// Evaluates the ensemble and the four tuned baselines on the test split at
// every noise level in the grid.
inline CompareOutput run_compare_core(const ExperimentConfig& cfg,
                                      std::span<const synth::SignalRecord> records,
                                      const neural::Checkpoint& ck) {
    const auto split = split_indices(records.size(), cfg.split, cfg.seed);
    const auto model_cfg = cfg.effective_model();
    if (ck.config.series_length != model_cfg.series_length ||
        ck.config.signal_count != model_cfg.signal_count)
        throw ValidationError("compare: checkpoint shapes do not match the dataset");

    std::vector<synth::SignalRecord> val_records, test_records;
    for (auto i : split.val) val_records.push_back(records[i]);
    for (auto i : split.test) test_records.push_back(records[i]);

    CompareOutput out;
    out.tuned = nlohmann::json::object();
    for (std::size_t si = 0; si < cfg.noise_grid.size(); ++si) {
        const double sigma = cfg.noise_grid[si];
        nlohmann::json tuned_here = nlohmann::json::object();

        // per-record noisy channels + features, regenerated at this sigma
        std::vector<std::vector<std::vector<double>>> chans(test_records.size());
        parallel_for(test_records.size(), [&](std::size_t i) {
            chans[i] = channels_at_sigma(test_records[i], sigma, si);
        });

        for (const auto& method : method_tags()) {
            classical::BaselineConfig tuned_cfg;
            if (method != "ensemble") {
                tuned_cfg = tune_baseline(method, val_records, sigma, si, cfg.baselines);
                tuned_here[method] = tuned_cfg.describe();
            }
            std::vector<metrics::MetricValue> psnrs(test_records.size()), snrs(test_records.size());
            std::vector<metrics::MetricValue> wmapes(test_records.size());
            std::vector<ScatterPoint> points(test_records.size());
            std::vector<std::vector<double>> errors(test_records.size());
            parallel_for(test_records.size(), [&](std::size_t i) {
                const auto& rec = test_records[i];
                std::vector<double> clean(rec.clean.begin(), rec.clean.end());
                std::vector<double> yhat;
                if (method == "ensemble") {
                    neural::TrainRecord tr;
                    for (const auto& ch : chans[i])
                        tr.bundles.push_back(dsp::build_feature_bundle(ch, cfg.features));
                    const auto res = neural::model_forward(tr.bundles, ck.params, model_cfg,
                                                           neural::RunMode::eval);
                    yhat = res.yhat;
                } else {
                    yhat = classical::apply_baseline(chans[i][0], tuned_cfg);
                }
                psnrs[i] = metrics::psnr(yhat, clean);
                snrs[i] = metrics::snr(yhat, clean);
                wmapes[i] = metrics::MetricValue::of(metrics::wmape(yhat, clean));
                errors[i].resize(yhat.size());
                for (std::size_t k = 0; k < yhat.size(); ++k) errors[i][k] = yhat[k] - clean[k];

                ScatterPoint pt;
                pt.method = method;
                pt.sigma = sigma;
                pt.record = split.test[i];
                pt.noisy_psnr = metrics::psnr(chans[i][0], clean);
                pt.denoised_psnr = psnrs[i];
                pt.noisy_wmape = metrics::wmape(chans[i][0], clean);
                pt.denoised_wmape = wmapes[i].value;
                points[i] = std::move(pt);
            });

            metrics::EvalRow row;
            row.method = method;
            row.sigma_eps = sigma;
            row.psnr = metrics::aggregate(psnrs);
            row.snr = metrics::aggregate(snrs);
            row.wmape = metrics::aggregate(wmapes);
            row.n = test_records.size();
            // pooled per-sample errors for the boxplot quartiles
            std::vector<double> pooled, zeros;
            for (const auto& e : errors) pooled.insert(pooled.end(), e.begin(), e.end());
            zeros.assign(pooled.size(), 0.0);
            row.error_quartiles = metrics::error_stats(pooled, zeros);
            out.rows.push_back(std::move(row));
            out.scatter.insert(out.scatter.end(), points.begin(), points.end());
        }
        char key[32];
        std::snprintf(key, sizeof(key), "%.6f", sigma);
        out.tuned[key] = tuned_here;
    }
    return out;
}

namespace detail {

inline std::string metric_str(const metrics::MetricValue& v) {
    if (v.infinite) return "inf";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v.value);
    return buf;
}

} // namespace detail

inline void write_compare_outputs(const CompareOutput& out, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream csv(dir / "report.csv", std::ios::trunc);
        csv << metrics::eval_csv_header() << "\n";
        for (const auto& r : out.rows) csv << metrics::eval_csv_row(r) << "\n";
    }
    {
        nlohmann::json j;
        j["tuned_baselines"] = out.tuned;
        j["rows"] = nlohmann::json::array();
        for (const auto& r : out.rows) {
            j["rows"].push_back(
                {{"method", r.method},
                 {"sigma_eps", r.sigma_eps},
                 {"psnr_mean", r.psnr.mean_str()},
                 {"psnr_std", r.psnr.std_str()},
                 {"psnr_infinite", r.psnr.n_infinite},
                 {"snr_mean", r.snr.mean_str()},
                 {"snr_std", r.snr.std_str()},
                 {"snr_infinite", r.snr.n_infinite},
                 {"wmape_mean", r.wmape.mean_str()},
                 {"wmape_std", r.wmape.std_str()},
                 {"n", r.n},
                 {"error_quartiles",
                  {{"min", r.error_quartiles.min},
                   {"q1", r.error_quartiles.q1},
                   {"median", r.error_quartiles.median},
                   {"q3", r.error_quartiles.q3},
                   {"max", r.error_quartiles.max}}}});
        }
        std::ofstream(dir / "report.json", std::ios::trunc) << j.dump(2) << "\n";
    }
    {
        std::ofstream csv(dir / "scatter.csv", std::ios::trunc);
        csv << "method,sigma_eps,record,noisy_psnr,denoised_psnr,noisy_wmape,denoised_wmape\n";
        char buf[64];
        for (const auto& p : out.scatter) {
            std::snprintf(buf, sizeof(buf), "%.6f", p.sigma);
            csv << p.method << "," << buf << "," << p.record << ","
                << detail::metric_str(p.noisy_psnr) << "," << detail::metric_str(p.denoised_psnr);
            std::snprintf(buf, sizeof(buf), ",%.6f,%.6f\n", p.noisy_wmape, p.denoised_wmape);
            csv << buf;
        }
    }
}

inline CompareOutput run_compare(const ExperimentConfig& cfg, const std::filesystem::path& data_dir,
                                 const std::filesystem::path& checkpoint_path,
                                 const std::filesystem::path& out_dir) {
    cfg.validate();
    synth::DatasetReader reader(data_dir);
    const auto records = reader.read_all();
    const auto ck = neural::load_checkpoint(checkpoint_path);
    auto out = run_compare_core(cfg, records, ck);
    write_compare_outputs(out, out_dir);
    return out;
}

// Denoises every record in a dataset with one method and writes the result in
// the dataset binary layout with the clean slot replaced by yhat.
inline void run_denoise(const ExperimentConfig& cfg, const std::filesystem::path& data_dir,
                        const std::optional<std::filesystem::path>& checkpoint_path,
                        const std::string& method, const std::filesystem::path& out_dir) {
    bool known = false;
    for (const auto& t : method_tags()) known = known || t == method;
    if (!known) {
        std::string tags;
        for (const auto& t : method_tags()) tags += (tags.empty() ? "" : "|") + t;
        throw ValidationError("denoise: unknown method '" + method + "' (valid: " + tags + ")");
    }
    synth::DatasetReader reader(data_dir);
    std::optional<neural::Checkpoint> ck;
    neural::ModelConfig model_cfg = cfg.effective_model();
    if (method == "ensemble") {
        if (!checkpoint_path) throw ValidationError("denoise: ensemble needs --checkpoint");
        ck = neural::load_checkpoint(*checkpoint_path);
        if (ck->config.series_length != static_cast<int>(reader.series_length()) ||
            ck->config.signal_count != static_cast<int>(reader.channel_count()))
            throw ValidationError("denoise: checkpoint shapes do not match the dataset");
        model_cfg = ck->config;
    }
    classical::BaselineConfig bl;
    if (method != "ensemble") {
        bl.method = method;
        if (method == "savgol") {
            bl.window = cfg.baselines.savgol_windows.empty() ? 11 : cfg.baselines.savgol_windows[0];
            bl.polyorder =
                cfg.baselines.savgol_polyorders.empty() ? 3 : cfg.baselines.savgol_polyorders[0];
        } else if (method == "wiener") {
            bl.window = cfg.baselines.wiener_windows.empty() ? 11 : cfg.baselines.wiener_windows[0];
        } else if (method == "tv") {
            bl.tv_weight = cfg.baselines.tv_weights.empty() ? 0.1 : cfg.baselines.tv_weights[0];
            bl.tv_max_iter = cfg.baselines.tv_max_iter;
            bl.tv_tol = cfg.baselines.tv_tol;
        }
    }

    std::filesystem::create_directories(out_dir);
    const auto payload = out_dir / synth::kPayloadFileName;
    std::ofstream outf(payload, std::ios::binary | std::ios::trunc);
    if (!outf) throw RuntimeError("denoise: cannot open " + payload.string());
    outf.write(synth::kDatasetMagic, 4);
    const std::uint32_t version = synth::kDatasetFormatVersion;
    outf.write(reinterpret_cast<const char*>(&version), sizeof(version));
    const std::uint64_t count = reader.record_count();
    outf.write(reinterpret_cast<const char*>(&count), sizeof(count));
    const std::uint32_t t = reader.series_length(), m = reader.channel_count();
    outf.write(reinterpret_cast<const char*>(&t), sizeof(t));
    outf.write(reinterpret_cast<const char*>(&m), sizeof(m));

    while (auto rec = reader.next()) {
        std::vector<double> yhat;
        if (method == "ensemble") {
            neural::TrainRecord tr = make_train_record(*rec, cfg.features);
            yhat = neural::model_forward(tr.bundles, ck->params, model_cfg, neural::RunMode::eval)
                       .yhat;
        } else {
            std::vector<double> ch0(rec->channels[0].begin(), rec->channels[0].end());
            yhat = classical::apply_baseline(ch0, bl);
        }
        outf.write(reinterpret_cast<const char*>(&rec->seed), sizeof(rec->seed));
        outf.write(reinterpret_cast<const char*>(&rec->sigma_eps), sizeof(rec->sigma_eps));
        std::vector<float> yf(yhat.size());
        for (std::size_t i = 0; i < yhat.size(); ++i) yf[i] = static_cast<float>(yhat[i]);
        outf.write(reinterpret_cast<const char*>(yf.data()),
                   static_cast<std::streamsize>(yf.size() * sizeof(float)));
        for (const auto& ch : rec->channels)
            outf.write(reinterpret_cast<const char*>(ch.data()),
                       static_cast<std::streamsize>(ch.size() * sizeof(float)));
    }
    if (!outf) throw RuntimeError("denoise: write failure on " + payload.string());

    // manifest copied so the output stays loadable
    synth::DatasetManifest manifest;
    manifest.record_count = count;
    manifest.series_length = t;
    manifest.channel_count = m;
    if (reader.manifest()) {
        manifest = *reader.manifest();
    }
    nlohmann::json mj = manifest;
    mj["denoised_with"] = method;
    std::ofstream(out_dir / synth::kManifestFileName, std::ios::trunc) << mj.dump(2) << "\n";
}

} // namespace vibro::bench
