#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vibro/error.hpp"
#include "vibro/parallel.hpp"
#include "vibro/rng.hpp"
#include "vibro/synth.hpp"

namespace vibro::synth {

static_assert(std::endian::native == std::endian::little,
              "dataset payload is defined little-endian");

inline constexpr std::uint32_t kDatasetFormatVersion = 1;
inline constexpr char kDatasetMagic[4] = {'V', 'I', 'B', 'D'};
inline constexpr const char* kPayloadFileName = "dataset.vibd";
inline constexpr const char* kManifestFileName = "manifest.json";

struct DatasetConfig {
    std::uint64_t record_count = 2000;
    std::uint32_t series_length = 500;
    std::uint32_t channel_count = 2;
    double sample_rate = 200.0; // [Hz]
    int rk_substeps = 4;
    double sigma_eps_min = 0.0;
    double sigma_eps_max = 0.2;
    std::uint64_t seed = 1;
    ScenarioDistribution distribution;

    double dt() const { return 1.0 / sample_rate; }
    double duration() const { return static_cast<double>(series_length) * dt(); }

    void validate() const {
        if (record_count < 1) throw ValidationError("dataset.record_count: must be >= 1");
        if (series_length < 8) throw ValidationError("dataset.series_length: must be >= 8");
        if (channel_count < 1) throw ValidationError("dataset.channel_count: must be >= 1");
        if (sample_rate <= 0) throw ValidationError("dataset.sample_rate: must be > 0");
        if (rk_substeps < 1) throw ValidationError("dataset.rk_substeps: must be >= 1");
        if (sigma_eps_min < 0 || sigma_eps_max < sigma_eps_min)
            throw ValidationError("dataset.sigma_eps range: need 0 <= min <= max");
        try {
            distribution.validate();
        } catch (const ValidationError& e) {
            throw ValidationError(std::string("dataset.distribution: ") + e.what());
        }
    }
};

inline void to_json(nlohmann::json& j, const ScenarioDistribution& d) {
    j = {{"mu_D", d.mu_D},           {"sigma_D", d.sigma_D},
         {"mu_T", d.mu_T},           {"sigma_T", d.sigma_T},
         {"mu_rho_h", d.mu_rho_h},   {"sigma_rho_h", d.sigma_rho_h},
         {"a_U", d.a_U},             {"b_U", d.b_U},
         {"scenario_count", {d.scenario_count_min, d.scenario_count_max}},
         {"impulse_count", {d.impulse_count_min, d.impulse_count_max}},
         {"plate_span_m", d.plate_span},
         {"mode_count", d.mode_count},
         {"impulse_window_fraction", d.impulse_window_fraction},
         {"impulse_amplitude", {d.impulse_amp_min, d.impulse_amp_max}}};
}

inline void from_json(const nlohmann::json& j, ScenarioDistribution& d) {
    d.mu_D = j.value("mu_D", d.mu_D);
    d.sigma_D = j.value("sigma_D", d.sigma_D);
    d.mu_T = j.value("mu_T", d.mu_T);
    d.sigma_T = j.value("sigma_T", d.sigma_T);
    d.mu_rho_h = j.value("mu_rho_h", d.mu_rho_h);
    d.sigma_rho_h = j.value("sigma_rho_h", d.sigma_rho_h);
    d.a_U = j.value("a_U", d.a_U);
    d.b_U = j.value("b_U", d.b_U);
    if (j.contains("scenario_count")) {
        d.scenario_count_min = j["scenario_count"].at(0).get<int>();
        d.scenario_count_max = j["scenario_count"].at(1).get<int>();
    }
    if (j.contains("impulse_count")) {
        d.impulse_count_min = j["impulse_count"].at(0).get<int>();
        d.impulse_count_max = j["impulse_count"].at(1).get<int>();
    }
    d.plate_span = j.value("plate_span_m", d.plate_span);
    d.mode_count = j.value("mode_count", d.mode_count);
    d.impulse_window_fraction = j.value("impulse_window_fraction", d.impulse_window_fraction);
    if (j.contains("impulse_amplitude")) {
        d.impulse_amp_min = j["impulse_amplitude"].at(0).get<double>();
        d.impulse_amp_max = j["impulse_amplitude"].at(1).get<double>();
    }
}

inline void to_json(nlohmann::json& j, const DatasetConfig& c) {
    j = {{"record_count", c.record_count},
         {"series_length", c.series_length},
         {"channel_count", c.channel_count},
         {"sample_rate_hz", c.sample_rate},
         {"rk_substeps", c.rk_substeps},
         {"sigma_eps_min", c.sigma_eps_min},
         {"sigma_eps_max", c.sigma_eps_max},
         {"seed", c.seed},
         {"distribution", c.distribution}};
}

inline void from_json(const nlohmann::json& j, DatasetConfig& c) {
    c.record_count = j.value("record_count", c.record_count);
    c.series_length = j.value("series_length", c.series_length);
    c.channel_count = j.value("channel_count", c.channel_count);
    c.sample_rate = j.value("sample_rate_hz", c.sample_rate);
    c.rk_substeps = j.value("rk_substeps", c.rk_substeps);
    c.sigma_eps_min = j.value("sigma_eps_min", c.sigma_eps_min);
    c.sigma_eps_max = j.value("sigma_eps_max", c.sigma_eps_max);
    c.seed = j.value("seed", c.seed);
    if (j.contains("distribution")) j["distribution"].get_to(c.distribution);
}

// The dataset atom: one clean series with m noisy observations of it.
struct SignalRecord {
    std::uint64_t seed = 0;
    float sigma_eps = 0.0f;
    std::vector<float> clean;
    std::vector<std::vector<float>> channels;
    std::uint64_t scenario_digest = 0; // provenance hash; not serialized
};

struct DatasetManifest {
    std::uint64_t record_count = 0;
    std::uint32_t series_length = 0;
    std::uint32_t channel_count = 0;
    double sigma_eps_min = 0.0;
    double sigma_eps_max = 0.0;
    std::uint64_t global_seed = 0;
    std::uint32_t format_version = kDatasetFormatVersion;
    nlohmann::json config_echo;
};

inline void to_json(nlohmann::json& j, const DatasetManifest& m) {
    j = {{"record_count", m.record_count},
         {"series_length", m.series_length},
         {"channel_count", m.channel_count},
         {"sigma_eps_min", m.sigma_eps_min},
         {"sigma_eps_max", m.sigma_eps_max},
         {"global_seed", m.global_seed},
         {"format_version", m.format_version},
         {"config", m.config_echo}};
}

inline void from_json(const nlohmann::json& j, DatasetManifest& m) {
    j.at("record_count").get_to(m.record_count);
    j.at("series_length").get_to(m.series_length);
    j.at("channel_count").get_to(m.channel_count);
    m.sigma_eps_min = j.value("sigma_eps_min", 0.0);
    m.sigma_eps_max = j.value("sigma_eps_max", 0.0);
    m.global_seed = j.value("global_seed", std::uint64_t{0});
    m.format_version = j.value("format_version", kDatasetFormatVersion);
    if (j.contains("config")) m.config_echo = j["config"];
}

namespace detail {

inline std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ULL;
    }
    return h;
}

inline std::uint64_t digest_scenario(std::uint64_t h, const PlateScenario& s) {
    const double fields[4] = {s.flexural_rigidity, s.membrane_tension, s.areal_density, s.damping};
    h = fnv1a(h, fields, sizeof(fields));
    h = fnv1a(h, s.impulse_times.data(), s.impulse_times.size() * sizeof(double));
    h = fnv1a(h, s.impulse_amplitudes.data(), s.impulse_amplitudes.size() * sizeof(double));
    return h;
}

} // namespace detail

// Deterministically synthesizes record `index`: every record derives its own
// child seed from (global seed, index), so generation order cannot matter.
inline SignalRecord synthesize_record(const DatasetConfig& cfg, std::uint64_t index) {
    const std::uint64_t child = derive_seed(cfg.seed, {0x7265636f72640000ULL, index});
    Rng rng(child);
    const double duration = cfg.duration();

    const int n_scen = static_cast<int>(rng.uniform_int(cfg.distribution.scenario_count_min,
                                                        cfg.distribution.scenario_count_max));
    std::vector<double> sum(cfg.series_length, 0.0);
    std::uint64_t digest = 0xcbf29ce484222325ULL;
    for (int sc = 0; sc < n_scen; ++sc) {
        const PlateScenario scenario = sample_scenario(cfg.distribution, rng, duration);
        digest = detail::digest_scenario(digest, scenario);
        const auto modes = modal_reduction(scenario);
        std::vector<Impulse> impulses(scenario.impulse_times.size());
        for (std::size_t i = 0; i < impulses.size(); ++i)
            impulses[i] = {scenario.impulse_times[i], scenario.impulse_amplitudes[i]};
        const auto w = integrate_modes(modes, impulses, cfg.series_length, cfg.dt(), cfg.rk_substeps);
        for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += w[i];
    }
    normalize_peak(sum);

    SignalRecord rec;
    rec.seed = child;
    rec.scenario_digest = digest;
    rec.sigma_eps = static_cast<float>(rng.uniform(cfg.sigma_eps_min, cfg.sigma_eps_max));
    rec.clean.resize(cfg.series_length);
    for (std::size_t i = 0; i < sum.size(); ++i) rec.clean[i] = static_cast<float>(sum[i]);
    rec.channels = inject_noise(rec.clean, rec.sigma_eps, cfg.channel_count, rng);
    return rec;
}

namespace detail {

template <typename T>
void write_raw(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
bool read_raw(std::ifstream& in, T& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    return in.gcount() == static_cast<std::streamsize>(sizeof(T));
}

} // namespace detail

// Writes payload + JSON manifest into `dir`. Records are synthesized in
// parallel blocks and written in index order.
inline DatasetManifest generate_dataset(const DatasetConfig& cfg,
                                        const std::filesystem::path& dir) {
    cfg.validate();
    std::filesystem::create_directories(dir);
    const auto payload_path = dir / kPayloadFileName;
    std::ofstream out(payload_path, std::ios::binary | std::ios::trunc);
    if (!out) throw RuntimeError("generate_dataset: cannot open " + payload_path.string());

    out.write(kDatasetMagic, 4);
    detail::write_raw(out, kDatasetFormatVersion);
    detail::write_raw(out, cfg.record_count);
    detail::write_raw(out, cfg.series_length);
    detail::write_raw(out, cfg.channel_count);

    const std::size_t block = 64;
    const std::size_t n = static_cast<std::size_t>(cfg.record_count);
    const std::size_t n_blocks = (n + block - 1) / block;
    std::vector<SignalRecord> buffer;
    for (std::size_t b = 0; b < n_blocks; ++b) {
        const std::size_t lo = b * block, hi = std::min(n, (b + 1) * block);
        buffer.assign(hi - lo, {});
        parallel_for(hi - lo, [&](std::size_t i) {
            buffer[i] = synthesize_record(cfg, static_cast<std::uint64_t>(lo + i));
        });
        for (const auto& rec : buffer) {
            detail::write_raw(out, rec.seed);
            detail::write_raw(out, rec.sigma_eps);
            out.write(reinterpret_cast<const char*>(rec.clean.data()),
                      static_cast<std::streamsize>(rec.clean.size() * sizeof(float)));
            for (const auto& ch : rec.channels)
                out.write(reinterpret_cast<const char*>(ch.data()),
                          static_cast<std::streamsize>(ch.size() * sizeof(float)));
        }
    }
    out.flush();
    if (!out) throw RuntimeError("generate_dataset: write failure on " + payload_path.string());
    out.close();

    DatasetManifest manifest;
    manifest.record_count = cfg.record_count;
    manifest.series_length = cfg.series_length;
    manifest.channel_count = cfg.channel_count;
    manifest.sigma_eps_min = cfg.sigma_eps_min;
    manifest.sigma_eps_max = cfg.sigma_eps_max;
    manifest.global_seed = cfg.seed;
    manifest.format_version = kDatasetFormatVersion;
    manifest.config_echo = cfg;
    std::ofstream mout(dir / kManifestFileName, std::ios::trunc);
    mout << nlohmann::json(manifest).dump(2) << "\n";
    if (!mout) throw RuntimeError("generate_dataset: cannot write manifest");
    return manifest;
}

// Loader failure modes, each distinct so callers can report precisely.
class DatasetError : public RuntimeError {
  public:
    using RuntimeError::RuntimeError;
};
class BadMagicError : public DatasetError {
  public:
    using DatasetError::DatasetError;
};
class VersionMismatchError : public DatasetError {
  public:
    using DatasetError::DatasetError;
};
class TruncatedPayloadError : public DatasetError {
  public:
    using DatasetError::DatasetError;
};
class CountMismatchError : public DatasetError {
  public:
    using DatasetError::DatasetError;
};

// Streaming reader: constant memory in the record count.
class DatasetReader {
  public:
    explicit DatasetReader(const std::filesystem::path& path) {
        const auto dir = std::filesystem::is_directory(path) ? path : path.parent_path();
        payload_path_ = std::filesystem::is_directory(path) ? path / kPayloadFileName : path;
        in_.open(payload_path_, std::ios::binary);
        if (!in_) throw DatasetError("dataset: cannot open " + payload_path_.string());

        char magic[4] = {};
        in_.read(magic, 4);
        if (in_.gcount() != 4 || std::memcmp(magic, kDatasetMagic, 4) != 0)
            throw BadMagicError("dataset: bad magic in " + payload_path_.string());
        std::uint32_t version = 0;
        if (!detail::read_raw(in_, version)) throw TruncatedPayloadError("dataset: truncated header");
        if (version != kDatasetFormatVersion)
            throw VersionMismatchError("dataset: format version " + std::to_string(version) +
                                       ", expected " + std::to_string(kDatasetFormatVersion));
        if (!detail::read_raw(in_, record_count_) || !detail::read_raw(in_, series_length_) ||
            !detail::read_raw(in_, channel_count_))
            throw TruncatedPayloadError("dataset: truncated header");

        const auto manifest_path = dir / kManifestFileName;
        if (std::filesystem::exists(manifest_path)) {
            std::ifstream min(manifest_path);
            nlohmann::json j;
            min >> j;
            manifest_ = j.get<DatasetManifest>();
            if (manifest_->record_count != record_count_)
                throw CountMismatchError(
                    "dataset: manifest record_count " + std::to_string(manifest_->record_count) +
                    " != payload record_count " + std::to_string(record_count_));
        }
    }

    std::uint64_t record_count() const { return record_count_; }
    std::uint32_t series_length() const { return series_length_; }
    std::uint32_t channel_count() const { return channel_count_; }
    const std::optional<DatasetManifest>& manifest() const { return manifest_; }

    // Next record, or nullopt after the last. Throws TruncatedPayloadError on
    // short reads; no partial record is ever returned.
    std::optional<SignalRecord> next() {
        if (read_ == record_count_) {
            // trailing bytes beyond the declared count are a count mismatch
            char probe;
            if (in_.read(&probe, 1); in_.gcount() == 1)
                throw CountMismatchError("dataset: payload has data beyond declared record count");
            return std::nullopt;
        }
        SignalRecord rec;
        if (!detail::read_raw(in_, rec.seed) || !detail::read_raw(in_, rec.sigma_eps))
            throw TruncatedPayloadError("dataset: truncated at record " + std::to_string(read_));
        rec.clean.resize(series_length_);
        if (!read_block(rec.clean))
            throw TruncatedPayloadError("dataset: truncated at record " + std::to_string(read_));
        rec.channels.assign(channel_count_, std::vector<float>(series_length_));
        for (auto& ch : rec.channels)
            if (!read_block(ch))
                throw TruncatedPayloadError("dataset: truncated at record " + std::to_string(read_));
        ++read_;
        return rec;
    }

    // Convenience: load everything (tests, desk-scale runs).
    std::vector<SignalRecord> read_all() {
        std::vector<SignalRecord> all;
        all.reserve(static_cast<std::size_t>(record_count_));
        while (auto r = next()) all.push_back(std::move(*r));
        return all;
    }

  private:
    bool read_block(std::vector<float>& v) {
        in_.read(reinterpret_cast<char*>(v.data()),
                 static_cast<std::streamsize>(v.size() * sizeof(float)));
        return in_.gcount() == static_cast<std::streamsize>(v.size() * sizeof(float));
    }

    std::filesystem::path payload_path_;
    std::ifstream in_;
    std::uint64_t record_count_ = 0;
    std::uint32_t series_length_ = 0;
    std::uint32_t channel_count_ = 0;
    std::uint64_t read_ = 0;
    std::optional<DatasetManifest> manifest_;
};

} // namespace vibro::synth
