#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lootwatch/eval.hpp"
#include "lootwatch/explain.hpp"
#include "lootwatch/raster.hpp"
#include "lootwatch/synth.hpp"
#include "lootwatch/temporal.hpp"

namespace lootwatch {

enum class FeatureKind { handcrafted, embedding };

struct FeatureSource {
    FeatureKind kind = FeatureKind::handcrafted;
    std::filesystem::path path;  // embedding CSV, as written in the config
    std::string family;
};

struct SynthSettings {
    std::size_t n_sites = 400;
    double looted_fraction = 0.46;
    std::vector<YearMonth> months;
    SceneParams params;
};

/// Parsed configuration file. Relative paths resolve against `base_dir`
/// (the directory holding the config file); outputs only ever echo them as written.
struct RunConfig {
    std::filesystem::path base_dir;
    std::optional<std::filesystem::path> manifest;
    FeatureSource features;
    bool masking = true;
    std::string mask_dilation = "off";  // off | to_training_median
    std::vector<YearMonth> months;
    Aggregation aggregation = Aggregation::mean;
    ModelKind model = ModelKind::forest;
    std::optional<nlohmann::json> grid;
    int k_folds = 5;
    SplitMode split_mode = SplitMode::kfold;
    std::optional<std::uint64_t> seed;
    std::optional<std::filesystem::path> out;
    int jobs = 1;
    std::optional<SynthSettings> synth;
    ExplainSettings explain;

    std::uint64_t require_seed() const;
    const std::filesystem::path& require_out() const;
    std::filesystem::path resolve(const std::filesystem::path& p) const;
};

RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

/// Canonical echo of every setting that can change an output (not `out`, not `jobs`).
nlohmann::ordered_json config_echo(const RunConfig& config);
std::string config_hash(const RunConfig& config);
/// `<kind>_s<seed>_<hash>`
std::string output_stem(const RunConfig& config, std::string_view kind);

ExperimentConfig experiment_config(const RunConfig& config);

/// Handcrafted month sequences read from disk for every manifest entry; unmasked
/// extraction uses the whole patch.
std::vector<SiteData> extract_sites(const SiteManifest& manifest, std::span<const YearMonth> months, bool masked);
/// Re-extracts one site with its mask dilated to at least `target_area`.
MonthlySequence extract_dilated(const SiteManifest& manifest, const std::string& site_id,
                                std::span<const YearMonth> months, std::size_t target_area);

struct SynthBenchmark {
    std::vector<PlannedSite> plan;
    std::vector<SiteData> masked;    // empty unless requested
    std::vector<SiteData> unmasked;  // empty unless requested
};

/// Generates and extracts a synthetic dataset in memory; labels are the recorded ones.
SynthBenchmark synth_benchmark(std::size_t n_sites, double looted_fraction, std::span<const YearMonth> months,
                               const SceneParams& params, std::uint64_t seed, bool want_masked, bool want_unmasked);

/// Files written by a command, relative to its output directory.
struct CommandOutput {
    std::filesystem::path out_dir;
    std::vector<std::string> files;
};

CommandOutput cmd_synth(const RunConfig& config);
CommandOutput cmd_extract(const RunConfig& config);
CommandOutput cmd_aggregate(const RunConfig& config);
CommandOutput cmd_run(const RunConfig& config);
CommandOutput cmd_explain(const RunConfig& config);
/// Joins every summary_*.csv under `dir` into one table keyed by
/// (feature, aggregation, model, masking), written to `out_dir`.
CommandOutput cmd_report(const std::filesystem::path& dir, const std::filesystem::path& out_dir);

/// Exit status for an error kind: 2 config, 3 data, 4 invariant.
int exit_code(ErrorKind kind);
std::string error_record(ErrorKind kind, std::string_view message);

}  // namespace lootwatch
