#include "lootwatch/app.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "lootwatch/embeddings.hpp"
#include "lootwatch/features.hpp"

namespace lootwatch {

namespace {

const std::set<std::string> kConfigKeys{"manifest", "features",    "masking", "mask_dilation", "months",
                                        "aggregation", "model",    "grid",    "k_folds",       "split_mode",
                                        "seed",     "out",         "jobs",    "synth",         "explain"};

template <typename T>
T get_as(const nlohmann::json& j, const char* key) {
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
}

std::vector<YearMonth> parse_months(const nlohmann::json& j, const char* where) {
    std::vector<YearMonth> months;
    try {
        if (j.is_array()) {
            for (const auto& m : j) months.push_back(YearMonth::parse(m.get<std::string>()));
        } else if (j.is_object()) {
            months = month_range(YearMonth::parse(j.at("first").get<std::string>()),
                                 YearMonth::parse(j.at("last").get<std::string>()));
        } else {
            throw ConfigError(std::string(where) + " must be a list of YYYY_MM or {first, last}");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string(where) + ": " + e.what());
    } catch (const DataError& e) {
        throw ConfigError(std::string(where) + ": " + e.what());
    }
    if (months.empty()) throw ConfigError(std::string(where) + " is empty");
    std::sort(months.begin(), months.end());
    if (std::adjacent_find(months.begin(), months.end()) != months.end())
        throw ConfigError(std::string(where) + " lists a month twice");
    for (const auto& ym : months)
        if (!is_usable_month(ym)) throw ConfigError(std::string(where) + ": month " + ym.str() + " is outside 2017-01..2023-12");
    return months;
}

nlohmann::ordered_json months_json(std::span<const YearMonth> months) {
    auto a = nlohmann::ordered_json::array();
    for (const auto& ym : months) a.push_back(ym.str());
    return a;
}

std::string generic(const std::filesystem::path& p) { return p.generic_string(); }

void write_output(CommandOutput& out, const std::string& name, std::string_view text) {
    write_text_file(out.out_dir / name, text);
    out.files.push_back(name);
}

void write_digests(CommandOutput& out, const std::string& stem) {
    nlohmann::ordered_json files = nlohmann::ordered_json::object();
    auto names = out.files;
    std::sort(names.begin(), names.end());
    for (const auto& n : names) files[n] = digest_file(out.out_dir / n);
    nlohmann::ordered_json j;
    j["digest"] = "fnv1a64";
    j["files"] = files;
    write_output(out, "digests_" + stem + ".json", j.dump(2) + "\n");
}

CommandOutput begin_output(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw DataError("cannot create output directory " + dir.string() + ": " + ec.message());
    return {dir, {}};
}

const std::vector<YearMonth>& require_months(const RunConfig& c) {
    if (c.months.empty()) throw ConfigError("config needs 'months'");
    return c.months;
}

SiteManifest require_manifest(const RunConfig& c) {
    if (!c.manifest) throw ConfigError("config needs 'manifest'");
    const auto path = c.resolve(*c.manifest);
    if (!std::filesystem::exists(path)) throw ConfigError("manifest not found: " + generic(*c.manifest));
    auto manifest = load_manifest(path);
    validate_manifest(manifest);
    return manifest;
}

MonthlySequence extract_sequence(const SiteManifest& manifest, const ManifestEntry& e, const Mask& mask,
                                 std::span<const YearMonth> months) {
    MonthlySequence seq;
    seq.site_id = e.site_id;
    for (const auto& ym : months) {
        const auto path = manifest.patch_file(e, ym);
        if (!std::filesystem::exists(path))
            throw DataError("site '" + e.site_id + "' has no patch for " + ym.str());
        const Patch patch = load_patch(path);
        const auto hv = extract_handcrafted(patch, mask);
        seq.months.push_back(ym);
        seq.vectors.emplace_back(hv.values.begin(), hv.values.end());
    }
    return seq;
}

std::string feature_layout(const RunConfig& c) {
    std::string base = c.features.kind == FeatureKind::handcrafted
                           ? std::string(kHandcraftedLayoutVersion)
                           : c.features.family + "-" + std::to_string(family_dim(parse_family(c.features.family)));
    return base + "/" + std::string(aggregation_name(c.aggregation));
}

std::vector<SiteData> load_site_data(const RunConfig& c, const SiteManifest& manifest) {
    const auto& months = require_months(c);
    if (c.features.kind == FeatureKind::handcrafted) return extract_sites(manifest, months, c.masking);

    const auto path = c.resolve(c.features.path);
    if (!std::filesystem::exists(path)) throw ConfigError("embedding file not found: " + generic(c.features.path));
    const auto series = load_embeddings(path, c.features.family);
    if (series.masked != c.masking)
        throw ConfigError(std::string("embedding file is ") + (series.masked ? "masked" : "unmasked") +
                          " but config sets masking to " + (c.masking ? "true" : "false"));
    auto seqs = align_series(series.table, manifest, months);
    std::vector<SiteData> sites;
    for (std::size_t i = 0; i < seqs.size(); ++i)
        sites.push_back({manifest.entries[i].site_id, manifest.entries[i].label, std::move(seqs[i]), 0});
    return sites;
}

/// Per-column names for an aggregated row.
std::vector<std::string> aggregated_names(const RunConfig& c, std::size_t month_dim) {
    std::vector<std::string> base;
    if (c.features.kind == FeatureKind::handcrafted) base = handcrafted_feature_names();
    else
        for (std::size_t j = 0; j < month_dim; ++j) base.push_back(feature_column_name(j, month_dim));
    if (c.aggregation != Aggregation::concat) return base;
    std::vector<std::string> out;
    for (const auto& ym : c.months)
        for (const auto& n : base) out.push_back(n + "@" + ym.str());
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------

std::uint64_t RunConfig::require_seed() const {
    if (!seed) throw ConfigError("config needs an explicit 'seed' (or --seed)");
    return *seed;
}

const std::filesystem::path& RunConfig::require_out() const {
    if (!out) throw ConfigError("config needs 'out' (or --out)");
    return *out;
}

std::filesystem::path RunConfig::resolve(const std::filesystem::path& p) const {
    return p.is_absolute() ? p : base_dir / p;
}

RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!kConfigKeys.contains(it.key())) throw ConfigError("unknown config key '" + it.key() + "'");

    RunConfig c;
    c.base_dir = base_dir;
    if (j.contains("manifest")) c.manifest = get_as<std::string>(j, "manifest");
    if (j.contains("features")) {
        const auto& f = j.at("features");
        const std::string source = f.is_string() ? f.get<std::string>() : get_as<std::string>(f, "source");
        if (source == "handcrafted") {
            c.features.kind = FeatureKind::handcrafted;
        } else if (source == "embedding") {
            if (!f.is_object()) throw ConfigError("embedding features need {source, path, family}");
            c.features.kind = FeatureKind::embedding;
            c.features.path = get_as<std::string>(f, "path");
            c.features.family = get_as<std::string>(f, "family");
            parse_family(c.features.family);
        } else {
            throw ConfigError("unknown feature source '" + source + "' (expected handcrafted|embedding)");
        }
    }
    if (j.contains("masking")) c.masking = get_as<bool>(j, "masking");
    if (j.contains("mask_dilation")) {
        c.mask_dilation = get_as<std::string>(j, "mask_dilation");
        if (c.mask_dilation != "off" && c.mask_dilation != "to_training_median")
            throw ConfigError("mask_dilation must be off|to_training_median");
    }
    if (c.mask_dilation != "off" && (!c.masking || c.features.kind != FeatureKind::handcrafted))
        throw ConfigError("mask dilation applies to masked handcrafted features only");
    if (j.contains("months")) c.months = parse_months(j.at("months"), "months");
    if (j.contains("aggregation")) c.aggregation = parse_aggregation(get_as<std::string>(j, "aggregation"));
    if (j.contains("model")) c.model = parse_model_kind(get_as<std::string>(j, "model"));
    if (j.contains("grid")) {
        c.grid = j.at("grid");
        grid_from_json(c.model, *c.grid);
    }
    if (j.contains("k_folds")) c.k_folds = get_as<int>(j, "k_folds");
    if (c.k_folds < 2) throw ConfigError("k_folds must be >= 2");
    if (j.contains("split_mode")) c.split_mode = parse_split_mode(get_as<std::string>(j, "split_mode"));
    if (j.contains("seed")) {
        if (!j.at("seed").is_number_unsigned()) throw ConfigError("seed must be a non-negative integer");
        c.seed = j.at("seed").get<std::uint64_t>();
    }
    if (j.contains("out")) c.out = get_as<std::string>(j, "out");
    if (j.contains("jobs")) c.jobs = get_as<int>(j, "jobs");
    if (c.jobs < 1) throw ConfigError("jobs must be >= 1");
    if (j.contains("synth")) {
        const auto& s = j.at("synth");
        if (!s.is_object()) throw ConfigError("synth must be an object");
        for (auto it = s.begin(); it != s.end(); ++it)
            if (it.key() != "n_sites" && it.key() != "looted_fraction" && it.key() != "months" && it.key() != "params")
                throw ConfigError("unknown synth key '" + it.key() + "'");
        SynthSettings st;
        if (s.contains("n_sites")) st.n_sites = get_as<std::size_t>(s, "n_sites");
        if (s.contains("looted_fraction")) st.looted_fraction = get_as<double>(s, "looted_fraction");
        st.months = s.contains("months") ? parse_months(s.at("months"), "synth.months") : c.months;
        if (s.contains("params")) st.params = scene_params_from_json(s.at("params"));
        c.synth = std::move(st);
    }
    if (j.contains("explain")) c.explain = explain_settings_from_json(j.at("explain"));
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config is not valid JSON: " + std::string(e.what()));
    }
    return parse_run_config(j, path.parent_path());
}

nlohmann::ordered_json config_echo(const RunConfig& c) {
    nlohmann::ordered_json j;
    j["manifest"] = c.manifest ? nlohmann::ordered_json(generic(*c.manifest)) : nlohmann::ordered_json(nullptr);
    if (c.features.kind == FeatureKind::handcrafted) {
        j["features"] = {{"source", "handcrafted"}, {"layout", kHandcraftedLayoutVersion}};
    } else {
        j["features"] = {{"source", "embedding"}, {"path", generic(c.features.path)}, {"family", c.features.family}};
    }
    j["masking"] = c.masking;
    j["mask_dilation"] = c.mask_dilation;
    j["months"] = months_json(c.months);
    j["aggregation"] = aggregation_name(c.aggregation);
    j["model"] = model_kind_name(c.model);
    auto grid = nlohmann::ordered_json::array();
    for (const auto& hp : c.grid ? grid_from_json(c.model, *c.grid) : default_grid(c.model))
        grid.push_back(hyperparams_to_json(c.model, hp));
    j["grid"] = grid;
    j["k_folds"] = c.k_folds;
    j["split_mode"] = split_mode_name(c.split_mode);
    j["seed"] = c.seed ? nlohmann::ordered_json(*c.seed) : nlohmann::ordered_json(nullptr);
    if (c.synth) {
        j["synth"] = {{"n_sites", c.synth->n_sites},
                      {"looted_fraction", c.synth->looted_fraction},
                      {"months", months_json(c.synth->months)},
                      {"params", scene_params_to_json(c.synth->params)}};
    }
    j["explain"] = explain_settings_to_json(c.explain);
    return j;
}

std::string config_hash(const RunConfig& c) { return Fnv1a().update(config_echo(c).dump()).hex(); }

std::string output_stem(const RunConfig& c, std::string_view kind) {
    return std::string(kind) + "_s" + std::to_string(c.require_seed()) + "_" + config_hash(c);
}

ExperimentConfig experiment_config(const RunConfig& c) {
    ExperimentConfig e;
    e.aggregation = c.aggregation;
    e.model = c.model;
    if (c.grid) e.grid = grid_from_json(c.model, *c.grid);
    e.k_folds = c.k_folds;
    e.split_mode = c.split_mode;
    e.seed = c.require_seed();
    e.feature_source = c.features.kind == FeatureKind::handcrafted ? "handcrafted" : c.features.family;
    e.masked = c.masking;
    e.mask_dilation = c.mask_dilation;
    return e;
}

std::vector<SiteData> extract_sites(const SiteManifest& manifest, std::span<const YearMonth> months, bool masked) {
    std::vector<SiteData> sites(manifest.entries.size());
    parallel_for(manifest.entries.size(), [&](std::size_t i) {
        const ManifestEntry& e = manifest.entries[i];
        const Mask footprint = load_mask(manifest.mask_file(e));
        const Mask mask = masked ? footprint : Mask::full(footprint.width, footprint.height);
        sites[i] = {e.site_id, e.label, extract_sequence(manifest, e, mask, months), footprint.area()};
    });
    return sites;
}

MonthlySequence extract_dilated(const SiteManifest& manifest, const std::string& site_id,
                                std::span<const YearMonth> months, std::size_t target_area) {
    const ManifestEntry& e = manifest.find(site_id);
    const Mask mask = dilate_to_min_area(load_mask(manifest.mask_file(e)), target_area);
    return extract_sequence(manifest, e, mask, months);
}

SynthBenchmark synth_benchmark(std::size_t n_sites, double looted_fraction, std::span<const YearMonth> months,
                               const SceneParams& params, std::uint64_t seed, bool want_masked, bool want_unmasked) {
    SynthBenchmark out;
    out.plan = plan_sites(n_sites, looted_fraction, params, seed);
    if (want_masked) out.masked.resize(n_sites);
    if (want_unmasked) out.unmasked.resize(n_sites);
    parallel_for(n_sites, [&](std::size_t i) {
        const PlannedSite& s = out.plan[i];
        const Scene scene = build_scene(s.true_label, params, s.seed);
        const Mask full = Mask::full(scene.size, scene.size);
        MonthlySequence masked, unmasked;
        masked.site_id = unmasked.site_id = s.site_id;
        for (const auto& ym : months) {
            const Patch p = render_month(scene, params, ym, s.seed);
            if (want_masked) {
                const auto hv = extract_handcrafted(p, scene.footprint);
                masked.months.push_back(ym);
                masked.vectors.emplace_back(hv.values.begin(), hv.values.end());
            }
            if (want_unmasked) {
                const auto hv = extract_handcrafted(p, full);
                unmasked.months.push_back(ym);
                unmasked.vectors.emplace_back(hv.values.begin(), hv.values.end());
            }
        }
        const std::size_t area = scene.footprint.area();
        if (want_masked) out.masked[i] = {s.site_id, s.recorded_label, std::move(masked), area};
        if (want_unmasked) out.unmasked[i] = {s.site_id, s.recorded_label, std::move(unmasked), area};
    });
    return out;
}

// ---------------------------------------------------------------------------

CommandOutput cmd_synth(const RunConfig& c) {
    if (!c.synth) throw ConfigError("synth needs a 'synth' section");
    const auto stem = output_stem(c, "synth");
    auto out = begin_output(c.require_out());
    const auto& s = *c.synth;
    if (s.months.empty()) throw ConfigError("synth needs months (synth.months or months)");
    const auto manifest = gen_dataset(s.n_sites, s.looted_fraction, s.months, s.params, c.require_seed(), out.out_dir);
    out.files.push_back("manifest.csv");
    out.files.push_back("truth.csv");
    out.files.push_back("params.json");
    for (const auto& e : manifest.entries) {
        out.files.push_back(generic(e.mask_path));
        for (const auto& ym : e.months) out.files.push_back(generic(e.patch_dir / (ym.str() + ".lsp")));
    }
    nlohmann::ordered_json j;
    j["command"] = "synth";
    j["config"] = config_echo(c);
    write_output(out, stem + ".json", j.dump(2) + "\n");
    write_digests(out, stem);
    return out;
}

CommandOutput cmd_extract(const RunConfig& c) {
    if (c.features.kind != FeatureKind::handcrafted) throw ConfigError("extract computes handcrafted features only");
    const auto stem = output_stem(c, "features");
    const auto manifest = require_manifest(c);
    const auto sites = extract_sites(manifest, require_months(c), c.masking);
    auto out = begin_output(c.require_out());
    FeatureTable table;
    table.dim = kHandcraftedDim;
    for (const auto& s : sites)
        for (std::size_t t = 0; t < s.sequence.length(); ++t)
            table.insert({s.site_id, s.sequence.months[t].str()}, s.sequence.vectors[t]);
    write_output(out, stem + ".csv", feature_store_csv(table));
    write_digests(out, stem);
    return out;
}

CommandOutput cmd_aggregate(const RunConfig& c) {
    if (c.aggregation == Aggregation::pca)
        throw ConfigError("pca aggregation is fitted per training fold; use 'run' instead of 'aggregate'");
    const auto stem = output_stem(c, "aggregated");
    const auto manifest = require_manifest(c);
    const auto sites = load_site_data(c, manifest);
    auto out = begin_output(c.require_out());
    FeatureTable table;
    for (const auto& s : sites) {
        auto row = aggregate(s.sequence, c.aggregation);
        table.dim = row.size();
        table.insert({s.site_id, std::string(aggregation_name(c.aggregation))}, std::move(row));
    }
    write_output(out, stem + ".csv", feature_store_csv(table));
    write_digests(out, stem);
    return out;
}

CommandOutput cmd_run(const RunConfig& c) {
    const auto stem = output_stem(c, "run");
    const auto manifest = require_manifest(c);
    const auto sites = load_site_data(c, manifest);
    const auto exp = experiment_config(c);
    DilationHook hook;
    if (c.mask_dilation == "to_training_median")
        hook = [&](const SiteData& s, std::size_t target) {
            return extract_dilated(manifest, s.site_id, c.months, target);
        };
    const EvalReport report = run_experiment(sites, exp, hook);

    auto out = begin_output(c.require_out());
    const std::string tag = output_stem(c, "");  // "_s<seed>_<hash>"
    auto rj = report_to_json(report);
    rj["config_echo"] = config_echo(c);
    rj["feature_layout"] = feature_layout(c);
    write_output(out, "report" + tag + ".json", rj.dump(2) + "\n");
    write_output(out, "summary" + tag + ".csv", summary_csv_header() + "\n" + summary_csv_row(report) + "\n");
    write_output(out, "predictions" + tag + ".csv", predictions_csv(report));
    nlohmann::ordered_json models;
    models["feature_layout"] = feature_layout(c);
    auto folds = nlohmann::ordered_json::array();
    for (const auto& f : report.folds) folds.push_back(model_to_json(f.model, feature_layout(c)));
    models["folds"] = folds;
    write_output(out, "models" + tag + ".json", models.dump() + "\n");
    write_digests(out, stem);
    return out;
}

CommandOutput cmd_explain(const RunConfig& c) {
    if (c.aggregation == Aggregation::pca)
        throw ConfigError("explain needs named features; pca aggregation is not supported");
    const auto manifest = require_manifest(c);
    const auto sites = load_site_data(c, manifest);
    std::vector<std::size_t> all(sites.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const Dataset data = aggregate_sites(sites, all, c.aggregation);
    const auto names = aggregated_names(c, sites.front().sequence.dim());
    const SplitPlan plan = make_split_plan(sites, experiment_config(c));
    ExplainSettings settings = c.explain;
    settings.seed = derive_seed(c.require_seed(), settings.seed);
    const ExplainResult result = importance_pipeline(data, names, plan, settings);

    auto out = begin_output(c.require_out());
    const std::string tag = output_stem(c, "");
    write_output(out, "importance" + tag + ".csv", importance_csv(result.stage1));
    write_output(out, "shap_summary" + tag + ".csv", shap_summary_csv(result.shap));
    write_output(out, "shap_instances" + tag + ".csv", shap_instances_csv(result.shap));
    nlohmann::ordered_json j;
    j["config_echo"] = config_echo(c);
    j["shap_unit"] = "log-odds margin of the retrained gbt2 model";
    j["background"] = "fold training split, seeded sample capped at background_cap rows";
    auto dropped = nlohmann::ordered_json::array();
    for (auto d : result.dropped_zero_variance) dropped.push_back(names[d]);
    j["dropped_zero_variance"] = dropped;
    auto selected = nlohmann::ordered_json::array();
    for (auto s : result.selected) selected.push_back(names[s]);
    j["selected"] = selected;
    auto ranked = nlohmann::ordered_json::array();
    for (const auto& r : result.shap.summary.rows)
        ranked.push_back({{"feature", r.name}, {"mean_abs_shap", r.importance}, {"rank", r.rank}});
    j["shap_ranking"] = ranked;
    write_output(out, "explain" + tag + ".json", j.dump(2) + "\n");
    write_digests(out, output_stem(c, "explain"));
    return out;
}

CommandOutput cmd_report(const std::filesystem::path& dir, const std::filesystem::path& out_dir) {
    if (!std::filesystem::is_directory(dir)) throw ConfigError("report directory not found: " + dir.string());
    std::vector<std::filesystem::path> inputs;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
        const auto name = entry.path().filename().string();
        if (entry.is_regular_file() && name.starts_with("summary_") && name.ends_with(".csv"))
            inputs.push_back(std::filesystem::relative(entry.path(), dir));
    }
    std::sort(inputs.begin(), inputs.end());
    if (inputs.empty()) throw DataError("no summary_*.csv files under " + dir.string());

    const std::string header = summary_csv_header();
    std::vector<std::vector<std::string>> rows;
    for (const auto& rel : inputs) {
        std::istringstream in(read_text_file(dir / rel));
        std::string line;
        std::getline(in, line);
        if (trim(line) != header) throw DataError("unexpected summary header in " + generic(rel));
        while (std::getline(in, line)) {
            if (trim(line).empty()) continue;
            auto fields = split(trim(line), ',');
            if (fields.size() != split(header, ',').size())
                throw DataError("malformed summary row in " + generic(rel));
            rows.push_back(std::move(fields));
        }
    }
    // Key: feature, aggregation, model, masking; remaining columns keep the order total.
    std::sort(rows.begin(), rows.end());
    std::string text = header + "\n";
    for (const auto& r : rows) {
        for (std::size_t i = 0; i < r.size(); ++i) text += (i ? "," : "") + r[i];
        text += "\n";
    }
    auto out = begin_output(out_dir);
    write_output(out, "consolidated_" + Fnv1a().update(text).hex() + ".csv", text);
    return out;
}

int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::config: return 2;
        case ErrorKind::data: return 3;
        case ErrorKind::invariant: return 4;
    }
    return 4;
}

std::string error_record(ErrorKind kind, std::string_view message) {
    nlohmann::ordered_json j;
    j["error"] = error_kind_name(kind);
    j["exit_code"] = exit_code(kind);
    j["message"] = message;
    return j.dump();
}

}  // namespace lootwatch
