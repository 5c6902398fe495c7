#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "lootwatch/app.hpp"

using namespace lootwatch;

namespace {

RunConfig resolve_config(const std::string& path, const std::optional<std::uint64_t>& seed,
                         const std::optional<std::string>& out, const std::optional<int>& jobs) {
    if (path.empty()) throw ConfigError("--config is required");
    RunConfig c = load_run_config(path);
    if (seed) c.seed = *seed;
    if (out) c.out = *out;
    if (jobs) {
        if (*jobs < 1) throw ConfigError("--jobs must be >= 1");
        c.jobs = *jobs;
    }
    return c;
}

void print_outputs(const CommandOutput& out) {
    for (const auto& f : out.files)
        if (!f.starts_with("masks/") && !f.starts_with("patches/")) std::cout << (out.out_dir / f).generic_string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"lootwatch: looting detection experiments on monthly satellite patches"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<int> jobs;
    app.add_option("--config", config_path, "JSON run configuration");
    app.add_option("--seed", seed, "override the configured seed");
    app.add_option("--out", out, "override the output directory");
    app.add_option("--jobs", jobs, "worker threads");

    auto* synth = app.add_subcommand("synth", "generate a synthetic patch/mask dataset");
    auto* extract = app.add_subcommand("extract", "extract monthly handcrafted features to a feature store");
    auto* aggregate = app.add_subcommand("aggregate", "aggregate monthly features per site");
    auto* run = app.add_subcommand("run", "cross-validated training and evaluation");
    auto* explain = app.add_subcommand("explain", "ensemble importance and exact Shapley ranking");
    auto* report = app.add_subcommand("report", "join summary CSVs under a directory");
    std::string report_dir;
    report->add_option("dir", report_dir, "directory holding summary_*.csv files")->required();
    for (auto* sub : {synth, extract, aggregate, run, explain, report}) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        if (rc == 0) return 0;
        std::cerr << error_record(ErrorKind::config, e.what()) << '\n';
        return exit_code(ErrorKind::config);
    }

    try {
        CommandOutput result;
        if (*report) {
            if (jobs) set_default_jobs(*jobs);
            result = cmd_report(report_dir, out ? std::filesystem::path(*out) : std::filesystem::path(report_dir));
        } else {
            const RunConfig c = resolve_config(config_path, seed, out, jobs);
            set_default_jobs(c.jobs);
            if (*synth) result = cmd_synth(c);
            else if (*extract) result = cmd_extract(c);
            else if (*aggregate) result = cmd_aggregate(c);
            else if (*run) result = cmd_run(c);
            else result = cmd_explain(c);
        }
        print_outputs(result);
        return 0;
    } catch (const Error& e) {
        std::cerr << error_record(e.kind(), e.what()) << '\n';
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << error_record(ErrorKind::invariant, e.what()) << '\n';
        return exit_code(ErrorKind::invariant);
    }
}
