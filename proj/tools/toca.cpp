#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "toca/cli.hpp"

namespace {

struct CommonFlags {
    std::string config_path;
    std::string profile;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_path, "Config file (sectioned key = value)");
    cmd->add_option("--profile", flags.profile,
                    "Cache profile: off, naive-full, toca-dit, toca-pixart, custom");
    cmd->add_option("--seed", flags.seed, "Sampler seed (overrides TOCA_SEED and the config)");
    cmd->add_option("--out", flags.out_dir, "Output directory");
}

toca::RunConfig resolve(const CommonFlags& flags) {
    std::optional<toca::Profile> profile;
    if (!flags.profile.empty()) profile = toca::parse_profile(flags.profile);
    toca::RunConfig config = flags.config_path.empty()
                                 ? toca::parse_config("", profile)
                                 : toca::load_config(flags.config_path, profile);
    toca::apply_environment(config);
    if (flags.seed) config.sampler.seed = *flags.seed;
    if (!flags.out_dir.empty()) config.output.dir = flags.out_dir;
    config.validate();
    return config;
}

int report_error(const std::string& command, const std::exception& e) {
    nlohmann::ordered_json j;
    j["status"] = "error";
    j["command"] = command;
    j["message"] = e.what();
    std::cerr << j.dump() << '\n';
    return EXIT_FAILURE;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Token-wise feature caching for a toy diffusion transformer"};
    app.require_subcommand(1);

    CommonFlags flags;
    auto* sample = app.add_subcommand("sample", "Generate samples and write x0, stats and frequency maps");
    add_common(sample, flags);

    auto* analyze = app.add_subcommand("analyze", "Diagnostic experiments");
    analyze->require_subcommand(1);
    auto* redundancy = analyze->add_subcommand("redundancy", "Per-token temporal redundancy");
    auto* propagation = analyze->add_subcommand("propagation", "Single-token error propagation");
    add_common(redundancy, flags);
    add_common(propagation, flags);

    auto* bench = app.add_subcommand("bench", "FLOPs accounting");
    bench->require_subcommand(1);
    auto* bench_flops = bench->add_subcommand("flops", "Run-level FLOPs estimate and closed-form check");
    add_common(bench_flops, flags);

    auto* report = app.add_subcommand("report", "Write the resolved config and a FLOPs summary");
    add_common(report, flags);

    CLI11_PARSE(app, argc, argv);

    std::string command = "unknown";
    try {
        toca::CommandResult result;
        if (sample->parsed()) {
            command = "sample";
            result = toca::cmd_sample(resolve(flags));
        } else if (redundancy->parsed()) {
            command = "analyze redundancy";
            result = toca::cmd_analyze(resolve(flags), toca::Analysis::Redundancy);
        } else if (propagation->parsed()) {
            command = "analyze propagation";
            result = toca::cmd_analyze(resolve(flags), toca::Analysis::Propagation);
        } else if (bench_flops->parsed()) {
            command = "bench flops";
            result = toca::cmd_bench(resolve(flags));
        } else if (report->parsed()) {
            command = "report";
            result = toca::cmd_report(resolve(flags));
        }
        std::cout << command << ": " << result.summary << '\n';
        for (const auto& path : result.artifacts) std::cout << "  " << path.string() << '\n';
        return EXIT_SUCCESS;
    } catch (const std::exception& e) {
        return report_error(command, e);
    }
}
