#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "smc/harness/config.hpp"
#include "smc/harness/experiments.hpp"
#include "smc/harness/output.hpp"

namespace {

constexpr int kExitFailed = 1;
constexpr int kExitUsage = 2;

const char* describe(const std::string& kind) {
    if (kind == "run") return "replicated filter runs against the model oracle";
    if (kind == "clt-check") return "empirical vs exact asymptotic variance and normality";
    if (kind == "rate-fit") return "log-log slopes of fixed-parameter variances";
    if (kind == "stability") return "exact filtering variance against the contraction bound";
    if (kind == "compare-schemes") return "multinomial vs residual selection";
    if (kind == "rb-compare") return "joint vs marginalized filter";
    if (kind == "weight-degeneracy") return "growth of SIS log weight ratios";
    return "";
}

smc::harness::ExperimentConfig load(const std::string& kind, const std::string& path) {
    if (path.empty()) return smc::harness::default_config(kind);
    std::ifstream in(path);
    if (!in) throw smc::harness::ConfigError("cannot open config '" + path + "'");
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw smc::harness::ConfigError("config '" + path + "' is not valid JSON: " + e.what());
    }
    return smc::harness::parse_config(doc, kind);
}

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << text;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Particle filter experiments with exact asymptotic variances"};
    app.require_subcommand(1, 1);
    app.fallthrough();

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    std::string format;
    std::optional<std::size_t> threads;
    app.add_option("--config", config_path, "JSON experiment config")->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "base seed (overrides the config)");
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
    app.add_option("--threads", threads, "worker threads (default: SMC_THREADS, else all cores)")
        ->check(CLI::PositiveNumber);
    for (const auto& kind : smc::harness::experiment_kinds()) app.add_subcommand(kind, describe(kind));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }
    const std::string kind = app.get_subcommands().front()->get_name();

    smc::harness::ExperimentConfig config;
    try {
        config = load(kind, config_path);
        if (seed) config.seed = *seed;
        if (!out_dir.empty()) config.out_dir = out_dir;
        if (!format.empty()) config.format = format;
        if (config.out_dir.empty()) config.out_dir = ".";
        smc::harness::validate_config(config);
    } catch (const smc::harness::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitUsage;
    }

    try {
        const smc::harness::ExperimentResult result = smc::harness::run_experiment(config, threads);
        const std::filesystem::path dir(config.out_dir);
        std::filesystem::create_directories(dir);
        if (config.format == "csv") {
            write_file(dir / (config.experiment + ".csv"), smc::harness::to_csv(result.rows));
        } else {
            write_file(dir / (config.experiment + ".json"), smc::harness::full_json(result).dump(2) + "\n");
        }
        const std::string summary = smc::harness::summary_json(result).dump(2) + "\n";
        write_file(dir / (config.experiment + "_summary.json"), summary);
        std::cout << summary;
        return result.passed ? 0 : kExitFailed;
    } catch (const smc::harness::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitFailed;
    }
}
