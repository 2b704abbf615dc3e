#include <fshrink/pipeline.hpp>

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

namespace {

constexpr int kOk = 0;
constexpr int kAssertion = 1;
constexpr int kUsage = 2;

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Self-shrinker uniqueness experiments"};
    app.fallthrough();
    app.require_subcommand(1, 1);
    std::string config_path, output;
    std::uint64_t seed = 0;
    app.add_option("--config", config_path, "JSON run configuration")->required();
    auto* out_opt = app.add_option("--output", output, "output directory (overrides OUTPUT_DIR and the config)");
    auto* seed_opt = app.add_option("--seed", seed, "seed for randomized property draws");
    for (const auto& name : fshrink::experiment_names()) app.add_subcommand(name, "run the " + name + " experiment");
    app.add_subcommand("all", "run every experiment, each in its own subdirectory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e) == 0 ? kOk : kUsage;
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }
    const std::string command = app.get_subcommands().front()->get_name();

    fshrink::RunConfig cfg;
    try {
        cfg = fshrink::parse_config(config_path);
        if (const char* env = std::getenv("OUTPUT_DIR"); env && *env) cfg.output_dir = env;
        if (*out_opt) cfg.output_dir = output;
        if (*seed_opt) cfg.seed = seed;
        fshrink::validate(cfg);
        fshrink::write_config_echo(cfg, cfg.output_dir);
    } catch (const std::exception& e) {
        std::cerr << "fshrink: " << e.what() << "\n";
        return kUsage;
    }

    try {
        const auto r = command == "all" ? fshrink::run_all(cfg, cfg.output_dir)
                                        : fshrink::run_experiment(command, cfg, cfg.output_dir);
        std::cout << (std::filesystem::path(cfg.output_dir) / "summary.json").string() << "\n";
        if (r.hard_failed) {
            std::cerr << "fshrink: a hard assertion failed; see the summary\n";
            return kAssertion;
        }
        return kOk;
    } catch (const std::exception& e) {
        std::cerr << "fshrink: " << command << " failed: " << e.what() << "\n";
        return kAssertion;
    }
}
