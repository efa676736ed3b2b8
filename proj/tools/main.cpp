#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "fedpt/runner.hpp"
#include "fedpt/verify.hpp"

int main(int argc, char** argv) {
    CLI::App app{"federated prompt-tuning simulator"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_override;
    std::int64_t seed_override = -1;
    CLI::App* run = app.add_subcommand("run", "execute the experiment described by a config file");
    run->add_option("config", config_path, "JSON config file")->required();
    run->add_option("--out", out_override, "override the output directory");
    run->add_option("--seed", seed_override, "replace the config's seed list with one seed");

    CLI::App* verify = app.add_subcommand("verify", "run the built-in oracle suite");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*verify) return fedpt::run_verify(std::cout) ? 0 : 1;

        std::ifstream in(config_path);
        if (!in) {
            std::cerr << "error: cannot open config '" << config_path << "'\n";
            return 1;
        }
        std::stringstream buf;
        buf << in.rdbuf();
        fedpt::RunConfig cfg = fedpt::parse_config(buf.str());
        if (!out_override.empty()) cfg.out_dir = out_override;
        if (seed_override >= 0) cfg.seeds = {static_cast<std::uint64_t>(seed_override)};
        return fedpt::cmd_run(cfg);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
