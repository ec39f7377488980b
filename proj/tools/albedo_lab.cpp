#include <cstdio>
#include <exception>
#include <fstream>
#include <sstream>
#include <string>

#include "CLI11.hpp"

#include "albedo/errors.hpp"
#include "albedo/runner.hpp"

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw albedo::ConfigError("cannot open config file \"" + path + "\"");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Transport albedo laboratory: forward solves, boundary decompositions,"
                 " coefficient recovery, and stability certification from one JSON config"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_override;
    int threads_override = -1;
    long seed_override = -1;

    const auto add = [&](const std::string& name, const std::string& desc) {
        CLI::App* sub = app.add_subcommand(name, desc);
        sub->add_option("-c,--config", config_path, "experiment JSON file")
            ->required()
            ->check(CLI::ExistingFile);
        sub->add_option("-o,--out", out_override, "output directory (overrides config)");
        sub->add_option("-t,--threads", threads_override, "worker threads (overrides config)");
        sub->add_option("-s,--seed", seed_override, "random seed (overrides config)");
        return sub;
    };

    add("forward", "solve the transport problem for a smooth inflow and dump the outflow");
    add("albedo", "decompose beam responses into collision components, with a Monte Carlo"
                  " cross-check");
    add("reconstruct", "recover the absorption field and the scattering kernel from"
                       " synthetic boundary data");
    add("stability", "certify the stability inequalities over the configured parameter"
                     " grids");
    add("validate", "check admissibility, subcriticality, and conservation for the"
                    " configured phantom");

    CLI11_PARSE(app, argc, argv);

    try {
        albedo::ExperimentConfig cfg =
            albedo::ExperimentConfig::from_json_text(read_file(config_path));
        if (!out_override.empty()) cfg.out_dir = out_override;
        if (threads_override >= 0) cfg.threads = threads_override;
        if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
        return albedo::run_experiment(app.get_subcommands().front()->get_name(), cfg);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
