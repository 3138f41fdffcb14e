// setmap: settlement-emergence mapping pipeline driver.
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "setmap/setmap.hpp"

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

struct Args {
    std::string config;
    bool force = false;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
};

void add_common(CLI::App* cmd, Args& args, bool needs_config) {
    auto* opt = cmd->add_option("--config", args.config, "pipeline config (JSON)");
    if (needs_config) opt->required();
    cmd->add_flag("--force", args.force, "rerun even when outputs are up to date");
    cmd->add_option("--seed", args.seed, "global seed (overrides the config)");
    cmd->add_option("--out", args.out, "output directory (overrides the config)");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Maps emerging informal settlements from multi-epoch satellite composites."};
    app.require_subcommand(1);
    Args args;
    setmap::SynthOptions synth;

    for (const auto& stage : setmap::stage_names())
        add_common(app.add_subcommand(stage, "run the " + stage + " stage"), args, true);
    add_common(app.add_subcommand("all", "run every stage in order"), args, true);

    auto* synth_cmd = app.add_subcommand("synth", "write a synthetic fixture and its config");
    add_common(synth_cmd, args, false);
    synth_cmd->add_option("--size", synth.size, "pixels per side per municipality")->capture_default_str();
    synth_cmd->add_option("--municipalities", synth.municipalities, "municipality count")->capture_default_str();
    synth_cmd->add_option("--settlements", synth.settlements, "planted settlements per municipality")
        ->capture_default_str();
    synth_cmd->add_option("--negatives", synth.negatives_per_municipality, "negative pixels per municipality")
        ->capture_default_str();
    synth_cmd->add_option("--trees", synth.rf_trees, "random forest size in the written config")
        ->capture_default_str();

    CLI11_PARSE(app, argc, argv);
    const std::string sub = app.get_subcommands().front()->get_name();

    try {
        if (sub == "synth") {
            if (!args.out) {
                std::cerr << "synth: --out is required\n";
                return kExitValidation;
            }
            synth.seed = args.seed.value_or(0);
            const auto result = setmap::synthesize(*args.out, synth);
            std::cerr << "[setmap] synth: " << result.municipalities.size() << " municipalities, " << result.planted
                      << " settlements, " << result.confounders << " confounders\n";
            std::cout << result.config.string() << "\n";
            return 0;
        }
        setmap::ConfigOverrides overrides;
        overrides.seed = args.seed;
        if (args.out) overrides.output_dir = std::filesystem::absolute(*args.out);
        const auto cfg = setmap::load_config(args.config, overrides);
        setmap::run_pipeline(cfg, sub, args.force);
    } catch (const setmap::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        const bool invalid = e.code() == setmap::ErrorCode::Validation ||
                             (sub == "synth" && e.code() == setmap::ErrorCode::InvalidArgument);
        return invalid ? kExitValidation : kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return 0;
}
