#include <CLI11.hpp>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "stratlearn/errors.hpp"
#include "stratlearn/pipeline.hpp"

using namespace stratlearn;

namespace {

struct CommonArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed_override;
    std::string output_override;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "run configuration (JSON)")->required();
    cmd->add_option("--seed", args.seed_override, "override the config seed");
    cmd->add_option("--output", args.output_override, "override the output directory");
}

RunConfig load_config(const CommonArgs& args) {
    RunConfig cfg = RunConfig::from_file(args.config_path);
    if (args.seed_override) cfg.seed = *args.seed_override;
    if (!args.output_override.empty()) cfg.output = args.output_override;
    if (cfg.output.empty()) throw ConfigError("no output directory (config or --output)");
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"propensity-stratified learning under covariate shift"};
    app.require_subcommand(1);

    CommonArgs sim_args, prop_args, strat_args, w_args, bal_args, train_args, pred_args,
        eval_args, pipe_args;
    std::vector<std::string> compare_dirs;
    int compare_boot = 400;
    std::uint64_t compare_seed = 0;
    std::string compare_out = "comparison.csv";

    add_common(app.add_subcommand("simulate", "rejection-sampling covariate shift"), sim_args);
    add_common(app.add_subcommand("propensity", "fit and score the propensity model"),
               prop_args);
    add_common(app.add_subcommand("stratify", "quantile strata and merge report"), strat_args);
    add_common(app.add_subcommand("weights", "importance weight estimation"), w_args);
    add_common(app.add_subcommand("balance", "covariate balance diagnostics"), bal_args);
    add_common(app.add_subcommand("train", "model selection and training"), train_args);
    add_common(app.add_subcommand("predict", "target predictions"), pred_args);
    add_common(app.add_subcommand("evaluate", "target-side evaluation"), eval_args);
    add_common(app.add_subcommand("pipeline", "full end-to-end run"), pipe_args);

    auto* cmp = app.add_subcommand("compare", "method comparison over completed runs");
    cmp->add_option("dirs", compare_dirs, "completed run directories")->required();
    cmp->add_option("--n-boot", compare_boot, "bootstrap replicates");
    cmp->add_option("--seed", compare_seed, "bootstrap seed");
    cmp->add_option("--output", compare_out, "comparison CSV path");

    CLI11_PARSE(app, argc, argv);

    try {
        const std::string sub = app.get_subcommands().front()->get_name();
        if (sub == "simulate") {
            const RunConfig cfg = load_config(sim_args);
            cmd_simulate(cfg, cfg.output);
        } else if (sub == "compare") {
            cmd_compare(compare_dirs, compare_boot, compare_seed, compare_out);
        } else {
            static const std::vector<std::pair<std::string, Stage>> stages = {
                {"propensity", Stage::propensity}, {"stratify", Stage::stratify},
                {"weights", Stage::weights},       {"balance", Stage::balance},
                {"train", Stage::train},           {"predict", Stage::predict},
                {"evaluate", Stage::evaluate},     {"pipeline", Stage::evaluate},
            };
            const CommonArgs* args = nullptr;
            if (sub == "propensity") args = &prop_args;
            else if (sub == "stratify") args = &strat_args;
            else if (sub == "weights") args = &w_args;
            else if (sub == "balance") args = &bal_args;
            else if (sub == "train") args = &train_args;
            else if (sub == "predict") args = &pred_args;
            else if (sub == "evaluate") args = &eval_args;
            else args = &pipe_args;

            Stage until = Stage::evaluate;
            for (const auto& [name, st] : stages)
                if (name == sub) until = st;

            const RunConfig cfg = load_config(*args);
            cmd_pipeline(cfg, cfg.output, until);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return ConfigError::exit_code;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return DataError::exit_code;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return NumericalError::exit_code;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
