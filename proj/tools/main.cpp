#include <CLI11.hpp>

#include "commands.hpp"

int main(int argc, char** argv) {
    CLI::App app{"ddl: distribution-distillation training lab on synthetic identity data"};
    app.require_subcommand(1);

    std::string config_path, dataset_path, checkpoint_path, out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;

    auto add_common = [&](CLI::App* cmd, bool needs_dataset, bool needs_checkpoint) {
        cmd->add_option("--config", config_path, "configuration file")->required();
        cmd->add_option("--out", out_dir, "output directory")->required();
        if (needs_dataset)
            cmd->add_option("--dataset", dataset_path, "dataset file")->required();
        if (needs_checkpoint)
            cmd->add_option("--checkpoint", checkpoint_path, "parameter checkpoint")->required();
        cmd->add_option("--seed", seed, "override the config seed")
            ->each([&](const std::string&) { seed_set = true; });
    };

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    add_common(synth, false, false);
    CLI::App* train = app.add_subcommand("train", "train an encoder");
    add_common(train, true, false);
    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    add_common(eval, true, true);
    CLI::App* ablate = app.add_subcommand("ablate", "run the mode x seed ablation battery");
    add_common(ablate, true, false);

    CLI11_PARSE(app, argc, argv);

    const std::optional<std::uint64_t> seed_override =
        seed_set ? std::optional<std::uint64_t>(seed) : std::nullopt;

    if (synth->parsed())
        return ddl::cli::run_synth({config_path, out_dir, seed_override});
    if (train->parsed())
        return ddl::cli::run_train({config_path, dataset_path, out_dir, seed_override});
    if (eval->parsed())
        return ddl::cli::run_eval(
            {config_path, checkpoint_path, dataset_path, out_dir, seed_override});
    return ddl::cli::run_ablate({config_path, dataset_path, out_dir, seed_override});
}
