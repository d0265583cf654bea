// Command-line entry point: verify-math, gen-data, train, eval, sweep.
#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "rts/experiment.hpp"

namespace cli = rts::cli;

int main(int argc, char** argv) {
    CLI::App app{"Random-temperature classification head: training and evaluation harness"};
    app.require_subcommand(1);

    // verify-math
    std::uint64_t vm_seed = 1;
    bool vm_inject = false;
    CLI::App* verify = app.add_subcommand("verify-math", "run the math self-check battery");
    verify->add_option("--seed", vm_seed, "seed for the check battery");
    verify->add_flag("--inject-gradient-fault", vm_inject,
                     "test hook: corrupt one analytic gradient so the battery must fail");

    // gen-data
    std::string gd_config, gd_out = "dataset.txt";
    std::uint64_t gd_seed = 0;
    bool gd_seed_set = false;
    CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic open-set dataset");
    gen->add_option("--config", gd_config, "experiment config (JSON)")->required();
    gen->add_option("--out", gd_out, "output dataset path");
    gen->add_option("--seed", gd_seed, "override the config seed")->each([&](const std::string&) {
        gd_seed_set = true;
    });

    // train
    std::string tr_config, tr_out;
    std::uint64_t tr_seed = 0;
    bool tr_seed_set = false;
    CLI::App* train = app.add_subcommand("train", "train a head variant");
    train->add_option("--config", tr_config, "experiment config (JSON)")->required();
    train->add_option("--out", tr_out, "output directory (default: config out_dir)");
    train->add_option("--seed", tr_seed, "override the config seed")->each([&](const std::string&) {
        tr_seed_set = true;
    });

    // eval
    std::string ev_config, ev_out, ev_checkpoint, ev_mode = "ood";
    std::uint64_t ev_seed = 0;
    bool ev_seed_set = false;
    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a trained checkpoint");
    eval_cmd->add_option("--config", ev_config, "experiment config (JSON)")->required();
    eval_cmd->add_option("--checkpoint", ev_checkpoint, "checkpoint path")->required();
    eval_cmd->add_option("--mode", ev_mode, "ood | reject | verify-pairs | noise-curve")
        ->check(CLI::IsMember({"ood", "reject", "verify-pairs", "noise-curve"}));
    eval_cmd->add_option("--out", ev_out, "output directory (default: config out_dir)");
    eval_cmd->add_option("--seed", ev_seed, "override the config seed")
        ->each([&](const std::string&) { ev_seed_set = true; });

    // sweep
    std::string sw_config, sw_out, sw_axis = "lambda";
    CLI::App* sweep = app.add_subcommand("sweep", "ablation sweep over lambda or delta");
    sweep->add_option("--config", sw_config, "base experiment config (JSON)")->required();
    sweep->add_option("--axis", sw_axis, "lambda | delta")
        ->check(CLI::IsMember({"lambda", "delta"}));
    sweep->add_option("--out", sw_out, "output directory (default: config out_dir)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (verify->parsed()) {
            cli::VerifyMathReport rep = cli::run_verify_math(vm_seed, vm_inject);
            std::cout << "verify-math seed=" << vm_seed << "\n" << rep.to_text();
            return rep.all_pass() ? cli::kExitOk : cli::kExitMathCheckFailed;
        }

        if (gen->parsed()) {
            cli::ExperimentConfig cfg = cli::parse_config_file(gd_config);
            if (gd_seed_set) {
                cfg.seed = gd_seed;
                cfg.train.seed = gd_seed;
            }
            cli::run_gen_data(cfg, gd_out);
            std::cout << "wrote " << gd_out << "\n";
            return cli::kExitOk;
        }

        if (train->parsed()) {
            cli::ExperimentConfig cfg = cli::parse_config_file(tr_config);
            if (tr_seed_set) {
                cfg.seed = tr_seed;
                cfg.train.seed = tr_seed;
            }
            std::string out_dir = tr_out.empty() ? cfg.out_dir : tr_out;
            cli::TrainOutcome outcome = cli::run_train(cfg, out_dir);
            if (outcome.diverged) {
                std::cerr << "training diverged; last good checkpoint written to "
                          << outcome.checkpoint_path << "\n";
                return cli::kExitDivergence;
            }
            std::cout << "checkpoint: " << outcome.checkpoint_path << "\n";
            return cli::kExitOk;
        }

        if (eval_cmd->parsed()) {
            cli::ExperimentConfig cfg = cli::parse_config_file(ev_config);
            if (ev_seed_set) {
                cfg.seed = ev_seed;
                cfg.train.seed = ev_seed;
            }
            std::string out_dir = ev_out.empty() ? cfg.out_dir : ev_out;
            cli::run_eval(cfg, ev_checkpoint, cli::eval_mode_from_name(ev_mode), out_dir);
            std::cout << "summary: " << out_dir << "/summary.json\n";
            return cli::kExitOk;
        }

        if (sweep->parsed()) {
            cli::ExperimentConfig cfg = cli::parse_config_file(sw_config);
            std::string out_dir = sw_out.empty() ? cfg.out_dir : sw_out;
            cli::run_sweep(cfg, cli::sweep_axis_from_name(sw_axis), out_dir);
            std::cout << "table: " << out_dir << "/sweep_" << sw_axis << ".csv\n";
            return cli::kExitOk;
        }
    } catch (const cli::ConfigError& e) {
        std::cerr << e.what() << "\n";
        return cli::kExitConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return cli::kExitOk;
}
