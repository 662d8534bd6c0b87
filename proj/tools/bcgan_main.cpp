#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "bcgan/pipeline.hpp"
#include "bcgan/runconfig.hpp"

// bcgan <gen-data|train|predict|calibrate|evaluate> --config <file> [flags]
// exit codes: 0 ok, 1 runtime failure, 2 bad config or bad flags

namespace {

struct CommonArgs {
    std::string config_path;
    uint64_t seed = 0;
    bool seed_set = false;
    std::string dropout;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_overrides) {
    cmd->add_option("--config", args.config_path, "run configuration JSON")
        ->required()
        ->check(CLI::ExistingFile);
    if (with_overrides) {
        cmd->add_option("--seed", args.seed, "override the config seed")
            ->each([&args](const std::string&) { args.seed_set = true; });
        cmd->add_option("--dropout", args.dropout, "override the generator dropout kind")
            ->check(CLI::IsMember({"none", "concrete", "monte_carlo"}));
    }
}

bcgan::RunConfig load_config(const CommonArgs& args) {
    bcgan::RunConfig cfg = bcgan::load_run_config(args.config_path);
    if (args.seed_set) cfg.seed = args.seed;
    if (!args.dropout.empty()) {
        if (args.dropout == "none")
            cfg.generator.dropout_kind = bcgan::DropoutKind::none;
        else if (args.dropout == "concrete")
            cfg.generator.dropout_kind = bcgan::DropoutKind::concrete;
        else
            cfg.generator.dropout_kind = bcgan::DropoutKind::monte_carlo;
    }
    cfg.finalize();  // idempotent; re-syncs after the overrides
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian conditional GAN for paired-contrast volume translation"};
    app.require_subcommand(1);

    CommonArgs gd_args;
    std::string gd_out;
    bool gd_force = false;
    CLI::App* gen_data = app.add_subcommand("gen-data", "generate the synthetic paired dataset");
    add_common(gen_data, gd_args, false);
    gen_data->add_option("--out", gd_out, "dataset output directory")->required();
    gen_data->add_flag("--force", gd_force, "replace an existing output directory");

    CommonArgs tr_args;
    bcgan::TrainOptions tr_opt;
    CLI::App* train = app.add_subcommand("train", "train the translation GAN");
    add_common(train, tr_args, true);
    train->add_option("--data", tr_opt.data_dir, "dataset directory")->required();
    train->add_option("--out", tr_opt.out_dir, "checkpoint output directory")->required();
    train->add_flag("--resume", tr_opt.resume, "continue from the latest checkpoint in --out");
    train->add_flag("--force", tr_opt.force, "replace an existing output directory");
    train->add_flag("--quiet", tr_opt.quiet, "suppress the per-epoch progress lines");

    CommonArgs pr_args;
    bcgan::PredictOptions pr_opt;
    CLI::App* predict = app.add_subcommand("predict", "posterior mean and std per subject");
    add_common(predict, pr_args, true);
    predict->add_option("--data", pr_opt.data_dir, "dataset directory")->required();
    predict->add_option("--checkpoint", pr_opt.checkpoint, "generator checkpoint file")
        ->required()
        ->check(CLI::ExistingFile);
    predict->add_option("--out", pr_opt.out_dir, "posterior output directory")->required();
    predict->add_option("--split", pr_opt.split, "manifest split to predict (default test)");
    predict->add_option("--subject", pr_opt.subject, "restrict to one subject id");
    predict->add_option("--passes", pr_opt.passes, "stochastic passes (default: t_mc)");
    predict->add_flag("--force", pr_opt.force, "replace an existing output directory");

    CommonArgs ca_args;
    bcgan::CalibrateOptions ca_opt;
    CLI::App* calibrate = app.add_subcommand("calibrate", "fit the recalibration map");
    add_common(calibrate, ca_args, false);
    calibrate->add_option("--data", ca_opt.data_dir, "dataset directory (truths)")->required();
    calibrate->add_option("--posteriors", ca_opt.posterior_dir, "predicted posteriors directory")
        ->required();
    calibrate->add_option("--out", ca_opt.out_path, "output map CSV path")->required();
    calibrate->add_option("--split", ca_opt.split, "calibration split (default train)");
    calibrate->add_flag("--force", ca_opt.force, "replace an existing map file");

    CommonArgs ev_args;
    bcgan::EvaluateOptions ev_opt;
    CLI::App* evaluate = app.add_subcommand("evaluate", "metric report and curves");
    add_common(evaluate, ev_args, false);
    evaluate->add_option("--data", ev_opt.data_dir, "dataset directory (truths)")->required();
    evaluate->add_option("--posteriors", ev_opt.posterior_dir, "predicted posteriors directory")
        ->required();
    evaluate->add_option("--out", ev_opt.out_dir, "report output directory")->required();
    evaluate->add_option("--split", ev_opt.split, "evaluation split (default test)");
    evaluate->add_option("--map", ev_opt.map_path, "calibration map CSV for the after-curve")
        ->check(CLI::ExistingFile);
    evaluate->add_option("--compare", ev_opt.compare_dir,
                         "second posteriors directory for a paired t-test");
    evaluate->add_flag("--force", ev_opt.force, "replace an existing output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (gen_data->parsed()) {
            bcgan::run_gen_data(load_config(gd_args), gd_out, gd_force);
        } else if (train->parsed()) {
            bcgan::run_train(load_config(tr_args), tr_opt);
        } else if (predict->parsed()) {
            bcgan::run_predict(load_config(pr_args), pr_opt);
        } else if (calibrate->parsed()) {
            bcgan::run_calibrate(load_config(ca_args), ca_opt);
        } else if (evaluate->parsed()) {
            bcgan::run_evaluate(load_config(ev_args), ev_opt);
        }
    } catch (const bcgan::ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
