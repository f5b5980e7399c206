#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "dtspike/checkpoint.hpp"
#include "dtspike/config.hpp"
#include "dtspike/profile.hpp"
#include "dtspike/train.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::string checkpoint_path;
    std::string out_dir = ".";
    std::optional<int64_t> seed;
    std::optional<double> lambda_m;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_lambda = true) {
    cmd->add_option("--config", args.config_path, "experiment config file")->required();
    cmd->add_option("--checkpoint", args.checkpoint_path, "checkpoint to load");
    cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_option("--seed", args.seed, "override the config seed");
    if (with_lambda) cmd->add_option("--lambda-m", args.lambda_m, "override the mask loss weight");
}

dts::ExperimentConfig load_config(const CommonArgs& args) {
    dts::ExperimentConfig cfg = dts::load_experiment_config(args.config_path);
    if (args.seed) {
        cfg.train.seed = static_cast<uint64_t>(*args.seed);
        cfg.data.seed = static_cast<uint64_t>(*args.seed);
    }
    if (args.lambda_m) {
        cfg.train.lambda_m = static_cast<float>(*args.lambda_m);
        cfg.validate();
    }
    return cfg;
}

dts::Model build_model(const dts::ExperimentConfig& cfg, const CommonArgs& args) {
    dts::Model model(cfg.model, cfg.train.seed, cfg.train.resolved_t_init(cfg.model.max_steps));
    if (!args.checkpoint_path.empty()) dts::load_checkpoint(args.checkpoint_path, model);
    return model;
}

int cmd_train(const CommonArgs& args) {
    auto cfg = load_config(args);
    auto [train_ds, eval_ds] = cfg.load_datasets();
    dts::Model model = build_model(cfg, args);
    dts::TrainState state = dts::train_loop(model, train_ds, eval_ds, cfg.train, args.out_dir);
    std::printf("best eval_acc %.17g at epoch %d\n", state.best_eval_acc, state.best_epoch);
    std::printf("wrote %s and %s\n",
                (std::filesystem::path(args.out_dir) / "metrics.csv").string().c_str(),
                (std::filesystem::path(args.out_dir) / "checkpoint_best.dtss").string().c_str());
    return 0;
}

int cmd_eval(const CommonArgs& args) {
    auto cfg = load_config(args);
    auto [train_ds, eval_ds] = cfg.load_datasets();
    (void)train_ds;
    dts::Model model = build_model(cfg, args);
    model.set_training(false);
    dts::EvalResult r = dts::evaluate(model, eval_ds, cfg.train.batch_size);
    std::printf("eval_acc %.17g\n", r.accuracy);
    std::printf("t_avg %.17g\n", r.t_avg);
    std::printf("sa_percent %.17g\n", r.sa_percent);
    return 0;
}

int cmd_profile(const CommonArgs& args) {
    auto cfg = load_config(args);
    auto [train_ds, eval_ds] = cfg.load_datasets();
    (void)train_ds;
    dts::Model model = build_model(cfg, args);
    model.set_training(false);
    dts::ProfileReport r = dts::profile(model, eval_ds, cfg.profile.energy, cfg.train.batch_size,
                                        cfg.profile.sample_limit);
    dts::print_profile_table(r, std::cout);
    std::filesystem::create_directories(args.out_dir);
    dts::write_profile_csv(r, (std::filesystem::path(args.out_dir) / "profile.csv").string());
    return 0;
}

int cmd_sensitivity(const CommonArgs& args) {
    auto cfg = load_config(args);
    auto [train_ds, eval_ds] = cfg.load_datasets();
    (void)train_ds;
    dts::Model model = build_model(cfg, args);
    model.set_training(false);
    dts::HistogramSet h = dts::collect_histograms(model, eval_ds, cfg.profile.histogram_bins,
                                                  cfg.train.batch_size, cfg.profile.sample_limit);
    dts::print_sensitivity_table(h, std::cout);
    std::filesystem::create_directories(args.out_dir);
    dts::write_sensitivity_csv(h, (std::filesystem::path(args.out_dir) / "sensitivity.csv").string());
    return 0;
}

int cmd_export_histograms(const CommonArgs& args) {
    auto cfg = load_config(args);
    auto [train_ds, eval_ds] = cfg.load_datasets();
    (void)train_ds;
    dts::Model model = build_model(cfg, args);
    model.set_training(false);
    dts::HistogramSet h = dts::collect_histograms(model, eval_ds, cfg.profile.histogram_bins,
                                                  cfg.train.batch_size, cfg.profile.sample_limit);
    std::filesystem::create_directories(args.out_dir);
    const std::string path = (std::filesystem::path(args.out_dir) / "histograms.csv").string();
    dts::write_histograms_csv(h, path);
    std::printf("wrote %s\n", path.c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"dtspike: spiking vision transformers with trainable per-layer time-step masks"};
    app.require_subcommand(1);

    CommonArgs targs, eargs, pargs, sargs, hargs;
    CLI::App* train = app.add_subcommand("train", "train a model and save metrics + best checkpoint");
    add_common(train, targs);
    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint: accuracy, t_avg, spiking activity");
    add_common(eval, eargs);
    CLI::App* prof = app.add_subcommand("profile", "SOP/FLOP counts and the energy estimate");
    add_common(prof, pargs);
    CLI::App* sens = app.add_subcommand("sensitivity", "per-layer time-step sensitivity tables");
    add_common(sens, sargs);
    CLI::App* hist = app.add_subcommand("export-histograms", "write per-layer per-step drive histograms");
    add_common(hist, hargs);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help() << "\n";
        return 1;
    }

    try {
        if (train->parsed()) return cmd_train(targs);
        if (eval->parsed()) return cmd_eval(eargs);
        if (prof->parsed()) return cmd_profile(pargs);
        if (sens->parsed()) return cmd_sensitivity(sargs);
        if (hist->parsed()) return cmd_export_histograms(hargs);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
