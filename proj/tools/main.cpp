// threedpm: dataset generation, meta-training, evaluation and estimator utilities.

#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "threedpm/commands.hpp"
#include "threedpm/config.hpp"
#include "threedpm/errors.hpp"

namespace {

enum ExitCode { kOk = 0, kValidation = 2, kNumerical = 3, kIo = 4 };

threedpm::RunConfig resolve(const std::string& path, const std::optional<std::uint64_t>& seed) {
    threedpm::RunConfig c = path.empty() ? threedpm::parse_config("") : threedpm::load_config(path);
    if (seed) {
        c.seed = *seed;
        c.finalize();
    }
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"3D air-to-air RSS simulator and few-shot incident angle estimation"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir = ".";
    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "YAML run configuration");
        sub->add_option("--seed", seed, "master seed (overrides the config)");
        sub->add_option("--out", out_dir, "output directory");
    };

    auto* gen = app.add_subcommand("gen", "generate a dataset file");
    common(gen);
    bool dry_run = false, csv = false;
    std::optional<double> eval_snr;
    gen->add_flag("--dry-run", dry_run, "print record counts without writing");
    gen->add_flag("--csv", csv, "also export CSV");
    gen->add_option("--eval-snr", eval_snr, "write an evaluation set at this SNR [dB]");

    auto* train = app.add_subcommand("train", "train a MAML, FOMAML or CNN model");
    common(train);
    std::string algo = "maml", data_path;
    train->add_option("--algo", algo, "maml | fomaml | cnn")->check(CLI::IsMember({"maml", "fomaml", "cnn"}));
    train->add_option("--data", data_path, "dataset file (generated from the config when omitted)");

    auto* eval = app.add_subcommand("eval", "evaluate checkpoints over the SNR grid");
    common(eval);
    std::vector<std::string> checkpoints, methods;
    std::string eval_data;
    eval->add_option("--checkpoint", checkpoints, "checkpoint file(s)")->required();
    eval->add_option("--method", methods, "method label per checkpoint");
    eval->add_option("--data", eval_data, "fixed evaluation set (overrides the SNR grid)");

    auto* bound = app.add_subcommand("bound", "Hoeffding sample bound and confidence");
    common(bound);
    std::optional<double> epsilon, alpha;
    std::optional<std::uint64_t> n;
    bool sweep = false;
    bound->add_option("--epsilon", epsilon, "error tolerance");
    bound->add_option("--alpha", alpha, "confidence parameter in (0, 2]");
    bound->add_option("--n", n, "sample count: report the probability of confidence");
    bound->add_flag("--sweep", sweep, "write poc_curve.csv");

    auto* azimuth = app.add_subcommand("azimuth", "beam-sweep azimuth estimation");
    common(azimuth);
    std::optional<double> theta_est_deg;
    std::optional<int> steps;
    azimuth->add_option("--theta-est", theta_est_deg, "elevation estimate [deg]");
    azimuth->add_option("--steps", steps, "sweep steps L");

    auto* baseline = app.add_subcommand("baseline", "conventional differential-RSS estimator");
    common(baseline);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kValidation;
    }

    try {
        auto cfg = resolve(config_path, seed);
        if (gen->parsed()) {
            threedpm::cli::cmd_gen(cfg, {out_dir, dry_run, csv, eval_snr}, std::cout);
        } else if (train->parsed()) {
            threedpm::cli::cmd_train(cfg, {algo, data_path, out_dir}, std::cout);
        } else if (eval->parsed()) {
            threedpm::cli::cmd_eval(cfg, {checkpoints, methods, eval_data, out_dir}, std::cout);
        } else if (bound->parsed()) {
            threedpm::cli::cmd_bound(cfg, {epsilon, alpha, n, sweep, out_dir}, std::cout);
        } else if (azimuth->parsed()) {
            if (theta_est_deg) cfg.sweep.theta_est_deg = *theta_est_deg;
            if (steps) cfg.sweep.steps = *steps;
            threedpm::cli::cmd_azimuth(cfg, out_dir, std::cout);
        } else if (baseline->parsed()) {
            threedpm::cli::cmd_baseline(cfg, out_dir, std::cout);
        }
    } catch (const threedpm::IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return kIo;
    } catch (const threedpm::NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kNumerical;
    } catch (const std::invalid_argument& e) {  // ConfigError
        std::cerr << "invalid configuration: " << e.what() << "\n";
        return kValidation;
    } catch (const std::domain_error& e) {  // DomainError
        std::cerr << "invalid input: " << e.what() << "\n";
        return kValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kOk;
}
