#include "threedpm/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <ostream>

#include "threedpm/bounds.hpp"
#include "threedpm/errors.hpp"
#include "threedpm/geom.hpp"
#include "threedpm/metalearn.hpp"
#include "threedpm/nnet.hpp"
#include "threedpm/random.hpp"
#include "threedpm/util.hpp"

namespace threedpm::cli {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kEvalStream = 0xe7a1;
constexpr std::uint64_t kSweepStream = 0x5e3e;
constexpr std::uint64_t kBaselineStream = 0xba5e;

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

GenSummary cmd_gen(const RunConfig& config, const GenRequest& req, std::ostream& out) {
    dataset::DatasetConfig dc = config.dataset;
    if (req.eval_snr) {
        dc.kappa_list = tasks_for(config.eval.tasks, dc);
        dc.snr_range_db = {*req.eval_snr, *req.eval_snr};
        dc.instances_per_bin = config.eval.instances;
    }
    dc.validate();
    GenSummary s;
    s.records = dc.record_count();
    const auto sp = dataset::split(dc);
    out << "records: " << s.records << " (" << dc.kappa_list.size() << " channels x " << dc.angle_bins << " bins x "
        << dc.instances_per_bin << " instances), train tasks " << sp.train_tasks.size() << ", test tasks "
        << sp.test_tasks.size() << "\n";
    if (req.dry_run) return s;

    const auto data = dataset::generate(dc);
    s.checksum = to_hex(data.checksum());
    ensure_dir(req.out_dir);
    s.path = join(req.out_dir, req.eval_snr ? "eval_" + fmt("%g", *req.eval_snr) + "db.3dpm" : "dataset.3dpm");
    dataset::save(data, s.path);
    if (req.csv) write_file(fs::path(s.path).replace_extension(".csv").string(), dataset::to_csv(data));
    s.written = true;
    out << "wrote " << s.path << "\nchecksum: " << s.checksum << "\n";
    return s;
}

TrainSummary cmd_train(const RunConfig& config, const TrainRequest& req, std::ostream& out) {
    if (req.algo != "maml" && req.algo != "fomaml" && req.algo != "cnn")
        throw ConfigError("train: algorithm must be maml, fomaml or cnn");
    const auto data = req.data_path.empty() ? dataset::generate(config.dataset) : dataset::load(req.data_path);
    metalearn::MetaConfig mc = config.meta;
    mc.first_order = req.algo == "fomaml" ? true : req.algo == "maml" ? false : mc.first_order;

    ensure_dir(req.out_dir);
    TrainSummary s;
    s.checkpoint_path = join(req.out_dir, req.algo + ".ckpt");
    s.log_path = join(req.out_dir, req.algo + "_log.csv");
    s.timing_path = join(req.out_dir, req.algo + "_timing.csv");
    std::ofstream log(s.log_path, std::ios::trunc);
    if (!log) throw IoError("cannot open " + s.log_path);
    // Wall-clock goes to its own file so the log stays reproducible byte for byte.
    std::ofstream timing(s.timing_path, std::ios::trunc);
    if (!timing) throw IoError("cannot open " + s.timing_path);
    timing << "epoch,seconds\n";
    bool header_written = false;
    auto on_epoch = [&](const metalearn::EpochRecord& e) {
        if (!header_written) {
            log << "epoch,loss,accuracy\n";
            header_written = true;
        }
        char buf[128];
        std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g\n", e.epoch, e.loss, e.accuracy);
        log << buf << std::flush;
        std::snprintf(buf, sizeof buf, "%d,%.6f\n", e.epoch, e.seconds);
        timing << buf << std::flush;
    };
    log << "# algorithm=" << req.algo << " config_hash=" << config.hash() << " dataset_checksum="
        << to_hex(data.checksum()) << "\n";

    nnet::reset_hvp_calls();
    metalearn::TrainResult res;
    try {
        res = req.algo == "cnn" ? metalearn::cnn_train(data, mc, on_epoch) : metalearn::meta_train(data, mc, on_epoch);
    } catch (const NumericalError&) {
        log.flush();
        throw;
    }
    if (!header_written) log << "epoch,loss,accuracy\n";
    log.flush();
    if (!log) throw IoError("write failed: " + s.log_path);
    s.hvp_calls = nnet::hvp_calls();
    s.epochs = static_cast<int>(res.log.epochs.size());
    nnet::save_checkpoint(res.model, s.checkpoint_path);
    out << "trained " << req.algo << " for " << s.epochs << " epochs, hvp calls " << s.hvp_calls << "\n";
    if (!res.log.epochs.empty())
        out << "final loss " << res.log.epochs.back().loss << ", accuracy " << res.log.epochs.back().accuracy << "\n";
    out << "wrote " << s.checkpoint_path << " and " << s.log_path << "\n";
    return s;
}

std::string eval_csv(const std::vector<EvalRow>& rows) {
    std::string out = "method,n_way,k_shot,snr_db,accuracy,episodes,seed,config_hash\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%s,%d,%d,%g,%.6f,%d,%llu,%s\n", r.method.c_str(), r.n_way, r.k_shot, r.snr_db,
                      r.accuracy, r.episodes, static_cast<unsigned long long>(r.seed), r.config_hash.c_str());
        out += buf;
    }
    return out;
}

std::vector<EvalRow> cmd_eval(const RunConfig& config, const EvalRequest& req, std::ostream& out) {
    if (req.checkpoints.empty()) throw ConfigError("eval: at least one checkpoint is required");
    if (!req.methods.empty() && req.methods.size() != req.checkpoints.size())
        throw ConfigError("eval: one method label per checkpoint");
    std::vector<nnet::ModelParams> models;
    for (const auto& p : req.checkpoints) models.push_back(nnet::load_checkpoint(p));

    std::vector<std::pair<double, dataset::Dataset>> sets;
    if (!req.data_path.empty()) {
        auto d = dataset::load(req.data_path);
        const double snr = d.config.snr_range_db[0];
        sets.emplace_back(snr, std::move(d));
    } else {
        dataset::DatasetConfig dc = config.dataset;
        dc.kappa_list = tasks_for(config.eval.tasks, dc);
        for (double snr : config.eval.snr_grid_db) sets.emplace_back(snr, dataset::generate_eval(dc, snr, config.eval.instances));
    }

    const std::uint64_t seed = derive_seed({config.seed, kEvalStream});
    std::vector<EvalRow> rows;
    for (std::size_t m = 0; m < models.size(); ++m) {
        const std::string method =
            req.methods.empty() ? fs::path(req.checkpoints[m]).stem().string() : req.methods[m];
        for (const auto& [snr, data] : sets) {
            EvalRow r;
            r.method = method;
            r.n_way = models[m].arch.n_way;
            r.k_shot = config.meta.k_shot;
            r.snr_db = snr;
            r.accuracy = metalearn::evaluate(models[m], data, config.meta, seed);
            r.episodes = config.meta.eval_episodes;
            r.seed = seed;
            r.config_hash = config.hash();
            out << method << " @ " << snr << " dB: accuracy " << fmt("%.4f", r.accuracy) << "\n";
            rows.push_back(r);
        }
    }
    ensure_dir(req.out_dir);
    write_file(join(req.out_dir, "eval.csv"), eval_csv(rows));
    return rows;
}

BoundSummary cmd_bound(const RunConfig& config, const BoundRequest& req, std::ostream& out) {
    const double eps = req.epsilon.value_or(config.bound.epsilon);
    BoundSummary s;
    if (req.n) {
        s.poc = bounds::poc(eps, *req.n);
        out << "epsilon " << eps << ", n " << *req.n << ": poc " << fmt("%.6g", *s.poc) << "\n";
    } else {
        const double alpha = req.alpha.value_or(config.bound.alpha);
        s.min_samples = bounds::min_samples(eps, alpha);
        out << "epsilon " << eps << ", alpha " << alpha << ": n >= " << *s.min_samples << "\n";
    }
    if (req.sweep) {
        ensure_dir(req.out_dir);
        const auto rows = bounds::poc_curve(config.bound.curve_epsilons, config.bound.curve_n_max);
        const std::string path = join(req.out_dir, "poc_curve.csv");
        write_file(path, bounds::poc_curve_csv(rows));
        out << "wrote " << path << "\n";
    }
    return s;
}

estimate::SweepResult cmd_azimuth(const RunConfig& config, const std::string& out_dir, std::ostream& out) {
    const auto& sw = config.sweep;
    estimate::SweepScenario sim;
    sim.true_azimuth = geom::deg_to_rad(sw.true_azimuth_deg);
    sim.true_elevation = geom::deg_to_rad(sw.true_elevation_deg);
    sim.distance = sw.distance;
    sim.channel = config.dataset.channel;
    sim.fading = sw.fading;
    sim.rx_antenna = config.dataset.rx_antenna;
    if (sw.snr_db) sim.snr_db = *sw.snr_db;
    sim.seed = derive_seed({config.seed, kSweepStream});
    estimate::BeamSweepConfig bc;
    bc.steps = sw.steps;
    bc.axis = sw.axis;
    bc.steering = sw.steering;
    bc.theta_est = geom::deg_to_rad(sw.theta_est_deg);
    bc.frozen_fading = sw.frozen_fading;

    const auto res = estimate::sweep_azimuth(sim, bc);
    ensure_dir(out_dir);
    const std::string path = join(out_dir, "sweep.csv");
    write_file(path, res.to_csv());
    const double err = geom::angular_distance(res.estimate, sim.true_azimuth);
    out << "azimuth estimate " << fmt("%.6f", res.estimate) << " rad (" << fmt("%.3f", geom::rad_to_deg(res.estimate))
        << " deg), error " << fmt("%.6f", err) << " rad, resolution pi/L = " << fmt("%.6f", std::numbers::pi / sw.steps)
        << " rad\n";
    if (res.degenerate) out << "warning: L = 2 only resolves {0, pi}\n";
    if (res.modulo_pi) out << "warning: the steered axis is perpendicular to the sweep axis, azimuth is only known modulo pi\n";
    out << "wrote " << path << "\n";
    return res;
}

BaselineSummary cmd_baseline(const RunConfig& config, const std::string& out_dir, std::ostream& out) {
    const auto& bl = config.baseline;
    std::vector<double> rot;
    for (double r : bl.rotations_deg) rot.push_back(geom::deg_to_rad(r));
    std::vector<double> candidates;
    const int grid = config.dataset.angle_bins;
    for (int b = 0; b < grid; ++b) candidates.push_back(config.dataset.bin_center(b));
    const auto templ = estimate::dipole_template(candidates, rot);

    channel::ChannelParams ch = config.dataset.channel;
    const double noise = std::pow(10.0, -bl.snr_db / 10.0);  // relative to the boresight power
    Rng rng(derive_seed({config.seed, kBaselineStream}));
    std::vector<double> truths, preds;
    std::string csv = "trial,truth_rad,estimate_rad,error_rad,correct_beam\n";
    for (int t = 0; t < bl.trials; ++t) {
        const double truth = rng.uniform(-0.5 * std::numbers::pi, 0.5 * std::numbers::pi);
        std::vector<double> db;
        for (double r : rot) {
            const double c = std::cos(truth + r);
            const auto g = channel::draw_rician_tap_parts(ch, truth, rng).total();
            const auto y = std::sqrt(c * c) * g + rng.complex_normal(noise);
            db.push_back(10.0 * std::log10(std::max(std::norm(y), 1e-12)));
        }
        const auto est = estimate::conventional_estimate(estimate::difference(db), templ);
        truths.push_back(truth);
        preds.push_back(est.angle);
        const bool ok = estimate::elevation_bin(est.angle, bl.n_way) == estimate::elevation_bin(truth, bl.n_way);
        char buf[160];
        std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%d\n", t, truth, est.angle, std::abs(est.angle - truth), ok);
        csv += buf;
    }
    const auto report = estimate::angle_error_report(preds, truths, bl.n_way);
    std::vector<double> all = report.eps1_samples;
    all.insert(all.end(), report.eps0_samples.begin(), report.eps0_samples.end());
    BaselineSummary s{bl.trials, report.eps1_samples.size(), median(all)};
    ensure_dir(out_dir);
    const std::string path = join(out_dir, "baseline.csv");
    write_file(path, csv);
    out << "conventional estimator: " << s.correct_beams << "/" << s.trials << " correct beams (N = " << bl.n_way
        << "), median error " << fmt("%.4f", s.median_error) << " rad\nwrote " << path << "\n";
    return s;
}

}  // namespace threedpm::cli
