#include "threedpm/config.hpp"

#include <algorithm>
#include <set>

#include <yaml-cpp/yaml.h>
#include <json.hpp>

#include "threedpm/errors.hpp"
#include "threedpm/geom.hpp"
#include "threedpm/util.hpp"

namespace threedpm {

namespace {

void check_keys(const YAML::Node& node, const std::set<std::string>& allowed, const std::string& where) {
    if (!node.IsMap()) throw ConfigError(where + ": expected a mapping");
    for (const auto& kv : node) {
        const auto key = kv.first.as<std::string>();
        if (!allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
    }
}

template <class T>
void read(const YAML::Node& node, const char* key, T& out, const std::string& where) {
    if (!node[key]) return;
    try {
        out = node[key].as<T>();
    } catch (const YAML::Exception&) {
        throw ConfigError(where + "." + key + ": malformed value");
    }
}

template <class T, std::size_t N>
void read_array(const YAML::Node& node, const char* key, std::array<T, N>& out, const std::string& where) {
    if (!node[key]) return;
    std::vector<T> v;
    read(node, key, v, where);
    if (v.size() != N) throw ConfigError(where + "." + key + ": expected " + std::to_string(N) + " values");
    std::copy(v.begin(), v.end(), out.begin());
}

TaskSide side_from(const std::string& s) {
    if (s == "train") return TaskSide::train;
    if (s == "test") return TaskSide::test;
    if (s == "all") return TaskSide::all;
    throw ConfigError("eval.tasks must be train, test or all");
}

const char* side_name(TaskSide s) { return s == TaskSide::train ? "train" : s == TaskSide::test ? "test" : "all"; }

void parse_dataset(const YAML::Node& n, dataset::DatasetConfig& d) {
    const std::string w = "dataset";
    check_keys(n,
               {"kappa_list", "angle_bins", "instances_per_bin", "feature_len", "snr_range_db", "plf_range",
                "geometry", "misalignment_deg", "nuisance"},
               w);
    read(n, "kappa_list", d.kappa_list, w);
    read(n, "angle_bins", d.angle_bins, w);
    read(n, "instances_per_bin", d.instances_per_bin, w);
    read(n, "feature_len", d.feature_len, w);
    read_array(n, "snr_range_db", d.snr_range_db, w);
    read_array(n, "plf_range", d.plf_range, w);
    read_array(n, "geometry", d.geometry, w);
    read(n, "misalignment_deg", d.misalignment_deg, w);
    if (n["nuisance"]) {
        std::string s;
        read(n, "nuisance", s, w);
        if (s == "per_sample")
            d.nuisance = dataset::NuisanceMode::per_sample;
        else if (s == "per_record")
            d.nuisance = dataset::NuisanceMode::per_record;
        else
            throw ConfigError("dataset.nuisance must be per_sample or per_record");
    }
}

void parse_channel(const YAML::Node& n, channel::ChannelParams& c) {
    const std::string w = "channel";
    check_keys(n, {"kappa", "sigma_l", "num_taps", "f_doppler", "pl0_db", "eta", "d0", "sigma_p", "noise_power", "p_t_dbm"},
               w);
    read(n, "kappa", c.kappa, w);
    read(n, "sigma_l", c.sigma_l, w);
    read(n, "num_taps", c.num_taps, w);
    read(n, "f_doppler", c.f_doppler, w);
    read(n, "pl0_db", c.pl0_db, w);
    read(n, "eta", c.eta, w);
    read(n, "d0", c.d0, w);
    read(n, "sigma_p", c.sigma_p, w);
    read(n, "noise_power", c.noise_power, w);
    read(n, "p_t_dbm", c.p_t_dbm, w);
}

void parse_antenna(const YAML::Node& n, antenna::AntennaModel& a) {
    const std::string w = "antenna";
    check_keys(n, {"ideal", "hpbw_e_deg", "hpbw_h_deg", "impairment"}, w);
    read(n, "ideal", a.ideal, w);
    double e = geom::rad_to_deg(a.hpbw_e), h = geom::rad_to_deg(a.hpbw_h);
    read(n, "hpbw_e_deg", e, w);
    read(n, "hpbw_h_deg", h, w);
    a.hpbw_e = geom::deg_to_rad(e);
    a.hpbw_h = geom::deg_to_rad(h);
    if (n["impairment"]) {
        const auto& m = n["impairment"];
        check_keys(m, {"mean", "variance", "seed"}, "antenna.impairment");
        antenna::ImpairmentModel imp;
        read_array(m, "mean", imp.mean, "antenna.impairment");
        read_array(m, "variance", imp.variance, "antenna.impairment");
        read(m, "seed", imp.seed, "antenna.impairment");
        if (imp.variance[0] < 0.0 || imp.variance[1] < 0.0)
            throw ConfigError("antenna.impairment.variance entries must be >= 0");
        a.impairment = imp;
    }
    if (!a.ideal && !a.impairment) throw ConfigError("antenna: a non-ideal antenna needs an impairment block");
    if (!(a.hpbw_e > 0.0 && a.hpbw_e <= 3.141592653589794 && a.hpbw_h > 0.0 && a.hpbw_h <= 3.141592653589794))
        throw ConfigError("antenna: HPBW values must lie in (0, 180] degrees");
}

void parse_meta(const YAML::Node& n, metalearn::MetaConfig& m) {
    const std::string w = "meta";
    check_keys(n,
               {"inner_lr", "outer_lr", "beta", "inner_steps", "meta_batch", "epochs", "n_way", "k_shot", "q_query",
                "first_order", "clip", "divergence_loss", "eval_episodes", "filters", "input_height", "optimizer"},
               w);
    read(n, "inner_lr", m.inner_lr, w);
    read(n, "outer_lr", m.outer_lr, w);
    read(n, "beta", m.beta, w);
    read(n, "inner_steps", m.inner_steps, w);
    read(n, "meta_batch", m.meta_batch, w);
    read(n, "epochs", m.epochs, w);
    read(n, "n_way", m.n_way, w);
    read(n, "k_shot", m.k_shot, w);
    read(n, "q_query", m.q_query, w);
    read(n, "first_order", m.first_order, w);
    read(n, "clip", m.clip, w);
    read(n, "divergence_loss", m.divergence_loss, w);
    read(n, "eval_episodes", m.eval_episodes, w);
    read(n, "filters", m.filters, w);
    read(n, "input_height", m.input_height, w);
    if (n["optimizer"]) {
        std::string s;
        read(n, "optimizer", s, w);
        if (s == "adam")
            m.optimizer = metalearn::OuterOptimizer::adam;
        else if (s == "momentum")
            m.optimizer = metalearn::OuterOptimizer::momentum;
        else
            throw ConfigError("meta.optimizer must be adam or momentum");
    }
}

void parse_eval(const YAML::Node& n, EvalSettings& e) {
    check_keys(n, {"snr_grid_db", "instances", "tasks"}, "eval");
    read(n, "snr_grid_db", e.snr_grid_db, "eval");
    read(n, "instances", e.instances, "eval");
    if (n["tasks"]) {
        std::string s;
        read(n, "tasks", s, "eval");
        e.tasks = side_from(s);
    }
    if (e.snr_grid_db.empty()) throw ConfigError("eval.snr_grid_db must not be empty");
    if (e.instances < 1) throw ConfigError("eval.instances must be >= 1");
}

void parse_sweep(const YAML::Node& n, SweepSettings& s) {
    const std::string w = "sweep";
    check_keys(n,
               {"steps", "axis", "steering", "theta_est_deg", "true_azimuth_deg", "true_elevation_deg", "fading",
                "frozen_fading", "snr_db", "distance"},
               w);
    read(n, "steps", s.steps, w);
    if (n["axis"]) {
        std::string a;
        read(n, "axis", a, w);
        if (a == "z")
            s.axis = estimate::SweepAxis::z;
        else if (a == "y")
            s.axis = estimate::SweepAxis::y;
        else if (a == "x")
            s.axis = estimate::SweepAxis::x;
        else
            throw ConfigError("sweep.axis must be z, y or x");
    }
    if (n["steering"]) {
        std::string a;
        read(n, "steering", a, w);
        if (a == "pitch")
            s.steering = estimate::SteeringAxis::pitch;
        else if (a == "roll")
            s.steering = estimate::SteeringAxis::roll;
        else
            throw ConfigError("sweep.steering must be pitch or roll");
    }
    read(n, "theta_est_deg", s.theta_est_deg, w);
    read(n, "true_azimuth_deg", s.true_azimuth_deg, w);
    read(n, "true_elevation_deg", s.true_elevation_deg, w);
    read(n, "fading", s.fading, w);
    read(n, "frozen_fading", s.frozen_fading, w);
    if (n["snr_db"] && !n["snr_db"].IsNull()) {
        double v = 0.0;
        read(n, "snr_db", v, w);
        s.snr_db = v;
    }
    read(n, "distance", s.distance, w);
    if (s.steps < 2) throw ConfigError("sweep.steps must be >= 2");
    if (!(s.distance > 0.0)) throw ConfigError("sweep.distance must be > 0");
}

void parse_bound(const YAML::Node& n, BoundSettings& b) {
    check_keys(n, {"epsilon", "alpha", "curve_epsilons", "curve_n_max"}, "bound");
    read(n, "epsilon", b.epsilon, "bound");
    read(n, "alpha", b.alpha, "bound");
    read(n, "curve_epsilons", b.curve_epsilons, "bound");
    read(n, "curve_n_max", b.curve_n_max, "bound");
}

void parse_baseline(const YAML::Node& n, BaselineSettings& b) {
    check_keys(n, {"rotations_deg", "trials", "n_way", "snr_db"}, "baseline");
    read(n, "rotations_deg", b.rotations_deg, "baseline");
    read(n, "trials", b.trials, "baseline");
    read(n, "n_way", b.n_way, "baseline");
    read(n, "snr_db", b.snr_db, "baseline");
    if (b.rotations_deg.size() < 2) throw ConfigError("baseline.rotations_deg needs at least two rotations");
    if (b.trials < 1 || b.n_way < 1) throw ConfigError("baseline.trials and baseline.n_way must be >= 1");
}

}  // namespace

void RunConfig::finalize() {
    dataset.base_seed = seed;
    meta.seed = seed;
    dataset.validate();
    meta.validate();
}

std::string RunConfig::to_json() const {
    nlohmann::json j;
    j["seed"] = seed;
    j["dataset"] = nlohmann::json::parse(dataset::config_json(dataset));
    j["meta"] = nlohmann::json::parse(metalearn::config_json(meta));
    j["eval"] = {{"snr_grid_db", eval.snr_grid_db}, {"instances", eval.instances}, {"tasks", side_name(eval.tasks)}};
    j["sweep"] = {{"steps", sweep.steps},
                  {"axis", sweep.axis == estimate::SweepAxis::z ? "z" : sweep.axis == estimate::SweepAxis::y ? "y" : "x"},
                  {"steering", sweep.steering == estimate::SteeringAxis::pitch ? "pitch" : "roll"},
                  {"theta_est_deg", sweep.theta_est_deg},
                  {"true_azimuth_deg", sweep.true_azimuth_deg},
                  {"true_elevation_deg", sweep.true_elevation_deg},
                  {"fading", sweep.fading},
                  {"frozen_fading", sweep.frozen_fading},
                  {"snr_db", sweep.snr_db ? nlohmann::json(*sweep.snr_db) : nlohmann::json(nullptr)},
                  {"distance", sweep.distance}};
    j["bound"] = {{"epsilon", bound.epsilon},
                  {"alpha", bound.alpha},
                  {"curve_epsilons", bound.curve_epsilons},
                  {"curve_n_max", bound.curve_n_max}};
    j["baseline"] = {{"rotations_deg", baseline.rotations_deg},
                     {"trials", baseline.trials},
                     {"n_way", baseline.n_way},
                     {"snr_db", baseline.snr_db}};
    return j.dump();
}

std::string RunConfig::hash() const {
    Fnv1a64 h;
    h.update(to_json());
    return h.hex();
}

RunConfig parse_config(const std::string& yaml_text) {
    YAML::Node root;
    try {
        root = YAML::Load(yaml_text);
    } catch (const YAML::Exception& e) {
        throw ConfigError(std::string("config: YAML syntax error: ") + e.what());
    }
    RunConfig c;
    if (root.IsNull()) {
        c.finalize();
        return c;
    }
    check_keys(root, {"seed", "dataset", "channel", "antenna", "meta", "eval", "sweep", "bound", "baseline"}, "config");
    read(root, "seed", c.seed, "config");
    if (root["dataset"]) parse_dataset(root["dataset"], c.dataset);
    if (root["channel"]) parse_channel(root["channel"], c.dataset.channel);
    if (root["antenna"]) parse_antenna(root["antenna"], c.dataset.rx_antenna);
    if (root["meta"]) parse_meta(root["meta"], c.meta);
    if (root["eval"]) parse_eval(root["eval"], c.eval);
    if (root["sweep"]) parse_sweep(root["sweep"], c.sweep);
    if (root["bound"]) parse_bound(root["bound"], c.bound);
    if (root["baseline"]) parse_baseline(root["baseline"], c.baseline);
    c.finalize();
    return c;
}

RunConfig load_config(const std::string& path) { return parse_config(read_file(path)); }

std::vector<int> tasks_for(TaskSide side, const dataset::DatasetConfig& config) {
    if (side == TaskSide::all) return config.kappa_list;
    const auto s = dataset::split(config);
    return side == TaskSide::train ? s.train_tasks : s.test_tasks;
}

}  // namespace threedpm
