#include "threedpm/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>

#include <json.hpp>

#include "threedpm/errors.hpp"
#include "threedpm/geom.hpp"
#include "threedpm/random.hpp"
#include "threedpm/util.hpp"

namespace threedpm::dataset {

namespace {

using json = nlohmann::json;

constexpr char kMagic[4] = {'3', 'D', 'P', 'M'};
constexpr std::uint16_t kVersion = 1;
constexpr double kPowerFloorWatts = 1e-30;

const char* nuisance_name(NuisanceMode m) { return m == NuisanceMode::per_sample ? "per_sample" : "per_record"; }

NuisanceMode nuisance_from(const std::string& s) {
    if (s == "per_sample") return NuisanceMode::per_sample;
    if (s == "per_record") return NuisanceMode::per_record;
    throw ConfigError("unknown nuisance mode '" + s + "'");
}

// Partial Fisher-Yates: the first k entries of a random permutation of [0, n).
std::vector<int> choose(Rng& rng, int n, int k) {
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < k; ++i) {
        const int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - i)));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
}

}  // namespace

std::vector<int> DatasetConfig::default_kappas() {
    std::vector<int> k(31);
    std::iota(k.begin(), k.end(), 0);
    return k;
}

void DatasetConfig::validate() const {
    if (kappa_list.empty()) throw ConfigError("dataset: kappa_list must not be empty");
    std::set<int> seen;
    for (int k : kappa_list) {
        if (k < 0) throw ConfigError("dataset: kappa values must be >= 0");
        if (!seen.insert(k).second) throw ConfigError("dataset: kappa values must be distinct");
    }
    if (angle_bins < 2 || angle_bins > 65535) throw ConfigError("dataset: angle_bins must lie in [2, 65535]");
    if (feature_len < 1) throw ConfigError("dataset: feature_len must be >= 1");
    if (instances_per_bin < 1) throw ConfigError("dataset: instances_per_bin must be >= 1");
    if (snr_range_db[0] > snr_range_db[1]) throw ConfigError("dataset: snr_range_db must be ordered");
    if (!(plf_range[0] >= 0.0 && plf_range[0] <= plf_range[1] && plf_range[1] <= 1.0))
        throw ConfigError("dataset: plf_range must be an ordered sub-interval of [0, 1]");
    if (!(misalignment_deg >= 0.0)) throw ConfigError("dataset: misalignment_deg must be >= 0");
    if (geometry[0] == 0.0 && geometry[1] == 0.0 && geometry[2] == 0.0)
        throw ConfigError("dataset: geometry offsets must not all be zero");
    channel.validate();
}

std::size_t DatasetConfig::record_count() const {
    return kappa_list.size() * static_cast<std::size_t>(angle_bins) * static_cast<std::size_t>(instances_per_bin);
}

double DatasetConfig::bin_width() const { return std::numbers::pi / angle_bins; }

double DatasetConfig::bin_center(int bin) const { return -0.5 * std::numbers::pi + (bin + 0.5) * bin_width(); }

TaskSplit split(const DatasetConfig& config) {
    TaskSplit s;
    for (int k : config.kappa_list) (k % 2 != 0 ? s.train_tasks : s.test_tasks).push_back(k);
    return s;
}

std::size_t Dataset::index(std::size_t task, int bin, int instance) const {
    return (task * config.angle_bins + static_cast<std::size_t>(bin)) * config.instances_per_bin +
           static_cast<std::size_t>(instance);
}

std::size_t Dataset::task_index(int kappa) const {
    const auto it = std::find(config.kappa_list.begin(), config.kappa_list.end(), kappa);
    if (it == config.kappa_list.end()) throw ConfigError("dataset has no task with kappa " + std::to_string(kappa));
    return static_cast<std::size_t>(it - config.kappa_list.begin());
}

int Dataset::kappa_of(std::size_t record) const {
    const std::size_t per_task = static_cast<std::size_t>(config.angle_bins) * config.instances_per_bin;
    return config.kappa_list.at(record / per_task);
}

std::uint64_t Dataset::checksum() const {
    Fnv1a64 h;
    std::string buf;
    buf.reserve(features.size() * 4);
    for (float f : features) put_f32(buf, f);
    for (auto l : labels) put_u16(buf, l);
    for (float s : snr_db) put_f32(buf, s);
    h.update(buf);
    return h.digest();
}

void synthesize_record(const DatasetConfig& config, int kappa, int bin, int instance, float* features,
                       float& snr_db) {
    using geom::Vec3;
    Rng rng(derive_seed({config.base_seed, static_cast<std::uint64_t>(kappa), static_cast<std::uint64_t>(bin),
                         static_cast<std::uint64_t>(instance)}));
    channel::ChannelParams ch = config.channel;
    ch.kappa = kappa;

    const geom::Pose tx{{0.0, 0.0, 0.0}, geom::RotationMatrix::identity()};
    const geom::Pose rx{{config.geometry[0], config.geometry[1], config.geometry[2]}, geom::RotationMatrix::identity()};
    const geom::LinkGeometry link = geom::link_geometry(tx, rx);
    const Vec3 to_rx = geom::normalized(rx.position - tx.position);
    const Vec3 to_tx = -to_rx;

    // Rx faces the Tx in yaw and pitches so that the body-frame elevation of the arrival
    // direction equals the bin center.
    const double yaw = std::atan2(to_tx.y, to_tx.x);
    const double pitch = config.bin_center(bin) - std::asin(to_tx.z);

    const double snr = rng.uniform(config.snr_range_db[0], config.snr_range_db[1]);
    snr_db = static_cast<float>(snr);

    const double p_t = channel::dbm_to_watts(ch.p_t_dbm);
    std::optional<std::uint64_t> shadow;
    if (ch.sigma_p > 0.0) shadow = rng.next_u64();
    const double c = channel::large_scale_gain(ch, link.d, shadow);

    const auto ideal = antenna::AntennaModel::ideal_dipole();
    auto tx_gain = [&](double d_pitch, double d_yaw) {
        const auto a = geom::body_angles(geom::euler_zyx(d_yaw, d_pitch, 0.0), to_rx);
        return antenna::power_gain(ideal, a.azimuth, a.polar);
    };
    auto rx_gain = [&](double d_pitch, double d_yaw) {
        const auto a = geom::body_angles(geom::euler_zyx(yaw + d_yaw, pitch + d_pitch, 0.0), to_tx);
        return antenna::power_gain(config.rx_antenna, a.azimuth, a.polar, static_cast<std::uint64_t>(instance));
    };

    // Noise floor set so that the nominal SNR holds at Rx boresight.
    const double noise = p_t * c * tx_gain(0.0, 0.0) * antenna::kDipoleDirectivity / std::pow(10.0, snr / 10.0);
    const double sigma_delta = geom::deg_to_rad(config.misalignment_deg);

    double g_t = 0.0, g_r = 0.0, plf = 0.0;
    auto draw_nuisance = [&] {
        plf = rng.uniform(config.plf_range[0], config.plf_range[1]);
        const double dt1 = sigma_delta * rng.normal();
        const double dt2 = sigma_delta * rng.normal();
        const double dr1 = sigma_delta * rng.normal();
        const double dr2 = sigma_delta * rng.normal();
        g_t = tx_gain(dt1, dt2);
        g_r = rx_gain(dr1, dr2);
    };
    if (config.nuisance == NuisanceMode::per_record) draw_nuisance();

    for (int s = 0; s < config.feature_len; ++s) {
        if (config.nuisance == NuisanceMode::per_sample) draw_nuisance();
        const double amp2 = p_t * c * g_t * g_r * plf;
        const double amp = std::sqrt(amp2);
        std::complex<double> y = rng.complex_normal(noise);
        double extra = 0.0;
        for (int l = 0; l < ch.num_taps; ++l) {
            const auto g = channel::draw_rician_tap_parts(ch, link.phi_theta, rng).total();
            if (l == 0)
                y += amp * g;
            else
                extra += amp2 * std::norm(g);
        }
        const double power = std::max(std::norm(y) + extra, kPowerFloorWatts);
        features[s] = static_cast<float>(channel::watts_to_dbm(power));
    }
}

Dataset generate(const DatasetConfig& config) {
    config.validate();
    Dataset d;
    d.config = config;
    const std::size_t n = config.record_count();
    d.features.assign(n * config.feature_len, 0.0f);
    d.labels.assign(n, 0);
    d.snr_db.assign(n, 0.0f);
    const std::size_t per_task = static_cast<std::size_t>(config.angle_bins) * config.instances_per_bin;
    parallel_for(n, [&](std::size_t r) {
        const std::size_t task = r / per_task;
        const int bin = static_cast<int>((r % per_task) / config.instances_per_bin);
        const int inst = static_cast<int>(r % config.instances_per_bin);
        synthesize_record(config, config.kappa_list[task], bin, inst, d.features.data() + r * config.feature_len,
                          d.snr_db[r]);
        d.labels[r] = static_cast<std::uint16_t>(bin);
    });
    return d;
}

Dataset generate_eval(DatasetConfig config, double snr_db, int instances) {
    config.snr_range_db = {snr_db, snr_db};
    config.instances_per_bin = instances;
    return generate(config);
}

std::string config_json(const DatasetConfig& c) {
    json j;
    j["kappa_list"] = c.kappa_list;
    j["angle_bins"] = c.angle_bins;
    j["instances_per_bin"] = c.instances_per_bin;
    j["feature_len"] = c.feature_len;
    j["snr_range_db"] = c.snr_range_db;
    j["plf_range"] = c.plf_range;
    j["geometry"] = c.geometry;
    j["misalignment_deg"] = c.misalignment_deg;
    j["nuisance"] = nuisance_name(c.nuisance);
    j["base_seed"] = c.base_seed;
    const auto& ch = c.channel;
    j["channel"] = {{"sigma_l", ch.sigma_l},     {"num_taps", ch.num_taps}, {"f_doppler", ch.f_doppler},
                    {"pl0_db", ch.pl0_db},       {"eta", ch.eta},           {"d0", ch.d0},
                    {"sigma_p", ch.sigma_p},     {"noise_power", ch.noise_power}, {"p_t_dbm", ch.p_t_dbm},
                    {"kappa", ch.kappa}};
    json ant;
    ant["ideal"] = c.rx_antenna.ideal;
    ant["hpbw_e"] = c.rx_antenna.hpbw_e;
    ant["hpbw_h"] = c.rx_antenna.hpbw_h;
    if (c.rx_antenna.impairment) {
        ant["impairment"] = {{"mean", c.rx_antenna.impairment->mean},
                             {"variance", c.rx_antenna.impairment->variance},
                             {"seed", c.rx_antenna.impairment->seed}};
    }
    j["rx_antenna"] = ant;
    return j.dump();
}

DatasetConfig config_from_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        DatasetConfig c;
        c.kappa_list = j.at("kappa_list").get<std::vector<int>>();
        c.angle_bins = j.at("angle_bins").get<int>();
        c.instances_per_bin = j.at("instances_per_bin").get<int>();
        c.feature_len = j.at("feature_len").get<int>();
        c.snr_range_db = j.at("snr_range_db").get<std::array<double, 2>>();
        c.plf_range = j.at("plf_range").get<std::array<double, 2>>();
        c.geometry = j.at("geometry").get<std::array<double, 3>>();
        c.misalignment_deg = j.at("misalignment_deg").get<double>();
        c.nuisance = nuisance_from(j.at("nuisance").get<std::string>());
        c.base_seed = j.at("base_seed").get<std::uint64_t>();
        const json& ch = j.at("channel");
        c.channel.sigma_l = ch.at("sigma_l").get<double>();
        c.channel.num_taps = ch.at("num_taps").get<int>();
        c.channel.f_doppler = ch.at("f_doppler").get<double>();
        c.channel.pl0_db = ch.at("pl0_db").get<double>();
        c.channel.eta = ch.at("eta").get<double>();
        c.channel.d0 = ch.at("d0").get<double>();
        c.channel.sigma_p = ch.at("sigma_p").get<double>();
        c.channel.noise_power = ch.at("noise_power").get<double>();
        c.channel.p_t_dbm = ch.at("p_t_dbm").get<double>();
        c.channel.kappa = ch.at("kappa").get<double>();
        const json& ant = j.at("rx_antenna");
        c.rx_antenna.ideal = ant.at("ideal").get<bool>();
        c.rx_antenna.hpbw_e = ant.at("hpbw_e").get<double>();
        c.rx_antenna.hpbw_h = ant.at("hpbw_h").get<double>();
        if (ant.contains("impairment")) {
            antenna::ImpairmentModel m;
            m.mean = ant["impairment"].at("mean").get<std::array<double, 2>>();
            m.variance = ant["impairment"].at("variance").get<std::array<double, 2>>();
            m.seed = ant["impairment"].at("seed").get<std::uint64_t>();
            c.rx_antenna.impairment = m;
        }
        return c;
    } catch (const json::exception& e) {
        throw IoError(std::string("malformed dataset manifest: ") + e.what());
    }
}

std::string serialize(const Dataset& data) {
    json manifest;
    manifest["config"] = json::parse(config_json(data.config));
    manifest["records"] = data.size();
    manifest["feature_len"] = data.config.feature_len;
    manifest["seed"] = data.config.base_seed;
    manifest["checksum"] = to_hex(data.checksum());
    const std::string m = manifest.dump();

    std::string out(kMagic, 4);
    put_u16(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(m.size()));
    out += m;
    out.reserve(out.size() + data.features.size() * 4 + data.size() * 6);
    for (float f : data.features) put_f32(out, f);
    for (auto l : data.labels) put_u16(out, l);
    for (float s : data.snr_db) put_f32(out, s);
    return out;
}

Dataset deserialize(const std::string& bytes) {
    ByteReader rd(bytes, "dataset");
    if (rd.bytes(4) != std::string(kMagic, 4)) throw IoError("dataset: bad magic");
    const auto version = rd.u16();
    if (version != kVersion) throw IoError("dataset: unsupported version " + std::to_string(version));
    const std::string mtext = rd.bytes(rd.u32());
    json manifest;
    try {
        manifest = json::parse(mtext);
    } catch (const json::exception& e) {
        throw IoError(std::string("dataset: malformed manifest: ") + e.what());
    }
    Dataset d;
    d.config = config_from_json(manifest.at("config").dump());
    const std::size_t n = manifest.at("records").get<std::size_t>();
    if (n != d.config.record_count()) throw IoError("dataset: record count disagrees with config");
    const std::size_t l = static_cast<std::size_t>(d.config.feature_len);
    if (rd.remaining() != n * l * 4 + n * 2 + n * 4) throw IoError("dataset: payload size mismatch");
    d.features.resize(n * l);
    for (auto& f : d.features) f = rd.f32();
    d.labels.resize(n);
    for (auto& v : d.labels) v = rd.u16();
    d.snr_db.resize(n);
    for (auto& s : d.snr_db) s = rd.f32();
    if (to_hex(d.checksum()) != manifest.at("checksum").get<std::string>()) throw IoError("dataset: checksum mismatch");
    return d;
}

void save(const Dataset& data, const std::string& path) { write_file(path, serialize(data)); }

Dataset load(const std::string& path) { return deserialize(read_file(path)); }

std::string to_csv(const Dataset& data) {
    std::string out = "kappa,bin,instance,snr_db";
    for (int i = 0; i < data.config.feature_len; ++i) out += ",f" + std::to_string(i);
    out += '\n';
    char buf[32];
    for (std::size_t r = 0; r < data.size(); ++r) {
        out += std::to_string(data.kappa_of(r)) + ',' + std::to_string(data.labels[r]) + ',' +
               std::to_string(r % data.config.instances_per_bin);
        std::snprintf(buf, sizeof buf, ",%.9g", data.snr_db[r]);
        out += buf;
        const float* f = data.row(r);
        for (int i = 0; i < data.config.feature_len; ++i) {
            std::snprintf(buf, sizeof buf, ",%.9g", f[i]);
            out += buf;
        }
        out += '\n';
    }
    return out;
}

Episode sample_episode(const Dataset& data, const std::vector<int>& tasks, int n_way, int k_shot, int q_query,
                       std::uint64_t seed) {
    const auto& cfg = data.config;
    if (tasks.empty()) throw ConfigError("sample_episode: no tasks to sample from");
    if (n_way < 1 || k_shot < 1 || q_query < 0) throw ConfigError("sample_episode: need N >= 1, K >= 1, Q >= 0");
    if (n_way > cfg.angle_bins) throw ConfigError("sample_episode: N exceeds the number of angle bins");
    if (k_shot + q_query > cfg.instances_per_bin)
        throw ConfigError("sample_episode: K + Q exceeds instances per bin");

    Rng rng(seed);
    Episode ep;
    ep.n_way = n_way;
    ep.k_shot = k_shot;
    ep.q_query = q_query;
    ep.kappa = tasks[rng.below(tasks.size())];
    const std::size_t task = data.task_index(ep.kappa);
    ep.classes = choose(rng, cfg.angle_bins, n_way);
    ep.feature_len = cfg.feature_len;
    const std::size_t l = static_cast<std::size_t>(cfg.feature_len);
    for (int c = 0; c < n_way; ++c) {
        const auto inst = choose(rng, cfg.instances_per_bin, k_shot + q_query);
        for (int i = 0; i < k_shot + q_query; ++i) {
            const std::size_t r = data.index(task, ep.classes[c], inst[i]);
            const bool support = i < k_shot;
            auto& feats = support ? ep.support : ep.query;
            feats.insert(feats.end(), data.row(r), data.row(r) + l);
            (support ? ep.support_labels : ep.query_labels).push_back(c);
            (support ? ep.support_records : ep.query_records).push_back(r);
        }
    }
    return ep;
}

}  // namespace threedpm::dataset
