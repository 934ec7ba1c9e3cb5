#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

#include "threedpm/commands.hpp"
#include "threedpm/config.hpp"
#include "threedpm/errors.hpp"
#include "threedpm/nnet.hpp"
#include "threedpm/util.hpp"

using namespace threedpm;
namespace fs = std::filesystem;

namespace {

const char* kSmallYaml = R"(seed: 11
dataset:
  kappa_list: [0, 1, 2, 3]
  angle_bins: 8
  instances_per_bin: 6
  feature_len: 16
meta:
  n_way: 3
  k_shot: 1
  q_query: 2
  meta_batch: 2
  epochs: 2
  filters: 4
  eval_episodes: 8
eval:
  snr_grid_db: [0, 10]
  instances: 6
)";

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("threedpm_test_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

int run_cli(const std::string& args) {
    const std::string cmd = std::string(THREEDPM_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_SUITE("config") {
    TEST_CASE("empty configuration gives the defaults") {
        const auto c = parse_config("");
        CHECK(c.dataset.record_count() == 111600);
        CHECK(c.meta.inner_lr == 0.4);
        CHECK(c.meta.outer_lr == 0.001);
        CHECK(c.meta.beta == 0.999);
        CHECK(c.meta.meta_batch == 10);
        CHECK(c.meta.epochs == 500);
        CHECK(c.meta.n_way == 6);
        CHECK(c.meta.k_shot == 3);
        CHECK(c.dataset.channel.kappa == 12.0);
        CHECK(c.dataset.misalignment_deg == 0.05);
        CHECK(c.eval.snr_grid_db == std::vector<double>{10.0});
    }

    TEST_CASE("values are read and the seed propagates") {
        const auto c = parse_config(kSmallYaml);
        CHECK(c.seed == 11);
        CHECK(c.dataset.base_seed == 11);
        CHECK(c.meta.seed == 11);
        CHECK(c.dataset.kappa_list == std::vector<int>{0, 1, 2, 3});
        CHECK(c.meta.filters == 4);
        CHECK(c.eval.snr_grid_db.size() == 2);
        const auto again = parse_config(kSmallYaml);
        CHECK(c.hash() == again.hash());
        CHECK(c.hash() != parse_config("").hash());
        const auto antenna = parse_config("antenna:\n  ideal: false\n  hpbw_e_deg: 60\n  impairment:\n    seed: 4\n");
        CHECK_FALSE(antenna.dataset.rx_antenna.ideal);
        REQUIRE(antenna.dataset.rx_antenna.impairment.has_value());
        CHECK(antenna.dataset.rx_antenna.impairment->seed == 4);
        CHECK(parse_config("").meta.input_height == 1);
        CHECK(parse_config("meta:\n  input_height: 10\n").meta.input_height == 10);
    }

    TEST_CASE("schema violations are rejected") {
        CHECK_THROWS_AS(parse_config("bogus: 1\n"), ConfigError);
        CHECK_THROWS_AS(parse_config("meta:\n  inner_lr: 0.1\n  learning_rate: 2\n"), ConfigError);
        CHECK_THROWS_AS(parse_config("meta:\n  epochs: many\n"), ConfigError);
        CHECK_THROWS_AS(parse_config("meta:\n  inner_lr: 0\n"), ConfigError);
        CHECK_THROWS_AS(parse_config("dataset:\n  angle_bins: 1\n"), ConfigError);
        CHECK_THROWS_AS(parse_config("sweep:\n  axis: w\n"), ConfigError);
        CHECK_THROWS_AS(parse_config("seed: [1, 2\n"), ConfigError);
        CHECK_THROWS_AS(load_config("/nonexistent/config.yaml"), IoError);
    }

    TEST_CASE("task sides") {
        const auto c = parse_config(kSmallYaml);
        CHECK(tasks_for(TaskSide::train, c.dataset) == std::vector<int>{1, 3});
        CHECK(tasks_for(TaskSide::test, c.dataset) == std::vector<int>{0, 2});
        CHECK(tasks_for(TaskSide::all, c.dataset).size() == 4);
    }

    TEST_CASE("shipped default configuration parses") {
        const fs::path shipped = fs::path(THREEDPM_SOURCE_DIR) / "configs" / "default.yaml";
        const auto c = load_config(shipped.string());
        CHECK(c.to_json() == parse_config("").to_json());
    }
}

TEST_SUITE("cli") {
    TEST_CASE("gen dry run writes nothing") {
        TempDir dir("dry");
        std::ostringstream out;
        const auto s = cli::cmd_gen(parse_config(""), {dir.path.string(), true, false, {}}, out);
        CHECK(s.records == 111600);
        CHECK_FALSE(s.written);
        CHECK(fs::is_empty(dir.path));
        CHECK(out.str().find("111600") != std::string::npos);
    }

    TEST_CASE("gen is reproducible") {
        TempDir dir("gen");
        const auto cfg = parse_config(kSmallYaml);
        std::ostringstream out;
        const auto a = cli::cmd_gen(cfg, {dir.path.string(), false, true, {}}, out);
        const std::string first = read_file(a.path);
        const auto b = cli::cmd_gen(cfg, {dir.path.string(), false, false, {}}, out);
        CHECK(a.checksum == b.checksum);
        CHECK(read_file(b.path) == first);
        CHECK(a.records == 4 * 8 * 6);
        CHECK(fs::exists(dir.file("dataset.csv")));
        const auto e = cli::cmd_gen(cfg, {dir.path.string(), false, false, 10.0}, out);
        CHECK(fs::exists(e.path));
    }

    TEST_CASE("train and eval") {
        TempDir dir("train");
        const auto cfg = parse_config(kSmallYaml);
        std::ostringstream out;
        const auto fo = cli::cmd_train(cfg, {"fomaml", "", dir.path.string()}, out);
        CHECK(fo.hvp_calls == 0);
        CHECK(fs::exists(fo.checkpoint_path));
        const auto log = read_file(fo.log_path);
        CHECK(log.find("epoch,loss,accuracy\n") != std::string::npos);
        CHECK(read_file(fo.timing_path).rfind("epoch,seconds\n", 0) == 0);
        const auto maml = cli::cmd_train(cfg, {"maml", "", dir.path.string()}, out);
        CHECK(maml.hvp_calls > 0);

        auto zero = cfg;
        zero.meta.epochs = 0;
        const auto init = cli::cmd_train(zero, {"cnn", "", dir.path.string()}, out);
        const auto m = nnet::load_checkpoint(init.checkpoint_path);
        CHECK(m.values == nnet::init_params<float>(m.arch, derive_seed({cfg.seed, 0x1417})));

        const auto rows = cli::cmd_eval(cfg, {{fo.checkpoint_path, maml.checkpoint_path}, {}, "", dir.path.string()}, out);
        REQUIRE(rows.size() == 4);
        CHECK(rows[0].method == "fomaml");
        for (const auto& r : rows) {
            CHECK(r.accuracy >= 0.0);
            CHECK(r.accuracy <= 1.0);
            CHECK(r.config_hash == cfg.hash());
        }
        const auto csv = read_file(dir.file("eval.csv"));
        CHECK(csv.rfind("method,n_way,k_shot,snr_db,accuracy,episodes,seed,config_hash\n", 0) == 0);
        const auto again = cli::cmd_eval(cfg, {{fo.checkpoint_path, maml.checkpoint_path}, {}, "", dir.path.string()}, out);
        CHECK(read_file(dir.file("eval.csv")) == csv);
        CHECK(again[1].accuracy == rows[1].accuracy);
        CHECK_THROWS_AS(cli::cmd_train(cfg, {"svm", "", dir.path.string()}, out), ConfigError);
    }

    TEST_CASE("bound command") {
        TempDir dir("bound");
        std::ostringstream out;
        const auto cfg = parse_config("");
        auto s = cli::cmd_bound(cfg, {0.05, 0.05, {}, false, dir.path.string()}, out);
        CHECK(s.min_samples == 738u);
        s = cli::cmd_bound(cfg, {0.3, 2.0, {}, false, dir.path.string()}, out);
        CHECK(s.min_samples == 0u);
        s = cli::cmd_bound(cfg, {0.25, {}, 45u, true, dir.path.string()}, out);
        REQUIRE(s.poc.has_value());
        CHECK(std::abs(*s.poc - 0.003607) < 1e-6);
        CHECK(read_file(dir.file("poc_curve.csv")).rfind("n,poc,epsilon\n", 0) == 0);
        CHECK_THROWS_AS(cli::cmd_bound(cfg, {0.05, 0.0, {}, false, dir.path.string()}, out), DomainError);
    }

    TEST_CASE("azimuth command") {
        TempDir dir("az");
        std::ostringstream out;
        auto cfg = parse_config(
            "sweep:\n  true_azimuth_deg: 57.29577951308232\n  true_elevation_deg: 2.85\n  theta_est_deg: 2.85\n");
        const auto r = cli::cmd_azimuth(cfg, dir.path.string(), out);
        CHECK(std::abs(r.estimate - 1.0) <= 3.141592653589793 / 360);
        CHECK(fs::exists(dir.file("sweep.csv")));
        cfg.sweep.steps = 2;
        CHECK(cli::cmd_azimuth(cfg, dir.path.string(), out).degenerate);
    }

    TEST_CASE("baseline command") {
        TempDir dir("base");
        std::ostringstream out;
        auto cfg = parse_config("baseline:\n  trials: 40\n");
        const auto s = cli::cmd_baseline(cfg, dir.path.string(), out);
        CHECK(s.trials == 40);
        CHECK(s.correct_beams <= 40u);
        CHECK(fs::exists(dir.file("baseline.csv")));
    }

    TEST_CASE("exit codes of the binary") {
        TempDir dir("exit");
        const std::string out = " --out " + dir.path.string();
        CHECK(run_cli("bound --epsilon 0.05 --alpha 0.05" + out) == 0);
        CHECK(run_cli("bound --epsilon 0.05 --alpha 0" + out) == 2);
        CHECK(run_cli("gen --dry-run" + out) == 0);
        CHECK(run_cli("frobnicate") == 2);
        CHECK(run_cli("train --algo svm" + out) == 2);
        write_file(dir.file("bad.yaml"), "nonsense_key: 3\n");
        CHECK(run_cli("gen --dry-run --config " + dir.file("bad.yaml") + out) == 2);
        CHECK(run_cli("gen --dry-run --config " + dir.file("missing.yaml") + out) == 4);
        CHECK(run_cli("azimuth --theta-est 90" + out) == 3);
        CHECK(run_cli("azimuth --steps 360" + out) == 0);
        write_file(dir.file("broken.ckpt"), "not a checkpoint");
        CHECK(run_cli("eval --checkpoint " + dir.file("broken.ckpt") + out) == 4);
    }
}
