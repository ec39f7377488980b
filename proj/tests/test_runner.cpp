#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

#include "albedo/errors.hpp"
#include "albedo/report_io.hpp"
#include "albedo/runner.hpp"

using namespace albedo;
using nlohmann::json;

namespace {

ExperimentConfig tiny_config(const std::string& out) {
    ExperimentConfig cfg;
    cfg.grid_n = 17;
    cfg.n_polar = 4;
    cfg.n_azimuth = 8;
    cfg.disc_radial = 8;
    cfg.disc_angular = 12;
    cfg.lat_npts = 17;
    cfg.march_step = 1.0 / 8.0;
    cfg.sigma_step = 1.0 / 16.0;
    cfg.phantom_a.params = {{"sigma0", 1.0}, {"c0", 0.5}};
    cfg.kappa_scale_b = 0.8;
    cfg.beam_offsets = {0.0, 0.3};
    cfg.recon_slices = 5;
    cfg.recon_angles = 16;
    cfg.recon_offsets = 21;
    cfg.recon_grid = 11;
    cfg.tol = 2e-3;
    cfg.mc_particles = 20000;
    cfg.threads = 4;
    cfg.out_dir = out;
    return cfg;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE_MESSAGE(bool(in), "missing artifact: ", path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

bool exists(const std::string& path) { return bool(std::ifstream(path)); }

}  // namespace

TEST_CASE("config parsing rejects unknown keys and malformed values") {
    CHECK_NOTHROW(ExperimentConfig::from_json_text("{}"));
    CHECK_THROWS_AS(ExperimentConfig::from_json_text("not json"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json_text("[1,2]"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json_text(R"({"domian": {}})"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json_text(R"({"domain": {"radius": 2}})"),
                    ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json_text(R"({"seed": "abc"})"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json_text(R"({"beams": {"offsets": []}})"),
                    ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json_text(R"({"beams": {"offsets": ["a"]}})"),
                    ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json_text(R"({"phantom_a": {"params": {}}})"),
                    ConfigError);
    CHECK_THROWS_AS(
        ExperimentConfig::from_json_text(R"({"phantom_a": {"name": 3, "params": {}}})"),
        ConfigError);
    CHECK_THROWS_AS(
        ExperimentConfig::from_json_text(R"({"resolutions": {"grid_n": 17.5}})"),
        ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json_text(R"({"solver": {"multiple": 1}})"),
                    ConfigError);

    try {
        ExperimentConfig::from_json_text(R"({"stability": {"epsilon": [0.1]}})");
        FAIL("unknown stability key accepted");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("epsilon") != std::string::npos);
    }
}

TEST_CASE("canonical serialization drives a stable provenance hash") {
    const ExperimentConfig a = ExperimentConfig::from_json_text(
        R"({"seed": 7, "domain": {"R": 2.0, "rho": 1.0}})");
    const ExperimentConfig b = ExperimentConfig::from_json_text(
        R"({"domain": {"rho": 1.0, "R": 2.0}, "seed": 7})");
    CHECK(a.canonical_json() == b.canonical_json());
    CHECK(hash_hex(fnv1a_hash(a.canonical_json())) == hash_hex(fnv1a_hash(b.canonical_json())));

    const ExperimentConfig c = ExperimentConfig::from_json_text(R"({"seed": 8})");
    CHECK(a.canonical_json() != c.canonical_json());
    CHECK(fnv1a_hash(a.canonical_json()) != fnv1a_hash(c.canonical_json()));

    const json round = json::parse(a.canonical_json());
    CHECK(round.at("seed").get<int>() == 7);
    CHECK(round.at("domain").at("R").get<double>() == 2.0);
}

TEST_CASE("validate pipeline writes a clean report for the default phantom") {
    const ExperimentConfig cfg = tiny_config("/tmp/runner-validate");
    REQUIRE(run_experiment("validate", cfg) == 0);
    CHECK(exists(cfg.out_dir + "/config.json"));

    const json rep = json::parse(slurp(cfg.out_dir + "/validate_report.json"));
    CHECK(rep.at("violations").get<int>() == 0);
    CHECK(rep.at("admissibility").at("ok").get<bool>());
    CHECK(rep.at("subcriticality").at("subcritical").get<bool>());
    CHECK(rep.at("traces").at("total_mass").get<double>() <= 1.02);

    const std::string expected = hash_hex(fnv1a_hash(cfg.canonical_json()));
    CHECK(rep.at("provenance").at("config_hash").get<std::string>() == expected);
    CHECK(json::parse(slurp(cfg.out_dir + "/config.json")) == json::parse(cfg.canonical_json()));
}

TEST_CASE("validate on the zero phantom reports a transparent medium") {
    ExperimentConfig cfg = tiny_config("/tmp/runner-zero");
    cfg.phantom_a.name = "zero";
    cfg.phantom_a.params.clear();
    REQUIRE(run_experiment("validate", cfg) == 0);

    const json rep = json::parse(slurp(cfg.out_dir + "/validate_report.json"));
    CHECK(rep.at("violations").get<int>() == 0);
    CHECK(rep.at("traces").at("single_mass").get<double>() == 0.0);
    CHECK(rep.at("traces").at("multiple_mass").get<double>() == 0.0);
    CHECK(rep.at("traces").at("ballistic_mass").get<double>() == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("precondition failures exit with code two and a machine-readable error") {
    SUBCASE("supercritical phantom is refused") {
        ExperimentConfig cfg = tiny_config("/tmp/runner-refuse");
        cfg.phantom_a.name = "ball";
        cfg.phantom_a.params = {{"sigma0", 0.2}, {"c0", 2.0}};
        CHECK(run_experiment("validate", cfg) == 2);
        const json err = json::parse(slurp(cfg.out_dir + "/error.json"));
        CHECK(err.at("error").get<std::string>() == "refusal");
        CHECK(!err.at("message").get<std::string>().empty());
        CHECK(err.at("config_hash").get<std::string>().size() == 16);
    }
    SUBCASE("unknown subcommand is a config error") {
        const ExperimentConfig cfg = tiny_config("/tmp/runner-badcmd");
        CHECK(run_experiment("transmogrify", cfg) == 2);
        const json err = json::parse(slurp(cfg.out_dir + "/error.json"));
        CHECK(err.at("error").get<std::string>() == "config");
        CHECK(err.at("message").get<std::string>().find("transmogrify") != std::string::npos);
    }
    SUBCASE("invalid resolution is a config error") {
        ExperimentConfig cfg = tiny_config("/tmp/runner-badres");
        cfg.grid_n = 3;
        CHECK(run_experiment("validate", cfg) == 2);
    }
}

TEST_CASE("forward pipeline writes a converged outflow") {
    const ExperimentConfig cfg = tiny_config("/tmp/runner-forward");
    REQUIRE(run_experiment("forward", cfg) == 0);

    const json rep = json::parse(slurp(cfg.out_dir + "/forward_report.json"));
    CHECK(rep.at("converged").get<bool>());
    CHECK(rep.at("outflow_norm").get<double>() > 0.0);
    // unit inflow; the coarse test grids overshoot conservation by a few percent
    CHECK(rep.at("outflow_norm").get<double>() < 1.2);
    CHECK(rep.at("orders").get<int>() >= 1);

    const std::string raw = slurp(cfg.out_dir + "/forward_outflow.f64");
    const json man = json::parse(slurp(cfg.out_dir + "/forward_outflow.json"));
    const int count = man.at("directions").get<int>() * man.at("disc_nodes").get<int>();
    CHECK(static_cast<int>(raw.size()) == 8 * count);
}

TEST_CASE("albedo artifacts are byte-identical across reruns") {
    ExperimentConfig cfg = tiny_config("/tmp/runner-albedo-1");
    REQUIRE(run_experiment("albedo", cfg) == 0);
    ExperimentConfig cfg2 = tiny_config("/tmp/runner-albedo-2");
    REQUIRE(run_experiment("albedo", cfg2) == 0);

    CHECK(slurp("/tmp/runner-albedo-1/albedo_report.json") ==
          slurp("/tmp/runner-albedo-2/albedo_report.json"));
    CHECK(slurp("/tmp/runner-albedo-1/albedo_sweep.csv") ==
          slurp("/tmp/runner-albedo-2/albedo_sweep.csv"));

    const json rep = json::parse(slurp("/tmp/runner-albedo-1/albedo_report.json"));
    REQUIRE(rep.at("sweep").size() == 2);
    for (const auto& c : rep.at("mc_cross_check")) CHECK(c.at("z").get<double>() <= 5.0);
    const double total = rep.at("sweep").at(0).at("total").get<double>();
    CHECK(total > 0.5);
    CHECK(total < 1.02);
}

TEST_CASE("reconstruct pipeline writes recovered fields and error tables") {
    const ExperimentConfig cfg = tiny_config("/tmp/runner-recon");
    REQUIRE(run_experiment("reconstruct", cfg) == 0);

    const json rep = json::parse(slurp(cfg.out_dir + "/reconstruct_report.json"));
    CHECK(rep.at("absorption").at("rel_l2").get<double>() < 1.0);
    CHECK(rep.at("kernel_true_attenuation").at("interior_nodes").get<int>() > 0);
    CHECK(exists(cfg.out_dir + "/sigma_recovered.f64"));
    CHECK(exists(cfg.out_dir + "/sinogram.json"));
    CHECK(exists(cfg.out_dir + "/kernel_amplitude_true_sigma.f64"));
    CHECK(exists(cfg.out_dir + "/kernel_amplitude_recovered_sigma.f64"));
}

TEST_CASE("stability micro grid passes and emits one row per parameter cell") {
    ExperimentConfig cfg = tiny_config("/tmp/runner-stability");
    cfg.n_polar = 6;
    cfg.n_azimuth = 12;
    cfg.disc_radial = 12;
    cfg.disc_angular = 16;
    cfg.deltas = {0.1};
    cfg.ps = {1.4};
    cfg.eps_levels = {0.05};
    cfg.etas = {0.4, 0.2};
    cfg.support_levels = 2;
    REQUIRE(run_experiment("stability", cfg) == 0);

    const std::string csv = slurp(cfg.out_dir + "/stability.csv");
    CHECK(csv.find("# config_hash=") == 0);
    CHECK(csv.find("transmission_gap") != std::string::npos);
    CHECK(csv.find("kernel_line") != std::string::npos);
    CHECK(csv.find("field_slope") != std::string::npos);
    CHECK(csv.find("kernel_total_slope") != std::string::npos);
    CHECK(csv.find("support_decay") != std::string::npos);
    CHECK(csv.find("nan") == std::string::npos);
    CHECK(csv.find("inf") == std::string::npos);

    const json rep = json::parse(slurp(cfg.out_dir + "/stability.json"));
    for (const auto& row : rep.at("report").at("rows")) {
        INFO(row.at("name").get<std::string>());
        CHECK(row.at("pass").get<bool>());
    }
}
