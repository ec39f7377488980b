#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "albedo/albedo_op.hpp"
#include "albedo/coefficients.hpp"

namespace albedo {

// Batch experiment driver. One JSON config describes the domain, the
// coefficient pair, the beam sweep, and the parameter grids; each subcommand
// is a pipeline over that shared state. Artifacts embed the config hash,
// seed, and version so reruns are verifiably identical.

struct PhantomSpec {
    std::string name = "smooth-bump";
    std::map<std::string, double> params;
};

struct ExperimentConfig {
    DomainConfig dom;

    int grid_n = 33;
    int n_polar = 6, n_azimuth = 12;
    int disc_radial = 12, disc_angular = 16;
    int lat_npts = 21;
    double march_step = 1.0 / 16.0;
    double sigma_step = 1.0 / 32.0;

    PhantomSpec phantom_a;
    PhantomSpec phantom_b;        // defaults to phantom_a
    double kappa_scale_b = 1.0;   // contrast knob applied to the second pair

    int beam_dir = 0;
    double beam_eps = 0.05;
    std::vector<double> beam_offsets{0.0, 0.3, 0.6};

    // stability grids
    std::vector<double> deltas{0.05, 0.1};
    std::vector<double> ps{1.2, 1.4};
    std::vector<double> eps_levels{0.08, 0.04, 0.02};
    std::vector<double> etas{0.4, 0.2, 0.1, 0.05};
    double r_tilde = 0.51;
    double class_bound = 500.0;
    int sign_m = 64;
    int window_l0 = 1;
    int support_levels = 4;

    // reconstruction resolutions
    int recon_slices = 9, recon_angles = 48, recon_offsets = 65, recon_grid = 21;

    double tol = 1e-3;
    int max_orders = 80;
    bool multiple_enabled = true;

    long mc_particles = 1000000;
    std::uint64_t seed = 20240801;
    int threads = 0;
    std::string out_dir = "out";

    // Parses and schema-checks a JSON experiment file; unknown keys and
    // malformed values are named in the error.
    static ExperimentConfig from_json_text(const std::string& text);

    // Stable serialization used for the provenance hash.
    std::string canonical_json() const;

    void validate() const;
    AlbedoConfig albedo_config() const;
    CoefficientPair build_pair_a() const;
    CoefficientPair build_pair_b() const;
    std::vector<BeamSpec> sweep() const;
    BeamSpec central_beam() const;
};

// Runs one pipeline end to end and writes its artifacts under out_dir.
// Returns the process exit code: 0 success, 2 refusal (precondition), 3
// tolerance failure. Refusals and failures leave a machine-readable
// error.json in the output directory.
int run_experiment(const std::string& subcommand, const ExperimentConfig& cfg);

}  // namespace albedo
