#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "albedo/coefficients.hpp"
#include "albedo/errors.hpp"
#include "albedo/inversion.hpp"

using namespace albedo;

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr int kThreads = 4;

DomainConfig default_domain() {
    DomainConfig d;
    d.n = 3;
    d.R = 2.0;
    d.rho = 1.0;
    return d;
}

AlbedoConfig small_config(int n_polar = 6, int n_azimuth = 12, int lat_npts = 21) {
    AlbedoConfig cfg;
    cfg.dom = default_domain();
    cfg.dirs = std::make_shared<DirectionSet>(DirectionSet::build(3, n_polar, n_azimuth));
    cfg.disc = std::make_shared<DiscRule>(DiscRule::build(3, cfg.dom.R, 12, 16));
    cfg.lat.npts = lat_npts;
    cfg.threads = kThreads;
    return cfg;
}

BeamSpec beam_at(int dir_index, double a0) {
    BeamSpec b;
    b.dir_index = dir_index;
    b.a0 = a0;
    return b;
}

}  // namespace

TEST_CASE("mass extrapolation follows the measured order") {
    SUBCASE("a clean first-order sequence lands on the limit") {
        const auto ex = extrapolate_mass(0.86, 0.78, 0.74);
        CHECK(ex.extrapolated);
        CHECK(ex.rate == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(ex.mass == doctest::Approx(0.70).epsilon(1e-12));
    }
    SUBCASE("a clean second-order sequence lands on the limit") {
        // m = 0.5 + eps^2 at eps = 4, 2, 1 units
        const auto ex = extrapolate_mass(16.5, 4.5, 1.5);
        CHECK(ex.extrapolated);
        CHECK(ex.rate == doctest::Approx(2.0).epsilon(1e-12));
        CHECK(ex.mass == doctest::Approx(0.5).epsilon(1e-12));
    }
    SUBCASE("converged measurements pass through") {
        const auto ex = extrapolate_mass(0.3, 0.3, 0.3);
        CHECK(!ex.extrapolated);
        CHECK(ex.mass == 0.3);
    }
    SUBCASE("oscillating differences fall back to the finest width") {
        const auto ex = extrapolate_mass(0.5, 0.6, 0.55);
        CHECK(!ex.extrapolated);
        CHECK(ex.mass == 0.55);
    }
    SUBCASE("an aggressive sequence can extrapolate past zero") {
        CHECK(extrapolate_mass(0.5, 0.2, 0.05).mass < 0.0);
    }
}

TEST_CASE("ballistic sweep inversion") {
    const auto dom = default_domain();

    SUBCASE("vacuum gives the zero sinogram with no exclusions") {
        const auto vac = make_phantom("zero", dom, 9);
        BallisticSweepOptions opt;
        opt.threads = kThreads;
        const auto rec = recover_line_integrals(vac, dom, 3, 6, 7, opt);
        CHECK(rec.flagged.empty());
        for (double v : rec.sino.values) CHECK(std::abs(v) <= 1e-3);
    }

    SUBCASE("half-strength ball gives the diameter integral on the central ray") {
        const auto ball = make_phantom("ball", dom, 21, {{"sigma0", 0.5}});
        BallisticSweepOptions opt;
        opt.threads = kThreads;
        const auto rec = recover_line_integrals(ball, dom, 1, 2, 3, opt);
        CHECK(rec.flagged.empty());
        CHECK(rec.sino.at(0, 0, 1) == doctest::Approx(1.0).epsilon(0.01));
        CHECK(rec.sino.at(0, 1, 1) == doctest::Approx(1.0).epsilon(0.01));
    }

    SUBCASE("extrapolation beats the finest raw width on a smooth phantom") {
        const auto pair = make_phantom("smooth-bump", dom, 25);
        BallisticSweepOptions opt;
        opt.threads = kThreads;
        const auto rec = recover_line_integrals(pair, dom, 1, 8, 9, opt);
        REQUIRE(rec.flagged.empty());
        CHECK(!rec.rates.empty());
        double err_ext = 0.0, err_raw = 0.0;
        for (int i = 0; i < 8; ++i) {
            const Vec3 d = rec.sino.ray_direction(i);
            for (int j = 0; j < 9; ++j) {
                const Vec3 p = rec.sino.ray_point(0, i, j);
                const double exact = absorption_line(pair, p - 3.0 * d, p + 3.0 * d, 1.0 / 32.0);
                const double raw = -std::log(ballistic_transmission(
                    pair, p, d, opt.widths[2], opt.profile, dom.R));
                err_ext += std::abs(rec.sino.at(0, i, j) - exact);
                err_raw += std::abs(raw - exact);
            }
        }
        CHECK(err_ext < err_raw);
    }
}

TEST_CASE("absorption recovery end to end") {
    const auto dom = default_domain();

    SUBCASE("zero phantom recovers the zero field") {
        const auto vac = make_phantom("zero", dom, 9);
        BallisticSweepOptions opt;
        opt.threads = kThreads;
        const auto rays = recover_line_integrals(vac, dom, 9, 15, 9, opt);
        const auto rec = recover_sigma(rays.sino, &vac.sigma, kThreads);
        CHECK(rec.warnings.empty());
        CHECK(rec.has_truth);
        CHECK(rec.err_sup <= 1e-3);
    }

    SUBCASE("smooth phantom stays within seven percent end to end") {
        const auto pair = make_phantom("smooth-bump", dom, 41);
        BallisticSweepOptions opt;
        opt.threads = kThreads;
        const auto rays = recover_line_integrals(pair, dom, 41, 65, 41, opt);
        REQUIRE(rays.flagged.empty());
        const auto rec = recover_sigma(rays.sino, &pair.sigma, kThreads);
        CHECK(rec.warnings.empty());
        CHECK(rec.err_l2 <= 0.07);
        CHECK(rec.err_hneg <= 0.07);
        CHECK(rec.err_sup > 0.0);
    }

    SUBCASE("ball phantom recovers its plateau away from the jump") {
        const auto pair = make_phantom("ball", dom, 61);
        BallisticSweepOptions opt;
        opt.threads = kThreads;
        const auto rays = recover_line_integrals(pair, dom, 61, 96, 61, opt);
        const auto rec = recover_sigma(rays.sino, &pair.sigma, kThreads);
        double plateau_err = 0.0;
        for (int k = 0; k < 61; ++k)
            for (int j = 0; j < 61; ++j)
                for (int i = 0; i < 61; ++i)
                    if (norm(rec.field.node(i, j, k)) <= 0.55)
                        plateau_err = std::max(
                            plateau_err,
                            std::abs(rec.field.v[rec.field.index(i, j, k)] - 1.0));
        CHECK(plateau_err <= 0.05);
    }
}

TEST_CASE("kernel recovery on broken rays") {
    const double iso = 1.0 / (4.0 * kPi);

    SUBCASE("no scattering recovers the zero kernel") {
        auto cfg = small_config();
        const auto pair = make_phantom("smooth-bump", cfg.dom, 25, {{"c0", 0.0}});
        const auto est = make_phantom("zero", cfg.dom, 9);
        const auto rec = recover_k({beam_at(2, 0.0)}, pair, est, cfg);
        for (const auto& s : rec.samples)
            if (s.accepted) CHECK(std::abs(s.value) <= 1e-14);
        CHECK(rec.amplitude.sup() <= 1e-13);
    }

    SUBCASE("transparent isotropic medium recovers the phase level") {
        auto cfg = small_config();
        const auto pair = make_phantom("ball", cfg.dom, 21, {{"sigma0", 0.0}, {"c0", 0.3}});
        const auto est = make_phantom("zero", cfg.dom, 9);
        KernelRecoveryOptions opt;
        opt.vertex_samples = 7;
        opt.grid_npts = 15;
        const auto rec = recover_k({beam_at(2, 0.0), beam_at(7, 0.3)}, pair, est, cfg, opt);
        CHECK(rec.rejected_parallel > 0);
        CHECK(rec.rejected_opacity == 0);
        int interior = 0;
        for (const auto& s : rec.samples) {
            if (!s.accepted || norm(s.vertex) > 0.7) continue;
            ++interior;
            CHECK(s.value == doctest::Approx(0.3 * iso).epsilon(0.03));
        }
        CHECK(interior > 50);
        // the assembled grid reads the separable amplitude back
        for (int k = 0; k < 15; ++k)
            for (int j = 0; j < 15; ++j)
                for (int i = 0; i < 15; ++i) {
                    const auto idx = rec.amplitude.index(i, j, k);
                    if (rec.amplitude.v[idx] == 0.0) continue;
                    if (norm(rec.amplitude.node(i, j, k)) > 0.6) continue;
                    CHECK(rec.amplitude.v[idx] == doctest::Approx(0.3).epsilon(0.05));
                }
    }

    SUBCASE("attenuation divides out with the true absorption supplied") {
        auto cfg = small_config(5, 10);
        const auto pair = make_phantom("ball", cfg.dom, 21, {{"sigma0", 1.0}, {"c0", 0.3}});
        KernelRecoveryOptions opt;
        opt.vertex_samples = 7;
        const auto rec = recover_k({beam_at(2, 0.0)}, pair, pair, cfg, opt);
        int interior = 0;
        for (const auto& s : rec.samples) {
            if (!s.accepted || norm(s.vertex) > 0.7) continue;
            ++interior;
            CHECK(s.value == doctest::Approx(0.3 * iso).epsilon(0.05));
        }
        CHECK(interior > 30);
    }

    SUBCASE("division by the true attenuation isolates quadrature error") {
        auto cfg = small_config(5, 10);
        const auto pair = make_phantom("smooth-bump", cfg.dom, 25);
        KernelRecoveryOptions opt;
        opt.vertex_samples = 7;
        const auto rec = recover_k({beam_at(3, 0.2)}, pair, pair, cfg, opt);
        for (const auto& s : rec.samples) {
            if (!s.accepted || norm(s.vertex) > 0.6) continue;
            const double truth = scatter_amp_point(pair, s.vertex) * iso;
            CHECK(s.value == doctest::Approx(truth).epsilon(0.025));
        }
    }

    SUBCASE("kernel error grows at most linearly in the absorption error") {
        auto cfg = small_config(5, 10);
        const auto pair = make_phantom("smooth-bump", cfg.dom, 25);
        KernelRecoveryOptions opt;
        opt.vertex_samples = 5;
        auto l1_err = [&](double scale) {
            const auto est = make_phantom("smooth-bump", cfg.dom, 25, {{"sigma0", scale}});
            const auto rec = recover_k({beam_at(3, 0.2)}, pair, est, cfg, opt);
            double acc = 0.0;
            long cnt = 0;
            for (const auto& s : rec.samples) {
                if (!s.accepted || norm(s.vertex) > 0.6) continue;
                acc += std::abs(s.value - scatter_amp_point(pair, s.vertex) * iso);
                ++cnt;
            }
            REQUIRE(cnt > 0);
            return acc / static_cast<double>(cnt);
        };
        const double e0 = l1_err(1.0);
        const double e1 = l1_err(1.05);
        const double e2 = l1_err(1.10);
        CHECK(e1 > e0);
        CHECK(e2 <= 2.2 * e1 + 1e-9);
    }

    SUBCASE("opaque vertices are rejected and reported") {
        auto cfg = small_config(5, 10);
        const auto pair = make_phantom("ball", cfg.dom, 21, {{"sigma0", 8.0}, {"c0", 0.3}});
        KernelRecoveryOptions opt;
        opt.vertex_samples = 5;
        const auto rec = recover_k({beam_at(2, 0.0)}, pair, pair, cfg, opt);
        CHECK(rec.rejected_opacity > 0);
        int accepted = 0;
        for (const auto& s : rec.samples) accepted += s.accepted ? 1 : 0;
        CHECK(accepted > 0);
        const auto csv = rec.rejection_csv();
        CHECK(csv.find("beam,dir,x,y,z,mu,attenuation,reason") != std::string::npos);
        CHECK(csv.find("opaque") != std::string::npos);
        CHECK(csv.find("parallel") != std::string::npos);
    }
}
