#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "albedo/albedo_op.hpp"
#include "albedo/coefficients.hpp"
#include "albedo/errors.hpp"
#include "albedo/rng.hpp"
#include "albedo/xray.hpp"

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

double rel_l2_error(const ScalarField& est, const ScalarField& ref) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < ref.v.size(); ++i) {
        const double d = est.v[i] - ref.v[i];
        num += d * d;
        den += ref.v[i] * ref.v[i];
    }
    return std::sqrt(num / den);
}

}  // namespace

TEST_CASE("ray transform reproduces chord integrals and support") {
    const auto ball = ScalarField::sample(3, 1.0, 161,
                                          [](const Vec3& x) { return norm(x) <= 0.9 ? 1.0 : 0.0; });
    const auto sino = xray_transform(ball, 1, 2, 3, 1.0 / 64.0, kThreads);

    // central ray crosses the full diameter
    CHECK(sino.at(0, 0, 1) == doctest::Approx(1.8).epsilon(1e-2));
    CHECK(sino.at(0, 1, 1) == doctest::Approx(1.8).epsilon(1e-2));
    // rays passing outside the support carry nothing
    CHECK(sino.at(0, 0, 0) == 0.0);
    CHECK(sino.at(0, 0, 2) == 0.0);
}

TEST_CASE("ray transform is even under simultaneous flips") {
    const auto dom = default_domain();
    const auto pair = make_phantom("two-bumps", dom, 41);
    const auto& f = pair.sigma;
    Rng rng(7u);
    for (int trial = 0; trial < 5; ++trial) {
        const double th = kPi * rng.uniform();
        const double s = 0.9 * (2.0 * rng.uniform() - 1.0);
        const double z = 0.5 * (2.0 * rng.uniform() - 1.0);
        const Vec3 e{-std::sin(th), std::cos(th), 0.0};
        const Vec3 d{std::cos(th), std::sin(th), 0.0};
        const Vec3 p = s * e + Vec3{0.0, 0.0, z};
        const Vec3 q = (-s) * e + Vec3{0.0, 0.0, z};
        const double fwd = line_integral(f, p - 3.0 * d, p + 3.0 * d, 1.0 / 64.0);
        const double rev = line_integral(f, q + 3.0 * d, q - 3.0 * d, 1.0 / 64.0);
        // flipping both the offset sign and the direction traverses the same line
        CHECK(fwd == doctest::Approx(rev).epsilon(1e-12));
    }
}

TEST_CASE("filtered back-projection round trip") {
    SUBCASE("zero sinogram inverts to the zero field") {
        const auto sino = Sinogram::zeros(1.0, 9, 12, 9);
        const auto res = fbp_invert(sino, 9, kThreads);
        for (double v : res.field.v) CHECK(v == 0.0);
    }

    SUBCASE("smooth phantom round trip stays within five percent and refines") {
        const auto dom = default_domain();
        const auto coarse_pair = make_phantom("smooth-bump", dom, 41);
        const auto coarse_sino = xray_transform(coarse_pair.sigma, 41, 65, 41, 1.0 / 64.0, kThreads);
        const auto coarse = fbp_invert(coarse_sino, 41, kThreads);
        CHECK(coarse.warnings.empty());
        const double err_coarse = rel_l2_error(coarse.field, coarse_pair.sigma);
        CHECK(err_coarse <= 0.05);

        const auto fine_pair = make_phantom("smooth-bump", dom, 61);
        const auto fine_sino = xray_transform(fine_pair.sigma, 61, 96, 61, 1.0 / 64.0, kThreads);
        const auto fine = fbp_invert(fine_sino, 61, kThreads);
        CHECK(fine.warnings.empty());
        const double err_fine = rel_l2_error(fine.field, fine_pair.sigma);
        CHECK(err_fine <= 0.05);
        CHECK(err_fine < err_coarse);
    }

    SUBCASE("constant ball recovers its interior plateau") {
        const auto ball = ScalarField::sample(
            3, 1.0, 81, [](const Vec3& x) { return norm(x) <= 1.0 ? 1.0 : 0.0; });
        const auto sino = xray_transform(ball, 81, 128, 81, 1.0 / 64.0, kThreads);
        const auto res = fbp_invert(sino, 81, kThreads);
        CHECK(res.warnings.empty());
        double plateau_err = 0.0, jump_err = 0.0;
        for (int k = 0; k < 81; ++k)
            for (int j = 0; j < 81; ++j)
                for (int i = 0; i < 81; ++i) {
                    const double r = norm(res.field.node(i, j, k));
                    const double e = std::abs(res.field.v[res.field.index(i, j, k)] - ball.v[ball.index(i, j, k)]);
                    if (r <= 0.55) plateau_err = std::max(plateau_err, e);
                    else jump_err = std::max(jump_err, e);
                }
        CHECK(plateau_err <= 0.03);
        // ringing concentrates at the jump; it dominates the interior error
        CHECK(jump_err > plateau_err);
    }

    SUBCASE("sparse angles trigger the sampling warning") {
        auto sino = Sinogram::zeros(1.0, 3, 20, 33);
        const auto res = fbp_invert(sino, 3, kThreads);
        REQUIRE(!res.warnings.empty());
        CHECK(res.warnings[0].find("52") != std::string::npos);
    }
}

TEST_CASE("discrete Sobolev norms") {
    SUBCASE("zero field has zero norm") {
        const auto f = ScalarField::zeros(3, 1.0, 17);
        CHECK(sobolev_norm(f, 0.7) == 0.0);
    }

    SUBCASE("order zero matches the grid Riemann sum") {
        const auto dom = default_domain();
        const auto pair = make_phantom("smooth-bump", dom, 33);
        double l2 = 0.0;
        for (double v : pair.sigma.v) l2 += v * v;
        const double h = pair.sigma.h();
        l2 = std::sqrt(l2 * h * h * h);
        CHECK(sobolev_norm(pair.sigma, 0.0) == doctest::Approx(l2).epsilon(1e-10));
    }

    SUBCASE("a single mode carries its closed-form norm") {
        const int p = 32;
        const double L = 4.0, a = 0.7;
        const double xi0[3] = {2.0 * kPi * 3 / L, 2.0 * kPi * 2 / L, 2.0 * kPi * 1 / L};
        std::vector<double> box(static_cast<std::size_t>(p) * p * p);
        for (int k = 0; k < p; ++k)
            for (int j = 0; j < p; ++j)
                for (int i = 0; i < p; ++i)
                    box[(static_cast<std::size_t>(k) * p + j) * p + i] =
                        a * std::cos(xi0[0] * (L * i / p) + xi0[1] * (L * j / p) +
                                     xi0[2] * (L * k / p));
        const auto sp = periodic_spectrum(box, p, L);
        const double xi2 = xi0[0] * xi0[0] + xi0[1] * xi0[1] + xi0[2] * xi0[2];
        for (double s : {-0.5, 0.0, 0.7, 2.0}) {
            const double expect =
                a * std::pow(1.0 + xi2, 0.5 * s) * std::sqrt(0.5 * L * L * L);
            CHECK(sp.norm(s) == doctest::Approx(expect).epsilon(1e-9));
        }
    }
}

TEST_CASE("interpolation inequality margins") {
    const double s_high = 1.5 + 0.51;

    SUBCASE("a single occupied mode saturates the bound") {
        const int p = 16;
        const double L = 4.0;
        std::vector<double> box(static_cast<std::size_t>(p) * p * p);
        for (int k = 0; k < p; ++k)
            for (int j = 0; j < p; ++j)
                for (int i = 0; i < p; ++i)
                    box[(static_cast<std::size_t>(k) * p + j) * p + i] =
                        std::cos(2.0 * kPi * (2.0 * i + 1.0 * j) / p);
        const auto sp = periodic_spectrum(box, p, L);
        for (double s : {-0.5, 0.0, 0.8, s_high})
            CHECK(std::abs(interpolation_check(sp, s, s_high)) <= 1e-9);
    }

    SUBCASE("random fields keep a nonnegative margin") {
        for (std::uint64_t seed = 1; seed <= 20; ++seed) {
            Rng rng(seed);
            auto bumps = make_perturbation_bumps(default_domain(), seed, 0.5);
            const auto f = ScalarField::sample(3, 1.0, 25, [&](const Vec3& x) {
                return bumps.value(x);
            });
            const auto sp = sobolev_spectrum(f);
            for (double s : {-0.5, -0.2, 0.3, 1.0, 1.9})
                CHECK(interpolation_check(sp, s, s_high) >= -1e-9);
        }
    }

    SUBCASE("the lower endpoint is an identity") {
        const auto dom = default_domain();
        const auto pair = make_phantom("smooth-bump", dom, 25);
        CHECK(std::abs(interpolation_check(pair.sigma, -0.5, s_high)) <= 1e-12);
    }

    SUBCASE("orders outside the bracket are rejected") {
        const auto f = ScalarField::zeros(3, 1.0, 9);
        CHECK_THROWS_AS(interpolation_check(f, -0.6, s_high), DomainError);
        CHECK_THROWS_AS(interpolation_check(f, s_high + 0.1, s_high), DomainError);
    }
}

TEST_CASE("sup-norm embedding estimate") {
    const auto probes = make_gaussian_probes(1.0, 33, 5);

    SUBCASE("positive, finite, and nonincreasing in the smoothness excess") {
        double last = std::numeric_limits<double>::infinity();
        for (double rt : {0.3, 0.51, 0.8}) {
            const double c = embedding_constant(probes, rt);
            CHECK(c > 0.0);
            CHECK(std::isfinite(c));
            CHECK(c <= last + 1e-12);
            last = c;
        }
    }

    SUBCASE("a constant field sits on the zero mode") {
        const int p = 8;
        const double L = 4.0, a = 0.3;
        std::vector<double> box(static_cast<std::size_t>(p) * p * p, a);
        const auto sp = periodic_spectrum(box, p, L);
        for (double s : {-0.5, 0.51, 2.0})
            CHECK(sp.norm(s) == doctest::Approx(a * std::sqrt(L * L * L)).epsilon(1e-12));
    }

    SUBCASE("an empty probe family is refused") {
        CHECK_THROWS_AS(embedding_constant({}, 0.51), ConfigError);
    }
}

TEST_CASE("ray data matches narrow-beam transmission logs") {
    // the sup over sampled lines of the transform difference must agree with
    // the sup over matched narrow beams of the transmission log difference
    const auto dom = default_domain();
    const auto pa = make_phantom("smooth-bump", dom, 41);
    const auto pb = make_phantom("smooth-bump", dom, 41, {{"sigma0", 0.7}});

    const int n_ang = 12, n_off = 17;
    const auto sa = xray_transform(pa.sigma, 3, n_ang, n_off, 1.0 / 64.0, kThreads);
    const auto sb = xray_transform(pb.sigma, 3, n_ang, n_off, 1.0 / 64.0, kThreads);

    double sup_ray = 0.0;
    for (std::size_t i = 0; i < sa.values.size(); ++i)
        sup_ray = std::max(sup_ray, std::abs(sa.values[i] - sb.values[i]));

    double sup_beam = 0.0;
    const double eps = 0.02;
    for (int k = 0; k < sa.n_slices; ++k)
        for (int i = 0; i < n_ang; ++i)
            for (int j = 0; j < n_off; ++j) {
                const Vec3 p = sa.ray_point(k, i, j);
                const Vec3 d = sa.ray_direction(i);
                const double ta =
                    ballistic_transmission(pa, p, d, eps, BeamProfile::Bump, dom.R);
                const double tb =
                    ballistic_transmission(pb, p, d, eps, BeamProfile::Bump, dom.R);
                sup_beam = std::max(sup_beam, std::abs(std::log(ta) - std::log(tb)));
            }
    CHECK(sup_beam == doctest::Approx(sup_ray).epsilon(0.01));
}
