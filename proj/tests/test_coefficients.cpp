#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "albedo/coefficients.hpp"
#include "albedo/errors.hpp"
#include "albedo/geometry.hpp"
#include "albedo/rng.hpp"

using namespace albedo;

namespace {
constexpr double kPi = 3.14159265358979323846;

DomainConfig default_domain() {
    DomainConfig d;
    d.n = 3;
    d.R = 2.0;
    d.rho = 1.0;
    return d;
}
}  // namespace

TEST_CASE("scalar field interpolates its own nodes and vanishes outside") {
    auto f = ScalarField::sample(3, 1.0, 21, [](const Vec3& x) { return 1.0 - norm2(x); });
    CHECK(f.value({0, 0, 0}) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(f.value({0.3, -0.1, 0.2}) == doctest::Approx(1.0 - 0.14).epsilon(2e-3));
    CHECK(f.value({1.5, 0, 0}) == 0.0);
    CHECK(f.value({0.9, 0.9, 0.9}) == 0.0); // node outside the support ball
    CHECK(f.sup() == doctest::Approx(1.0));
    CHECK(std::abs(f.min_node()) < 1e-14);
}

TEST_CASE("line integral of a paraboloid profile through the center") {
    auto f = ScalarField::sample(3, 1.0, 41,
                                 [](const Vec3& x) { return std::max(0.0, 1.0 - norm2(x)); });
    const double got = line_integral(f, {-2, 0, 0}, {2, 0, 0}, 1.0 / 64);
    CHECK(got == doctest::Approx(4.0 / 3.0).epsilon(2e-3));

    // offset chord: f restricted to the line y = 0.5 is 0.75 - t^2 on |t| < sqrt(0.75)
    const double off = line_integral(f, {-2, 0.5, 0}, {2, 0.5, 0}, 1.0 / 64);
    const double s = std::sqrt(0.75);
    CHECK(off == doctest::Approx(2.0 * (0.75 * s - s * s * s / 3.0)).epsilon(5e-3));

    // segment that stops inside the support
    const double half = line_integral(f, {0, 0, 0}, {2, 0, 0}, 1.0 / 64);
    CHECK(half == doctest::Approx(2.0 / 3.0).epsilon(2e-3));

    // line missing the support entirely
    CHECK(line_integral(f, {-2, 1.5, 0}, {2, 1.5, 0}, 1.0 / 64) == 0.0);
}

TEST_CASE("phase densities integrate to one over the direction sphere") {
    const DirectionSet ds = DirectionSet::build(3, 24, 48);
    const Vec3 in = normalized({0.2, -0.5, 0.84});
    for (PhaseType t :
         {PhaseType::Isotropic, PhaseType::HenyeyGreenstein, PhaseType::ForwardLobe}) {
        PhaseModel p;
        p.type = t;
        p.g = 0.5;
        double s = 0.0;
        for (int d = 0; d < ds.size(); ++d)
            s += ds.weight[d] * p.density(dot(in, ds.dir[d]), 3);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
    }

    const DirectionSet circle = DirectionSet::build(2, 0, 256);
    for (PhaseType t :
         {PhaseType::Isotropic, PhaseType::HenyeyGreenstein, PhaseType::ForwardLobe}) {
        PhaseModel p;
        p.type = t;
        p.g = 0.4;
        double s = 0.0;
        for (int d = 0; d < circle.size(); ++d)
            s += circle.weight[d] * p.density(dot(circle.dir[0], circle.dir[d]), 2);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("deflection sampling matches the density mean") {
    // mean deflection cosine: 0 (isotropic), g (HG), 1/2 (forward lobe)
    struct Case {
        PhaseModel p;
        double want;
    };
    Case cases[] = {{{PhaseType::Isotropic, 0.0}, 0.0},
                    {{PhaseType::HenyeyGreenstein, 0.5}, 0.5},
                    {{PhaseType::ForwardLobe, 0.0}, 0.5}};
    for (const auto& c : cases) {
        Rng rng(42);
        double mean = 0.0;
        const int N = 200000;
        for (int i = 0; i < N; ++i) mean += c.p.sample_mu(rng.uniform(), 3);
        mean /= N;
        CHECK(std::abs(mean - c.want) < 0.01);
    }
    PhaseModel p;
    CHECK_THROWS_AS(p.sample_mu(0.5, 2), RefusalError);
}

TEST_CASE("separable kernel cross-section equals the amplitude") {
    const DirectionSet ds = DirectionSet::build(3, 16, 32);
    auto amp = ScalarField::sample(3, 1.0, 21,
                                   [](const Vec3& x) { return 0.3 * std::max(0.0, 1.0 - norm2(x)); });
    PhaseModel hg{PhaseType::HenyeyGreenstein, 0.5};
    const ScatteringField k = ScatteringField::separable(amp, hg);

    CHECK(scattering_cross_section(k, {0, 0, 0}, 3, ds) == doctest::Approx(0.3).epsilon(1e-6));
    CHECK(scattering_cross_section(k, {0.5, 0, 0}, 7, ds) ==
          doctest::Approx(0.3 * 0.75).epsilon(1e-3));
    CHECK(sup_scattering_cross_section(k, ds) == doctest::Approx(0.3).epsilon(1e-6));
}

TEST_CASE("tabulated kernel reproduces its generator at cell centers") {
    auto ds = std::make_shared<DirectionSet>(DirectionSet::build(3, 4, 8));
    auto gen = [&](const Vec3& x, int a, int b) {
        return (1.0 + norm2(x)) * (a == b ? 2.0 : 1.0) * 1e-2;
    };
    const ScatteringField k = ScatteringField::tabulate(3, 1.0, 8, ds, gen);
    const double h = 2.0 / 8;
    const Vec3 center{-1.0 + 2.5 * h, -1.0 + 3.5 * h, -1.0 + 4.5 * h};
    CHECK(k.value(center, 2, 2, *ds) == doctest::Approx(gen(center, 2, 2)));
    CHECK(k.value(center, 2, 5, *ds) == doctest::Approx(gen(center, 2, 5)));
    CHECK(k.value({1.5, 0, 0}, 0, 0, *ds) == 0.0);
    // corner cells sit outside the support ball and are zeroed
    CHECK(k.value({-1.0 + 0.5 * h, -1.0 + 0.5 * h, -1.0 + 0.5 * h}, 0, 0, *ds) == 0.0);
}

TEST_CASE("admissibility flags negative coefficients") {
    const DirectionSet ds = DirectionSet::build(3, 4, 8);
    CoefficientPair pair = make_phantom("ball", default_domain(), 15);
    CHECK(check_admissible(pair, ds).ok);

    pair.sigma.v[pair.sigma.index(7, 7, 7)] = -0.5;
    const auto rep = check_admissible(pair, ds);
    CHECK_FALSE(rep.ok);
    REQUIRE(rep.violations.size() == 1);
}

TEST_CASE("subcriticality certificates") {
    const DomainConfig dom = default_domain();
    const DirectionSet ds = DirectionSet::build(3, 8, 16);

    SUBCASE("absorption-dominated ball phantom") {
        const CoefficientPair pair = make_phantom("ball", dom, 15);
        const auto rep = check_subcritical(pair, dom, ds);
        CHECK(rep.subcritical);
        CHECK(rep.absorption_dominated);
        CHECK(rep.certificate == "absorption-dominated");
        // 1 - exp(-2 R sup sigma_p) with sup sigma_p = 0.3
        CHECK(rep.contraction == doctest::Approx(0.6988057880877978).epsilon(1e-9));
    }

    SUBCASE("pure scattering with a small product") {
        CoefficientPair pair = make_phantom("ball", dom, 15, {{"sigma0", 0.0}, {"c0", 0.2}});
        const auto rep = check_subcritical(pair, dom, ds);
        CHECK(rep.subcritical);
        CHECK_FALSE(rep.absorption_dominated);
        CHECK(rep.certificate == "small-product");
        CHECK(rep.contraction == doctest::Approx(0.8).epsilon(1e-9));
    }

    SUBCASE("neither certificate applies") {
        CoefficientPair pair = make_phantom("ball", dom, 15, {{"sigma0", 0.0}, {"c0", 0.3}});
        const auto rep = check_subcritical(pair, dom, ds);
        CHECK_FALSE(rep.subcritical);
        CHECK(rep.certificate == "none");
    }

    SUBCASE("inadmissible input is refused") {
        CoefficientPair pair = make_phantom("ball", dom, 15);
        pair.sigma.v[pair.sigma.index(7, 7, 7)] = -0.5;
        CHECK_THROWS_AS(check_subcritical(pair, dom, ds), RefusalError);
    }
}

TEST_CASE("phantom families") {
    const DomainConfig dom = default_domain();
    CHECK_THROWS_AS(make_phantom("nope", dom, 15), ConfigError);

    const CoefficientPair smooth = make_phantom("smooth-bump", dom, 21);
    CHECK(smooth.sigma.value({0, 0, 0}) == doctest::Approx(1.0));
    CHECK(smooth.sigma.value({1.0, 0, 0}) == 0.0);
    CHECK(smooth.sigma.value({0.99, 0, 0}) < 0.01); // grid-limited edge decay

    const CoefficientPair two = make_phantom("two-bumps", dom, 31);
    CHECK(two.sigma.value({0.45, 0, 0}) > 0.98);
    CHECK(two.sigma.value({-0.45, 0, 0}) > 0.98);
    CHECK(two.sigma.value({0, 0, 0}) < 0.1);

    const CoefficientPair an = make_phantom("anisotropic", dom, 15);
    CHECK_FALSE(an.kappa.tabulated);
    CHECK(an.kappa.phase.type == PhaseType::HenyeyGreenstein);
    const CoefficientPair lobe = make_phantom("anisotropic", dom, 15, {{"forward_lobe", 1.0}});
    CHECK(lobe.kappa.phase.type == PhaseType::ForwardLobe);
}

TEST_CASE("perturbations are seeded and ball-supported") {
    const DomainConfig dom = default_domain();
    const ScalarField a = make_perturbation(dom, 21, 11, 0.05);
    const ScalarField b = make_perturbation(dom, 21, 11, 0.05);
    const ScalarField c = make_perturbation(dom, 21, 12, 0.05);
    CHECK(a.v == b.v);
    CHECK(a.v != c.v);
    CHECK(a.sup() <= 0.15 + 1e-12);
    CHECK(a.sup() > 0.0);
    for (int i = 0; i < 21; ++i)
        CHECK(a.v[a.index(i, 0, 0)] == 0.0); // edge of the cube is outside the ball
}
