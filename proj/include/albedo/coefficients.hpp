#pragma once

/**
 * Absorption and scattering coefficients.
 *
 * Scalar fields (absorption, scattering amplitude) are node-centered grids
 * on [-rho, rho]^n with multilinear interpolation, zero outside the grid and
 * with every node outside the closed support ball forced to zero at
 * construction. The scattering kernel is either separable, amplitude times a
 * normalized phase function of the deflection cosine, or a coarse full
 * tabulation in (cell, incoming node, outgoing node).
 */

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "albedo/geometry.hpp"
#include "albedo/vec.hpp"

namespace albedo {

// Reference C-infinity profile: 1 at the center, identically 0 for |t| >= 1.
// Shared by the phantom families, perturbation bumps and beam mollifiers.
double bump_profile(double t);

struct ScalarField {
    int n = 3;
    double rho = 1.0;
    int npts = 0;               // nodes per axis
    std::vector<double> v;      // x-major, then y, then z

    double h() const { return 2.0 * rho / (npts - 1); }
    std::size_t index(int i, int j, int k) const {
        return (static_cast<std::size_t>(k) * npts + j) * npts + i;
    }
    Vec3 node(int i, int j, int k) const {
        return {-rho + i * h(), -rho + j * h(), n == 3 ? -rho + k * h() : 0.0};
    }

    static ScalarField zeros(int n, double rho, int npts);

    // Samples f at the nodes, then zeroes nodes outside the support ball.
    template <typename Fn>
    static ScalarField sample(int n, double rho, int npts, Fn&& f) {
        ScalarField s = zeros(n, rho, npts);
        const int nz = s.n == 3 ? npts : 1;
        for (int k = 0; k < nz; ++k)
            for (int j = 0; j < npts; ++j)
                for (int i = 0; i < npts; ++i) {
                    const Vec3 x = s.node(i, j, k);
                    s.v[s.index(i, j, k)] = norm(x) <= rho ? f(x) : 0.0;
                }
        return s;
    }

    double value(const Vec3& x) const;  // multilinear, 0 outside the grid
    double sup() const;                 // max over nodes of |value|
    double min_node() const;

    ScalarField& operator+=(const ScalarField& o);
    ScalarField scaled_add(double s, const ScalarField& o) const; // this + s * o
};

// Composite-Simpson line integral of the field between two points; the
// segment is clipped to the support ball first, step <= max_step.
double line_integral(const ScalarField& f, const Vec3& p0, const Vec3& p1, double max_step);

enum class PhaseType { Isotropic, HenyeyGreenstein, ForwardLobe };

// Phase function of the deflection cosine, normalized to unit integral over
// the direction sphere (circle for n = 2).
struct PhaseModel {
    PhaseType type = PhaseType::Isotropic;
    double g = 0.0; // anisotropy parameter (HenyeyGreenstein)

    double density(double mu, int n) const;
    // inverse-CDF sample of the deflection cosine (n = 3)
    double sample_mu(double u, int n) const;
};

struct ScatteringField {
    bool tabulated = false;

    // separable form
    ScalarField amplitude;
    PhaseModel phase;

    // tabulated form: nearest-cell in space, node-indexed in both directions
    int table_cells = 0;                  // cells per axis
    std::vector<double> table;            // [cell][v_in][v_out]
    std::shared_ptr<const DirectionSet> table_dirs;

    double value(const Vec3& x, int d_in, int d_out, const DirectionSet& dirs) const;

    static ScatteringField separable(ScalarField amplitude, PhaseModel phase);
    template <typename Fn>
    static ScatteringField tabulate(int n, double rho, int cells,
                                    std::shared_ptr<const DirectionSet> dirs, Fn&& f) {
        ScatteringField k;
        k.tabulated = true;
        k.amplitude = ScalarField::zeros(n, rho, 2);
        k.table_cells = cells;
        k.table_dirs = std::move(dirs);
        const int m = k.table_dirs->size();
        const int nz = n == 3 ? cells : 1;
        k.table.assign(static_cast<std::size_t>(cells) * cells * nz * m * m, 0.0);
        const double h = 2.0 * rho / cells;
        std::size_t idx = 0;
        for (int kz = 0; kz < nz; ++kz)
            for (int j = 0; j < cells; ++j)
                for (int i = 0; i < cells; ++i) {
                    const Vec3 x{-rho + (i + 0.5) * h, -rho + (j + 0.5) * h,
                                 n == 3 ? -rho + (kz + 0.5) * h : 0.0};
                    const bool in = norm(x) <= rho;
                    for (int a = 0; a < m; ++a)
                        for (int b = 0; b < m; ++b)
                            k.table[idx++] = in ? f(x, a, b) : 0.0;
                }
        return k;
    }

    int cell_of(const Vec3& x) const; // -1 outside
};

struct CoefficientPair {
    ScalarField sigma;
    ScatteringField kappa;

    // Optional closed forms for the same coefficients. Grid fields remain the
    // ground truth for lattice operators; path quadratures (beam components,
    // flight weights) prefer these to avoid grid-edge bias. Line closures return
    // the integral over the full segment between their two arguments.
    std::function<double(const Vec3&)> sigma_exact;
    std::function<double(const Vec3&, const Vec3&)> sigma_line_exact;
    std::function<double(const Vec3&)> scatter_amp_exact;
    std::function<double(const Vec3&, const Vec3&)> scatter_amp_line_exact;
};

// Exact-first accessors: closed form when present, grid otherwise. step
// bounds the quadrature step of the grid fallback.
double absorption_point(const CoefficientPair& pair, const Vec3& x);
double absorption_line(const CoefficientPair& pair, const Vec3& p0, const Vec3& p1,
                       double step);
double scatter_amp_point(const CoefficientPair& pair, const Vec3& x);
double scatter_amp_line(const CoefficientPair& pair, const Vec3& p0, const Vec3& p1,
                        double step);

// Total scattering cross-section: the kernel integrated over outgoing
// directions with the given quadrature.
double scattering_cross_section(const ScatteringField& k, const Vec3& x, int d_in,
                                const DirectionSet& dirs);
double sup_scattering_cross_section(const ScatteringField& k, const DirectionSet& dirs);

struct AdmissibilityReport {
    bool ok = true;
    double sup_sigma = 0.0;
    double sup_sigma_p = 0.0;
    std::vector<std::string> violations;
};

AdmissibilityReport check_admissible(const CoefficientPair& pair, const DirectionSet& dirs);

struct SubcriticalityReport {
    bool small_product = false;   // 2 R sup(sigma_p) < 1
    bool absorption_dominated = false; // sigma - sigma_p >= 0 everywhere
    bool subcritical = false;
    double contraction = 0.0;     // valid bound only when subcritical
    double product = 0.0;         // 2 R sup(sigma_p)
    std::string certificate;      // which condition certified the bound
};

SubcriticalityReport check_subcritical(const CoefficientPair& pair, const DomainConfig& dom,
                                       const DirectionSet& dirs);

// Named phantom families. Parameters not present in `params` take defaults.
CoefficientPair make_phantom(const std::string& name, const DomainConfig& dom, int grid_n,
                             const std::map<std::string, double>& params = {});

// Seeded sum of smooth interior bumps, for stability experiments. Kept in
// closed form so perturbed coefficients retain exact line integrals.
struct BumpSet {
    struct Bump {
        Vec3 c;
        double r = 0.0, a = 0.0;
    };
    std::vector<Bump> bumps;

    double value(const Vec3& x) const;
    double line(const Vec3& p0, const Vec3& p1) const;
    ScalarField sample(int n, double rho, int npts) const;
};

BumpSet make_perturbation_bumps(const DomainConfig& dom, std::uint64_t seed, double amp = 1.0);
ScalarField make_perturbation(const DomainConfig& dom, int grid_n, std::uint64_t seed,
                              double amp = 1.0);

}  // namespace albedo
