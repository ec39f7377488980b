#pragma once

/**
 * Grid transport operators and the scattering-series solver.
 *
 * Phase-space fields live on a cubic lattice that covers the coefficient
 * support ball times the direction set. The solver iterates collision
 * generations: extend the inflow along characteristics, form the scattering
 * source, stream it back through the domain, repeat. Per-generation masses,
 * outflow traces and the geometric tail bound come from ray sweeps over the
 * chord coordinates, which also see the constant continuation of the flux
 * between the support ball and the faces.
 *
 * Sign convention: the streaming inverse carries the minus sign of the
 * underlying operator, so it maps nonnegative sources to nonpositive fields.
 * The iteration uses the physically positive flux (its negative) internally.
 */

#include <functional>
#include <memory>
#include <vector>

#include "albedo/coefficients.hpp"
#include "albedo/geometry.hpp"

namespace albedo {

struct Lattice {
    int n = 3;
    double L = 1.1;  // half-extent; must exceed the coefficient radius
    int npts = 25;   // nodes per axis

    double h() const { return 2.0 * L / (npts - 1); }
    std::size_t size() const {
        return static_cast<std::size_t>(npts) * npts * (n == 3 ? npts : 1);
    }
    std::size_t index(int i, int j, int k) const {
        return (static_cast<std::size_t>(k) * npts + j) * npts + i;
    }
    Vec3 node(int i, int j, int k) const {
        return {-L + i * h(), -L + j * h(), n == 3 ? -L + k * h() : 0.0};
    }
    static Lattice covering(const DomainConfig& dom, int npts, double margin = 1.1);
};

struct PhaseSpaceField {
    Lattice lat;
    std::shared_ptr<const DirectionSet> dirs;
    std::vector<double> v;  // [d * lat.size() + node]

    double& at(int d, std::size_t node) { return v[static_cast<std::size_t>(d) * lat.size() + node]; }
    double at(int d, std::size_t node) const {
        return v[static_cast<std::size_t>(d) * lat.size() + node];
    }
    double value(int d, const Vec3& x) const;  // multilinear in space, 0 outside

    static PhaseSpaceField zeros(const Lattice& lat, std::shared_ptr<const DirectionSet> dirs);
};

// Quadrature geometry for ray sweeps (norms, traces, volume integrals).
struct EvalGeometry {
    std::shared_ptr<const DirectionSet> dirs;
    std::shared_ptr<const DiscRule> disc;
    int n_axial = 64;
    double march_step = 1.0 / 16.0;  // flux marching step
    double sigma_step = 1.0 / 32.0;  // absorption line-integral step
};

// Attenuated extension of inflow data along characteristics, sampled on the
// lattice. Inflow data must be resolvable by the lattice spacing; narrow
// beams take the dedicated semi-analytic path instead.
PhaseSpaceField extend_inflow(const BoundaryDistribution& f_minus, const ScalarField& sigma,
                              const Lattice& lat, double R, double sigma_step, int threads);

// Scattering integral over incoming directions at every lattice node.
PhaseSpaceField scattering_source(const PhaseSpaceField& f, const ScatteringField& kappa,
                                  int threads);

// Streaming inverse applied to a lattice source supported in the coefficient
// ball. Output at (x, v) is minus the attenuated backward line integral.
PhaseSpaceField streaming_inverse(const PhaseSpaceField& source, const ScalarField& sigma,
                                  double R, double march_step, int threads);

// Single-point version without any support clipping; integrates the full
// backward characteristic to the inflow face.
double streaming_inverse_point(const std::function<double(const Vec3&)>& g,
                               const ScalarField& sigma, const Vec3& x, const Vec3& vhat,
                               double R, double step);

// One collision generation: stream the scattering source of f.
PhaseSpaceField collision_step(const PhaseSpaceField& f, const CoefficientPair& pair,
                               double R, double march_step, int threads);

struct SweepResult {
    double norm = 0.0;           // speed-weighted L1 mass over the domain
    BoundaryDistribution trace;  // outflow-face values
};

// Mass and outflow trace of the extended inflow term.
SweepResult sweep_inflow(const BoundaryDistribution& f_minus, const ScalarField& sigma,
                         const DomainConfig& dom, const EvalGeometry& geom, int threads);

// Mass and outflow trace of the positive flux streamed from a lattice source
// (the negative of the streaming inverse).
SweepResult sweep_streamed(const PhaseSpaceField& source, const ScalarField& sigma,
                           const DomainConfig& dom, const EvalGeometry& geom, int threads);

// Chord-coordinate L1 norm of a lattice field (treated as compactly
// supported; no face continuation).
double field_norm_O(const PhaseSpaceField& f, const DomainConfig& dom,
                    const EvalGeometry& geom, int threads);

struct NeumannReport {
    int orders = 0;
    std::vector<double> term_norms;
    double contraction = 0.0;
    double tail_bound = 0.0;
    bool converged = false;
};

struct TransportSolution {
    PhaseSpaceField total;                      // converged field on the lattice
    BoundaryDistribution outflow;               // total outflow trace
    std::vector<BoundaryDistribution> order_traces;  // per collision order
    NeumannReport report;
};

// Collision-series solve of the stationary problem with the given inflow.
// Refuses when no subcriticality certificate holds; throws ToleranceError
// when the geometric tail bound fails to reach tol within max_orders.
TransportSolution solve_source_iteration(const BoundaryDistribution& f_minus,
                                         const CoefficientPair& pair, const DomainConfig& dom,
                                         const Lattice& lat, const EvalGeometry& geom,
                                         double tol, int max_orders, int threads,
                                         bool keep_order_traces = true);

// Absorbed mass of a converged field: integral of (sigma - sigma_p) f.
double absorbed_mass(const PhaseSpaceField& f, const CoefficientPair& pair, int threads);

}  // namespace albedo
