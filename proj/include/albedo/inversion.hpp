#pragma once

/**
 * Reconstruction pipelines.
 *
 * Absorption is recovered from narrow-beam transmission sweeps: masses are
 * measured at three beam widths, extrapolated to the zero-width limit at the
 * measured convergence rate, and logged into a sinogram that feeds the
 * filtered back-projection stage. The scattering kernel is recovered from
 * single-scatter exit traces: integrating the trace across the projected
 * beam axis collapses the mollifier, and dividing out the two-segment
 * attenuation leaves the kernel value at the scattering vertex.
 */

#include <array>
#include <string>
#include <vector>

#include "albedo/albedo_op.hpp"
#include "albedo/coefficients.hpp"
#include "albedo/xray.hpp"

namespace albedo {

struct ExtrapolatedMass {
    double mass = 0.0;
    double rate = 0.0;        // measured convergence order, meaningful when used
    bool extrapolated = false;
};

// Three-width limit of a beam-transmission measurement: widths halve twice,
// the observed order sets the correction. Falls back to the finest width when
// the differences cannot support a rate estimate.
ExtrapolatedMass extrapolate_mass(double coarse, double mid, double fine);

struct BallisticSweepOptions {
    std::array<double, 3> widths = {0.08, 0.04, 0.02};  // coarse to fine
    BeamProfile profile = BeamProfile::Bump;
    int cross_radial = 5;
    int cross_angular = 8;
    double sigma_step = 1.0 / 32.0;
    int threads = 0;
};

struct RayRecovery {
    Sinogram sino;
    std::vector<std::array<int, 3>> flagged;  // excluded rays: slice, angle, offset
    std::vector<double> rates;                // measured orders on extrapolated rays
    std::string report() const;
};

// Sweeps narrow beams over the slice geometry and inverts transmission to
// line integrals. Rays whose extrapolated mass is nonpositive are excluded
// and listed; their sinogram entries stay zero.
RayRecovery recover_line_integrals(const CoefficientPair& pair, const DomainConfig& dom,
                                   int n_slices, int n_angles, int n_offsets,
                                   const BallisticSweepOptions& opt = {});

struct SigmaRecovery {
    ScalarField field;
    std::vector<std::string> warnings;
    bool has_truth = false;
    double err_l2 = 0.0;    // relative, against the supplied truth
    double err_hneg = 0.0;  // relative, smoothness order -1/2
    double err_sup = 0.0;   // absolute
};

// Back-projects a recovered sinogram onto the matching grid; when the true
// field is supplied the error report is filled in.
SigmaRecovery recover_sigma(const Sinogram& sino, const ScalarField* truth = nullptr,
                            int threads = 0);

// Absorption-only coefficient wrapper, for attenuation factors computed from
// a field estimate.
CoefficientPair make_absorption_only(ScalarField sigma);

struct BrokenRaySample {
    int beam = 0;
    int dir = 0;
    Vec3 vertex;
    double mu = 0.0;           // deflection cosine at the vertex
    double attenuation = 0.0;  // two-segment factor divided out
    double value = 0.0;        // recovered kernel value
    bool accepted = false;
    std::string reason;        // empty when accepted
};

struct KernelRecoveryOptions {
    int vertex_samples = 9;      // vertices per beam chord, midpoint placement
    int transverse_nodes = 16;   // quadrature across the projected beam band
    double parallel_cut = 0.05;  // minimum sine between exit and beam axis
    double min_attenuation = 1e-6;
    int grid_npts = 21;
};

struct KernelRecovery {
    std::vector<BrokenRaySample> samples;
    ScalarField amplitude;  // direction-averaged kernel times the sphere area
    int rejected_parallel = 0;
    int rejected_opacity = 0;
    std::string rejection_csv() const;
};

// Recovers kernel values on broken rays from measured single-scatter traces:
// one vertex per axis sample, one exit direction per node outside the
// parallel cut. The attenuation divisor comes from sigma_est, so supplying
// the true absorption isolates the kernel error. Accepted samples are
// averaged onto the amplitude grid with inverse-distance weights; for a
// normalized phase the grid estimates the separable amplitude.
KernelRecovery recover_k(const std::vector<BeamSpec>& beams, const CoefficientPair& measured,
                         const CoefficientPair& sigma_est, const AlbedoConfig& cfg,
                         const KernelRecoveryOptions& opt = {});

}  // namespace albedo
