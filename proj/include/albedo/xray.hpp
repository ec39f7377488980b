#pragma once

/**
 * Ray transforms and Sobolev-scale diagnostics for the absorption field.
 *
 * The absorption coefficient varies in space only, so its ray data is
 * organized as a stack of parallel-beam slices perpendicular to the z axis:
 * each slice holds line integrals over angles in [0, pi) and signed
 * transverse offsets. Inversion is classical ramp-filtered back-projection
 * per slice; estimates are truncated to the support ball on output.
 *
 * Discrete Sobolev norms embed the field grid into a periodic box of twice
 * the support diameter and read the norm off the discrete Fourier spectrum.
 * The spectrum is exposed so that interpolation inequalities can be checked
 * against the same spectral masses that define the norms; on shared masses
 * the interpolation bound is a finite-dimensional Hoelder inequality and
 * holds to rounding, which is what the checks assert.
 */

#include <string>
#include <vector>

#include "albedo/coefficients.hpp"

namespace albedo {

struct Sinogram {
    double rho = 1.0;           // offsets and slice heights span [-rho, rho]
    int n_slices = 0;
    int n_angles = 0;           // angles uniform on [0, pi)
    int n_offsets = 0;
    std::vector<double> values; // slice-major, then angle, then offset

    double slice(int k) const;
    double angle(int i) const;
    double offset(int j) const;
    std::size_t index(int k, int i, int j) const {
        return (static_cast<std::size_t>(k) * n_angles + i) * n_offsets + j;
    }
    double& at(int k, int i, int j) { return values[index(k, i, j)]; }
    double at(int k, int i, int j) const { return values[index(k, i, j)]; }

    Vec3 ray_point(int k, int i, int j) const;  // offset * e(theta) + slice * z
    Vec3 ray_direction(int i) const;            // (cos theta, sin theta, 0)

    static Sinogram zeros(double rho, int n_slices, int n_angles, int n_offsets);
    std::string manifest_json() const;          // geometry sidecar for raw dumps
};

// Line integrals of the field over the full slice stack. Each ray is clipped
// to the support ball and integrated by composite Simpson quadrature.
Sinogram xray_transform(const ScalarField& field, int n_slices, int n_angles, int n_offsets,
                        double max_step = 1.0 / 64.0, int threads = 0);

struct FbpResult {
    ScalarField field;
    std::vector<std::string> warnings;
};

// Ramp-filtered back-projection, slice by slice, onto a grid whose z planes
// are the sinogram slices (out_npts must equal n_slices). Nodes outside the
// support ball are zeroed: the estimate lives in the admissible class.
// Angular sampling below the Nyquist estimate is reported as a warning.
FbpResult fbp_invert(const Sinogram& sino, int out_npts, int threads = 0);

// Folded nonnegative spectral masses of a real field together with the
// weight 1 + |xi|^2 per retained mode; every Sobolev quantity below is a
// moment of this density.
struct SobolevSpectrum {
    std::vector<double> mass;
    std::vector<double> weight;

    double norm(double s) const;
};

// Spectrum of the grid field zero-padded to a periodic box of side 4 * rho.
SobolevSpectrum sobolev_spectrum(const ScalarField& field);

// Spectrum of one full period sampled on npts^3 points, x fastest.
SobolevSpectrum periodic_spectrum(const std::vector<double>& samples, int npts, double box_side);

double sobolev_norm(const ScalarField& field, double s);

// Margin of the interpolation inequality between the smoothness endpoints
// -1/2 and s_high at intermediate order s:
//   ||f||_{H^s} <= ||f||_{H^{s_high}}^t ||f||_{H^{-1/2}}^{1-t},
//   t = (2s + 1) / (2 s_high + 1).
// Returns right side minus left side; nonnegative up to rounding. A single
// occupied mode gives equality.
double interpolation_check(const SobolevSpectrum& spectrum, double s, double s_high);
double interpolation_check(const ScalarField& field, double s, double s_high);

// Lower estimate of the sup-norm embedding constant at smoothness
// n/2 + r_tilde: the best ratio ||f||_inf / ||f||_{H^{n/2 + r_tilde}} over
// the probe family. Diagnostic only, never an input to an inequality check.
double embedding_constant(const std::vector<ScalarField>& probes, double r_tilde);

// Centered Gaussian probes with geometrically spaced widths.
std::vector<ScalarField> make_gaussian_probes(double rho, int npts, int count);

}  // namespace albedo
