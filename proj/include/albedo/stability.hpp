#pragma once

/**
 * Stability harness: how far apart two coefficient pairs can be, given how
 * far apart their boundary operators are.
 *
 * The machinery has three layers. The bottom layer pairs a bounded weight
 * function on the outflow faces against the difference of two beam
 * decompositions; the quadrature nodes are shared between the three
 * components and the norm, so the splitting identity and the triangle
 * inequality hold at rounding level by construction. The middle layer
 * brackets the operator distance: a beam sweep gives a max-column lower
 * bound, component column norms plus series tails plus a measured
 * sweep-density slack give the upper bound. The top layer checks the
 * stability estimates themselves: transmission gaps and attenuated kernel
 * line integrals against the distance bracket, and Hoelder exponents of
 * coefficient errors against the distance over a perturbation family, by
 * log-log regression. Inequality checks always put the upper bracket on the
 * dominating side, so a reported pass is conservative.
 *
 * Weight functions concentrating on the single-scattering segment are built
 * from smooth window factors (face rim, direction cone, skew distance to the
 * beam axis, speed cap) times a mollified sign model of the kernel
 * difference along the axis; sharpening the windows recovers the segment
 * limit and the sign model turns the paired integral into an absolute one.
 *
 * Only the three dimensional domain is supported: the separation between
 * single and multiple scattering that these estimates rest on fails in two
 * dimensions, so planar runs are refused.
 */

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "albedo/albedo_op.hpp"
#include "albedo/coefficients.hpp"
#include "albedo/geometry.hpp"

namespace albedo {

// Closest approach between the line x + t v and the axis x0 + t' v0,
// with the minimizing parameters. Directions need not be normalized.
struct SkewResult {
    double distance = 0.0;
    double t = 0.0;        // parameter on the query line
    double t_prime = 0.0;  // parameter on the axis
};

// Throws DomainError when the directions are parallel.
SkewResult skew_distance(const Vec3& x, const Vec3& v, const Vec3& axis_point,
                         const Vec3& axis_dir);

// Smooth weight on the outflow faces concentrating on the single-scattering
// segment of one beam. cutoff() is the product of the window factors, in
// [0, 1]; sign_model() approximates the sign of the kernel difference along
// the axis, exactly +-1 once the difference clears the 1/m mollification
// band; the full weight is their product. All evaluators take the face foot
// (the transverse part of the face point) and the outgoing direction.
struct TestFunction {
    double delta = 0.05;  // rim and cone cut
    int m = 64;           // sign mollification: exact beyond level 1/m
    int l = 2;            // window sharpness: transition width 1/l

    int dir_index = 0;  // beam direction node
    Vec3 y0, v0;        // axis foot and direction
    double R = 2.0;
    double speed_factor = 1.0;  // constant speed window at unit speed

    // kernel difference along the axis, (t', direction) -> value
    std::function<double(double, const Vec3&)> diff;

    double cutoff(const Vec3& foot, const Vec3& v) const;
    double sign_model(double t_prime, const Vec3& v) const;
    double axis_parameter(const Vec3& foot, const Vec3& v) const;
    double operator()(const Vec3& foot, const Vec3& v) const;

    // sharp window sets: the support of cutoff lies inside the outer set and
    // cutoff is identically one (up to the speed factor) on the inner set
    bool outer_contains(const Vec3& foot, const Vec3& v) const;
    bool inner_contains(const Vec3& foot, const Vec3& v) const;

    // adapter for the grid pairing: (direction index, foot) -> weight
    std::function<double(int, const Vec3&)> on_grid(
        std::shared_ptr<const DirectionSet> dirs) const;
};

// Builds the weight for a beam. diff is the kernel difference along the
// axis. Requires 0 < delta < min(R, 1), l > 1/(R - delta) + delta, m >= 1.
TestFunction make_test_function(const BeamSpec& beam, const DirectionSet& dirs, double R,
                                std::function<double(double, const Vec3&)> diff, double delta,
                                int m, int l);

// Face measure of the outer window set (all direction nodes, analytic in
// the transverse coordinates). Used as the support area of the weight.
double support_area(const TestFunction& tf, const DirectionSet& dirs, int s_nodes = 256);

// Difference columns of one beam under two coefficient pairs, tabulated on
// a master quadrature that resolves the concentrated components: per
// direction a band (or a polar patch when the direction aligns with the
// beam) around the single-scattering support, plus the disc-rule nodes
// outside it. Pairing any weight against the columns reuses these nodes, so
// I1 + I2 + I3 re-sums the same terms as the total.
struct BeamColumns {
    struct Node {
        Vec3 y;          // face foot
        double w = 0.0;  // quadrature weight on the face
        double du = 0.0, ds = 0.0, dm = 0.0;  // component differences
    };
    BeamSpec beam;
    std::vector<std::vector<Node>> nodes;  // per direction node
    double tail = 0.0;     // unconverged multiple-series remainders
    double norm_l1 = 0.0;  // L1 of the summed difference: lower functional
    double comp_l1 = 0.0;  // sum of component L1 norms

    double upper() const { return comp_l1 + tail; }
};

BeamColumns make_columns(const BeamSpec& beam, const CoefficientPair& pa,
                         const CoefficientPair& pb, const AlbedoConfig& cfg);

struct PairingResult {
    double I1 = 0.0;  // unscattered difference against the weight
    double I2 = 0.0;  // single-scattering difference
    double I3 = 0.0;  // multiple-scattering difference
    double total = 0.0;
    double diff_norm = 0.0;  // L1 of the summed difference column
    double upper = 0.0;      // component norms plus series tails
};

// Pairs a bounded weight against precomputed difference columns.
PairingResult pair_against(const BeamColumns& cols, const DirectionSet& dirs,
                           const std::function<double(int, const Vec3&)>& phi);

// Convenience: columns plus pairing in one call.
PairingResult pairing(const std::function<double(int, const Vec3&)>& phi, const BeamSpec& beam,
                      const CoefficientPair& pa, const CoefficientPair& pb,
                      const AlbedoConfig& cfg);

// Bracket of the boundary-operator distance over a beam sweep. lower is the
// largest columnwise difference norm (the sweep inflows have unit mass);
// upper adds the component/tail overestimate and a slack equal to the
// largest jump between consecutive sweep columns, standing in for beams the
// sweep does not visit.
struct DistanceBracket {
    double lower = 0.0;
    double upper = 0.0;
    double slack = 0.0;
    std::vector<double> beam_lower, beam_upper;
};

DistanceBracket operator_distance(const std::vector<BeamSpec>& sweep,
                                  const CoefficientPair& pa, const CoefficientPair& pb,
                                  const AlbedoConfig& cfg);

struct StabilityRow {
    std::string name;
    double lhs = 0.0, rhs = 0.0;
    double margin = 0.0;     // rhs - lhs
    double tolerance = 0.0;  // pass iff margin >= -tolerance
    bool pass = true;
    std::vector<std::pair<std::string, double>> params;
};

struct StabilityReport {
    std::vector<StabilityRow> rows;
    DistanceBracket distance;

    bool all_pass() const;
    std::string to_json() const;
    std::string to_csv() const;  // one row per inequality and parameter cell
};

// Transmission-gap and kernel-line estimates for one beam: the axis
// transmission difference against the distance upper bound, and the
// attenuated kernel difference integrated over the axis and all outgoing
// directions against the production-weighted attenuation gap plus the
// distance. The sweep should contain the beam itself. rel_tol scales the
// per-row pass tolerance by the rhs.
StabilityReport verify_beam_estimates(const CoefficientPair& pa, const CoefficientPair& pb,
                                      const BeamSpec& beam, const std::vector<BeamSpec>& sweep,
                                      const AlbedoConfig& cfg, double rel_tol = 0.02);

// Hoelder exponents of the stability estimates, checked by regression over
// a one-parameter perturbation family.
double holder_exponent_field(double s, double r_tilde, int n = 3);
double holder_exponent_kernel(double r, double r_tilde, int n = 3);

struct ScalingOptions {
    std::vector<double> etas{0.4, 0.2, 0.1, 0.05};  // largest first
    double r_tilde = 0.51;
    double r = 0.255;
    double M = 10.0;  // smoothness-class bound on the field norm and on the
                      // production sup
    std::vector<double> s_values{-0.5};  // field-error smoothness rows
    double slope_slack = 0.15;
    int axis_steps = 128;
};

// family(eta) returns the perturbed pair; family(0) is the reference. Every
// member must be admissible, subcritical, and inside the smoothness class
// (measured field norm of order n/2 + r_tilde at most M, production sup at
// most M), otherwise the run is refused. Emits slope rows per inequality
// and raw margin rows normalized by the measured constant at the largest
// perturbation.
StabilityReport verify_scaling_exponents(const std::function<CoefficientPair(double)>& family,
                                         const BeamSpec& beam,
                                         const std::vector<BeamSpec>& sweep,
                                         const AlbedoConfig& cfg, const ScalingOptions& opt);

// Multiple-scattering pairing against weights of shrinking support: records
// support areas and |I3| over dyadic window levels l0 * 2^i, the log-log
// slope, and the smallest constant making |I3| <= c * area^(1/p') hold on
// every level.
struct SupportScaling {
    std::vector<int> levels;
    std::vector<double> area, i3_abs;
    double slope = 0.0;
    double c_fit = 0.0;
    double p = 1.4;
};

SupportScaling multiple_support_scaling(const BeamSpec& beam, const CoefficientPair& pa,
                                        const CoefficientPair& pb, const AlbedoConfig& cfg,
                                        double delta, int m, int l0, int n_levels,
                                        double p = 1.4);

}  // namespace albedo
