#pragma once

/**
 * Boundary-to-boundary scattering decomposition for narrow beams.
 *
 * A beam is an angular delta on one direction node paired with a normalized
 * smooth bump of spatial width eps on the inflow face, so the angular limit
 * is exact by construction and only the spatial width is a parameter. The
 * outgoing distribution splits by collision count:
 *
 *   unscattered  - attenuated copy of the beam on the same direction node,
 *                  evaluated by quadrature over the beam cross-section;
 *   single       - one collision inside the support ball; a line integral
 *                  along the beam axis with entry and exit attenuation legs;
 *   multiple     - two or more collisions; the second-collision source is
 *                  assembled on the transport lattice by a tube quadrature
 *                  (axial nodes graded toward the evaluation point, the
 *                  near-field 1/r^2 factor resolved against the exact
 *                  cross-section) and the remaining generations run through
 *                  the grid collision iteration.
 *
 * Concentrated components (unscattered, single) carry analytic evaluators in
 * their boundary traces; their disc samples are not populated because no
 * fixed disc rule resolves an eps-width feature. Masses always come from the
 * dedicated path quadratures.
 */

#include <cstdint>
#include <memory>
#include <vector>

#include "albedo/coefficients.hpp"
#include "albedo/geometry.hpp"
#include "albedo/transport.hpp"

namespace albedo {

// Radial taper of the beam mollifier. The limiting transmissions are
// profile-independent, so a second family exists purely to verify that.
enum class BeamProfile { Bump, CosineTaper };

struct BeamSpec {
    int dir_index = 0;     // direction node carrying the angular delta
    double a0 = 0.0;       // transverse center, frame coordinates of that node
    double b0 = 0.0;
    double eps = 0.05;     // spatial mollifier width
    BeamProfile profile = BeamProfile::Bump;
};

// Normalized quadrature over the beam cross-section: offsets (da, db) in the
// beam frame with weights that integrate the mollifier to one.
struct CrossSectionRule {
    std::vector<double> da, db, w;
    int size() const { return static_cast<int>(da.size()); }

    static CrossSectionRule build(double eps, int n_radial, int n_angular,
                                  BeamProfile profile = BeamProfile::Bump);
};

// Pointwise mollifier density at transverse offset r from the beam center.
double beam_density(double r, double eps, BeamProfile profile = BeamProfile::Bump);

struct AlbedoConfig {
    DomainConfig dom;
    std::shared_ptr<const DirectionSet> dirs;
    std::shared_ptr<const DiscRule> disc;  // outflow sampling for smooth parts
    Lattice lat;                           // multiple-scattering lattice

    int cross_radial = 5, cross_angular = 8;  // beam cross-section rule
    int axial_steps = 192;                    // single-collision axis rule
    int source_axial = 64;                    // graded axis rule of the
                                              // second-collision source
    double march_step = 1.0 / 16.0;
    double sigma_step = 1.0 / 32.0;
    double tol = 1e-3;      // volume-norm tail target of the generation series
    int max_orders = 80;
    bool multiple_enabled = true;
    int threads = 0;        // 0: hardware concurrency

    int resolved_threads() const;
    void validate() const;
};

struct ComponentTrace {
    BoundaryDistribution trace;
    double mass = 0.0;  // outgoing face mass of the component
};

struct AlbedoDecomposition {
    ComponentTrace unscattered;
    ComponentTrace single_scatter;
    ComponentTrace multiple;
    std::vector<double> order_masses;  // collision orders 0, 1, 2, ...
    NeumannReport multiple_report;
    double total_mass = 0.0;
};

// Inflow-face representation of the beam (delta weight on the direction node
// included), for code paths that accept generic boundary data. The sampled
// values are rescaled so the discrete face norm is exactly one; when the disc
// rule cannot resolve the mollifier (raw quadrature off by more than 10%),
// refuses and names the ring count that would.
BoundaryDistribution sample_beam(const BeamSpec& beam, std::shared_ptr<const DirectionSet> dirs,
                                 std::shared_ptr<const DiscRule> disc, double R);

// Attenuation product of a once-broken ray: entry leg to the vertex
// x + t v along v_prime, exit leg from the vertex along v; x transverse to v.
// Equals 1 when the absorption vanishes or both legs miss its support.
double broken_ray_attenuation(const CoefficientPair& pair, const Vec3& x, double t,
                              const Vec3& v, const Vec3& v_prime, double R,
                              double step = 1.0 / 32.0);

// Profile-averaged transmission of a thin beam along an arbitrary line, the
// ingredient shared by the component quadratures and the reconstruction
// sweeps (which march their own ray families, not direction-set nodes).
double ballistic_transmission(const CoefficientPair& pair, const Vec3& point,
                              const Vec3& direction, double eps, BeamProfile profile, double R,
                              int cross_radial = 5, int cross_angular = 8,
                              double sigma_step = 1.0 / 32.0);

ComponentTrace unscattered_component(const BeamSpec& beam, const CoefficientPair& pair,
                                     const AlbedoConfig& cfg);
ComponentTrace single_scatter_component(const BeamSpec& beam, const CoefficientPair& pair,
                                        const AlbedoConfig& cfg);

// Source of the second collision generation on the lattice.
PhaseSpaceField second_collision_source(const BeamSpec& beam, const CoefficientPair& pair,
                                        const AlbedoConfig& cfg);

struct MultipleResult {
    ComponentTrace trace;
    std::vector<double> order_masses;  // orders 2, 3, ...
    NeumannReport report;
};

// Generation series started from the second-collision source. Trace values
// live on the disc rule; order masses are tallied by the escape-attenuated
// volume rule, which resolves the near-axis concentration the disc
// quadrature smears out.
MultipleResult multiple_component(const BeamSpec& beam, const CoefficientPair& pair,
                                  const AlbedoConfig& cfg);

AlbedoDecomposition apply_albedo(const BeamSpec& beam, const CoefficientPair& pair,
                                 const AlbedoConfig& cfg);

// Collision-resolved Monte Carlo estimate of the outgoing masses, for
// cross-validation of the deterministic decomposition. Flights are sampled
// against the scattering cross-section by rejection under a global majorant;
// the absorption excess enters through continuous path weights, so a medium
// with sigma equal to the scattering cross-section tallies unit weights.
struct McResult {
    std::vector<double> order_mass;  // orders 0..cap-1; last entry: >= cap
    std::vector<double> order_se;
    double total_mass = 0.0;
    double total_se = 0.0;
    long histories = 0;
};

McResult mc_oracle(const BeamSpec& beam, const DirectionSet& dirs, const CoefficientPair& pair,
                   const DomainConfig& dom, long histories, std::uint64_t seed,
                   int order_cap = 8, int batches = 20, int threads = 0);

// Face mass of the multiple component for a family of beams, against the
// analytic column bound R * sup(sigma_p)^2.
struct ColumnCheckResult {
    double bound = 0.0;
    std::vector<double> columns;      // computed multiple mass per beam
    std::vector<double> tail_bounds;  // unconverged remainder estimates
    bool ok = false;
};

ColumnCheckResult beta_column_check(const std::vector<BeamSpec>& beams,
                                    const CoefficientPair& pair, const AlbedoConfig& cfg,
                                    double slack = 0.05);

}  // namespace albedo
