#pragma once

/**
 * Geometry of the disc-to-disc transport domain.
 *
 * Positions live in the open ball of radius R. For a unit direction v the
 * transverse disc is the set of points orthogonal to v with |y| < R; the
 * inflow and outflow faces are that disc shifted by -R v and +R v. A phase
 * point (x, v) belongs to the domain when both the axial coordinate x.v and
 * the transverse part are inside (-R, R) resp. the disc.
 *
 * Volume integrals over the domain are evaluated in chord coordinates:
 * direction node v, transverse node y on the disc, axial offset t in (-R, R),
 * with the flat measure dt dy dv. Velocities are unit speed throughout, so
 * speed weights in the boundary and volume norms are identically one.
 */

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "albedo/vec.hpp"

namespace albedo {

struct DomainConfig {
    int n = 3;        // spatial dimension, 2 or 3
    double R = 2.0;   // domain radius
    double rho = 1.0; // coefficient support radius, 0 < rho < R

    void validate() const; // throws ConfigError on bad parameters
};

// Tolerance for boundary membership tests.
inline constexpr double kBoundaryTol = 1e-9;

// Orthonormal frame (e1, e2) spanning the plane orthogonal to the unit
// vector v, with e1 x e2 = v. e1 is obtained by projecting out v from the
// coordinate axis with the smallest |component| of v (lowest index wins
// ties), which makes the frame deterministic and continuous away from axis
// switches.
std::pair<Vec3, Vec3> make_frame(const Vec3& v);

// Parameter interval of {x + t v : t} inside the open ball of the given
// radius; empty when the chord misses or is tangent within tolerance.
std::optional<std::pair<double, double>> chord_interval(const Vec3& x, const Vec3& v,
                                                        double radius);

// Discrete direction set with quadrature weights summing to the sphere
// (circle) measure, plus the transverse frame of each node.
struct DirectionSet {
    int n = 3;
    std::vector<Vec3> dir;
    std::vector<double> weight;
    std::vector<Vec3> e1, e2;

    int size() const { return static_cast<int>(dir.size()); }
    double total_weight() const;

    // n = 3: Gauss-Legendre in the polar cosine times a uniform azimuth.
    // n = 2: uniform angles on the circle.
    static DirectionSet build(int n, int n_polar, int n_azimuth);

    std::string to_json() const;
};

// Equal-weight quadrature on the transverse disc, in frame coordinates
// (a along e1, b along e2). n = 3 uses rings uniform in radius^2 and a
// uniform angle; n = 2 reduces to midpoints on the diameter segment.
struct DiscRule {
    int n = 3;
    double radius = 0.0;
    int n_radial = 0, n_angular = 0;
    std::vector<double> a, b, w;

    int size() const { return static_cast<int>(a.size()); }

    static DiscRule build(int n, double radius, int n_radial, int n_angular);

    Vec3 point(const DirectionSet& dirs, int d, int q) const {
        return a[q] * dirs.e1[d] + b[q] * dirs.e2[d];
    }
};

// Transverse decomposition of a position relative to direction d.
struct FaceProjection {
    Vec3 transverse;   // x - (x.v) v
    Vec3 foot;         // entry (sign < 0) or exit (sign > 0) face point
    double axial;      // x.v
};

// Projects x onto the face of direction dirs.dir[d]; sign picks the inflow
// (-1) or outflow (+1) face. Throws DomainError when the transverse part is
// outside the disc.
FaceProjection project_to_F(const Vec3& x, const DirectionSet& dirs, int d, int sign,
                            double R);

// Chord-coordinate quadrature of f(point, direction index) over the domain.
double integrate_O(const DomainConfig& dom, const DirectionSet& dirs, const DiscRule& disc,
                   int n_axial, const std::function<double(const Vec3&, int)>& f,
                   int threads = 1);

// Boundary data: per direction node, samples on the transverse disc of that
// direction. An optional evaluator supplies off-node values for analytically
// known data (beams, test inflow); sampled values remain the persistent form.
struct BoundaryDistribution {
    int side = -1; // -1 inflow face, +1 outflow face
    std::shared_ptr<const DirectionSet> dirs;
    std::shared_ptr<const DiscRule> disc;
    std::vector<double> values; // [d * disc.size() + q]
    std::function<double(int, const Vec3&)> eval; // optional, (dir, transverse)

    double& at(int d, int q) { return values[static_cast<std::size_t>(d) * disc->size() + q]; }
    double at(int d, int q) const {
        return values[static_cast<std::size_t>(d) * disc->size() + q];
    }

    // Evaluator if present, otherwise bilinear interpolation in the polar
    // sample layout (radius then angle, wrapped).
    double value(int d, const Vec3& transverse) const;

    static BoundaryDistribution zero(int side, std::shared_ptr<const DirectionSet> dirs,
                                     std::shared_ptr<const DiscRule> disc);
    void fill_from_eval();
};

// Speed-weighted L1 mass of boundary data (unit speed: plain L1).
double boundary_norm(const BoundaryDistribution& g);

}  // namespace albedo
