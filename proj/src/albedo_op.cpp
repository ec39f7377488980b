#include "albedo/albedo_op.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

#include "albedo/errors.hpp"
#include "albedo/parallel.hpp"
#include "albedo/rng.hpp"

namespace albedo {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Gauss-Legendre 10 on [-1, 1], used for per-ray tube integrals.
constexpr double kGl10X[10] = {
    -0.9739065285171717, -0.8650633666889845, -0.6794095682990244, -0.4333953941292472,
    -0.1488743389816312, 0.1488743389816312,  0.4333953941292472,  0.6794095682990244,
    0.8650633666889845,  0.9739065285171717};
constexpr double kGl10W[10] = {
    0.0666713443086881, 0.1494513491505806, 0.2190863625159820, 0.2692667193099963,
    0.2955242247147529, 0.2955242247147529, 0.2692667193099963, 0.2190863625159820,
    0.1494513491505806, 0.0666713443086881};

double profile_value(BeamProfile profile, double t) {
    if (profile == BeamProfile::CosineTaper) {
        if (t >= 1.0) return 0.0;
        const double c = std::cos(0.5 * kPi * t);
        return c * c;
    }
    return bump_profile(t);
}

double plane_integral_of(BeamProfile profile) {
    const int m = 1024;
    const double h = 1.0 / m;
    double s = 0.0;
    for (int i = 0; i <= m; ++i) {
        const double r = i * h;
        const double f = r * profile_value(profile, r);
        s += f * (i == 0 || i == m ? 1.0 : (i % 2 ? 4.0 : 2.0));
    }
    return 2.0 * kPi * s * h / 3.0;
}

// Integral of the unit-width profile over the plane; the mollifier of width
// eps integrates to this constant times eps^2.
double profile_plane_integral(BeamProfile profile) {
    static const double bump = plane_integral_of(BeamProfile::Bump);
    static const double cosine = plane_integral_of(BeamProfile::CosineTaper);
    return profile == BeamProfile::Bump ? bump : cosine;
}

// Resolved beam geometry shared by all components.
struct BeamFrame {
    int j0 = 0;
    double wj0 = 0.0;
    Vec3 v0, e1, e2;
    Vec3 y0;      // transverse beam center
    double eps = 0.0;
    BeamProfile profile = BeamProfile::Bump;
};

BeamFrame resolve_beam(const BeamSpec& beam, const AlbedoConfig& cfg) {
    if (cfg.dom.n != 3)
        throw RefusalError("beam decomposition: only the three dimensional domain is supported");
    if (cfg.dirs == nullptr || cfg.disc == nullptr)
        throw ConfigError("beam decomposition: direction set and disc rule are required");
    if (beam.dir_index < 0 || beam.dir_index >= cfg.dirs->size())
        throw ConfigError("beam decomposition: direction index out of range");
    if (!(beam.eps > 0.0))
        throw ConfigError("beam decomposition: mollifier width must be positive");
    const double r0 = std::hypot(beam.a0, beam.b0);
    if (r0 + beam.eps > cfg.dom.R)
        throw ConfigError("beam decomposition: beam cross-section leaves the face disc");
    BeamFrame f;
    f.j0 = beam.dir_index;
    f.wj0 = cfg.dirs->weight[f.j0];
    f.v0 = cfg.dirs->dir[f.j0];
    f.e1 = cfg.dirs->e1[f.j0];
    f.e2 = cfg.dirs->e2[f.j0];
    f.y0 = beam.a0 * f.e1 + beam.b0 * f.e2;
    f.eps = beam.eps;
    f.profile = beam.profile;
    return f;
}

void require_separable(const CoefficientPair& pair) {
    if (pair.kappa.tabulated)
        throw RefusalError("beam decomposition: needs the separable scattering form");
}

// Parameter interval of the ray y + t v inside the tube of width eps about
// the beam axis, clipped to the support-ball chord of the same ray. Empty
// when the ray never meets both.
std::optional<std::pair<double, double>> tube_slab(const Vec3& y, const Vec3& v,
                                                  const BeamFrame& bf, double rho) {
    const auto ball = chord_interval(y, v, rho);
    if (!ball) return std::nullopt;
    const Vec3 pw = perp_part(y - bf.y0, bf.v0);
    const Vec3 pv = perp_part(v, bf.v0);
    const double A = norm2(pv);
    const double B = dot(pw, pv);
    const double C = norm2(pw) - bf.eps * bf.eps;
    double lo = ball->first, hi = ball->second;
    if (A < 1e-14) {
        if (C >= 0.0) return std::nullopt;  // parallel ray outside the tube
    } else {
        const double disc = B * B - A * C;
        if (disc <= 0.0) return std::nullopt;
        const double sq = std::sqrt(disc);
        lo = std::max(lo, (-B - sq) / A);
        hi = std::min(hi, (-B + sq) / A);
        if (hi <= lo) return std::nullopt;
    }
    return std::make_pair(lo, hi);
}

BoundaryDistribution zero_outflow(const AlbedoConfig& cfg) {
    return BoundaryDistribution::zero(+1, cfg.dirs, cfg.disc);
}

}  // namespace

double beam_density(double r, double eps, BeamProfile profile) {
    return profile_value(profile, r / eps) / (profile_plane_integral(profile) * eps * eps);
}

CrossSectionRule CrossSectionRule::build(double eps, int n_radial, int n_angular,
                                         BeamProfile profile) {
    if (n_radial < 2 || n_angular < 4)
        throw ConfigError("cross-section rule: need at least 2 radial and 4 angular nodes");
    CrossSectionRule rule;
    double total = 0.0;
    for (int i = 0; i < n_radial; ++i) {
        const double u = (i + 0.5) / n_radial;  // uniform in radius^2
        const double r = eps * std::sqrt(u);
        const double wr = profile_value(profile, std::sqrt(u));
        for (int j = 0; j < n_angular; ++j) {
            const double phi = 2.0 * kPi * (j + 0.5) / n_angular;
            rule.da.push_back(r * std::cos(phi));
            rule.db.push_back(r * std::sin(phi));
            rule.w.push_back(wr);
            total += wr;
        }
    }
    // Normalize to a discrete mollifier: the rule integrates the beam profile
    // to exactly one, so component masses are exact in the profile mass.
    for (double& w : rule.w) w /= total;
    return rule;
}

int AlbedoConfig::resolved_threads() const { return threads > 0 ? threads : hardware_threads(); }

void AlbedoConfig::validate() const {
    dom.validate();
    if (!dirs || !disc) throw ConfigError("albedo config: direction set and disc rule required");
    if (cross_radial < 2 || cross_angular < 4)
        throw ConfigError("albedo config: cross-section rule too small");
    if (axial_steps < 8) throw ConfigError("albedo config: need at least 8 axial steps");
    if (source_axial < 8) throw ConfigError("albedo config: need at least 8 source axial steps");
    if (!(tol > 0.0)) throw ConfigError("albedo config: tolerance must be positive");
    if (max_orders < 1) throw ConfigError("albedo config: need at least one order");
}

BoundaryDistribution sample_beam(const BeamSpec& beam, std::shared_ptr<const DirectionSet> dirs,
                                 std::shared_ptr<const DiscRule> disc, double R) {
    if (beam.dir_index < 0 || beam.dir_index >= dirs->size())
        throw ConfigError("beam sampling: direction index out of range");
    const double r0 = std::hypot(beam.a0, beam.b0);
    if (r0 + beam.eps > R)
        throw ConfigError("beam sampling: beam cross-section leaves the face disc");
    auto g = BoundaryDistribution::zero(-1, dirs, disc);
    const int j0 = beam.dir_index;
    const double wj0 = dirs->weight[j0];
    const Vec3 y0 = beam.a0 * dirs->e1[j0] + beam.b0 * dirs->e2[j0];
    const double eps = beam.eps;
    const BeamProfile profile = beam.profile;
    g.eval = [j0, wj0, y0, eps, profile](int d, const Vec3& y) {
        if (d != j0) return 0.0;
        return beam_density(norm(y - y0), eps, profile) / wj0;
    };
    g.fill_from_eval();
    const double raw = boundary_norm(g);
    if (std::abs(raw - 1.0) > 0.1) {
        const double at = std::max(r0, eps);
        const int rings = static_cast<int>(std::ceil(1.5 * R * R / (at * eps)));
        const int arcs = static_cast<int>(std::ceil(6.0 * kPi * at / eps));
        throw RefusalError("beam sampling: disc rule cannot resolve the mollifier; need about " +
                           std::to_string(rings) + " rings x " + std::to_string(arcs) +
                           " angles for width " + std::to_string(eps));
    }
    // Exact discrete normalization; the evaluator stays the continuum beam.
    for (double& v : g.values) v /= raw;
    return g;
}

double broken_ray_attenuation(const CoefficientPair& pair, const Vec3& x, double t,
                              const Vec3& v, const Vec3& v_prime, double R, double step) {
    const Vec3 vertex = x + t * v;
    const Vec3 entry = vertex - (R + dot(vertex, v_prime)) * v_prime;
    const Vec3 exit = vertex + (R - dot(vertex, v)) * v;
    const double tau =
        absorption_line(pair, entry, vertex, step) + absorption_line(pair, vertex, exit, step);
    return std::exp(-tau);
}

double ballistic_transmission(const CoefficientPair& pair, const Vec3& point,
                              const Vec3& direction, double eps, BeamProfile profile, double R,
                              int cross_radial, int cross_angular, double sigma_step) {
    const Vec3 vhat = normalized(direction);
    const auto [e1, e2] = make_frame(vhat);
    const auto cross = CrossSectionRule::build(eps, cross_radial, cross_angular, profile);
    double mass = 0.0;
    for (int c = 0; c < cross.size(); ++c) {
        const Vec3 y = point + cross.da[c] * e1 + cross.db[c] * e2;
        mass += cross.w[c] *
                std::exp(-absorption_line(pair, y - R * vhat, y + R * vhat, sigma_step));
    }
    return mass;
}

ComponentTrace unscattered_component(const BeamSpec& beam, const CoefficientPair& pair,
                                     const AlbedoConfig& cfg) {
    cfg.validate();
    const BeamFrame bf = resolve_beam(beam, cfg);
    const double R = cfg.dom.R;
    const double step = cfg.sigma_step;

    ComponentTrace out;
    out.mass = ballistic_transmission(pair, bf.y0, bf.v0, bf.eps, bf.profile, R,
                                      cfg.cross_radial, cfg.cross_angular, step);

    out.trace = zero_outflow(cfg);
    auto shared = std::make_shared<const CoefficientPair>(pair);
    const int j0 = bf.j0;
    const double wj0 = bf.wj0, eps = bf.eps;
    const BeamProfile profile = bf.profile;
    const Vec3 y0 = bf.y0, v0 = bf.v0;
    out.trace.eval = [shared, j0, wj0, y0, v0, eps, profile, R, step](int d, const Vec3& y) {
        if (d != j0) return 0.0;
        const double r = norm(y - y0);
        if (r >= eps) return 0.0;
        const double tau = absorption_line(*shared, y - R * v0, y + R * v0, step);
        return beam_density(r, eps, profile) * std::exp(-tau) / wj0;
    };
    return out;
}

ComponentTrace single_scatter_component(const BeamSpec& beam, const CoefficientPair& pair,
                                        const AlbedoConfig& cfg) {
    cfg.validate();
    require_separable(pair);
    const BeamFrame bf = resolve_beam(beam, cfg);
    const double R = cfg.dom.R, rho = cfg.dom.rho;
    const double step = cfg.sigma_step;
    const DirectionSet& dirs = *cfg.dirs;

    ComponentTrace out;
    out.trace = zero_outflow(cfg);

    const auto chord = chord_interval(bf.y0, bf.v0, rho);
    if (chord) {
        // Collapsed axis rule: the transverse profile integrates to one and
        // every slow factor varies on the support scale, so evaluating them
        // on the axis is exact to second order in the beam width.
        std::vector<double> pd(dirs.size());
        for (int j = 0; j < dirs.size(); ++j)
            pd[j] = pair.kappa.phase.density(dot(bf.v0, dirs.dir[j]), 3);

        const int m = cfg.axial_steps;
        const double ta = chord->first, tb = chord->second;
        const double dt = (tb - ta) / m;
        out.mass = parallel_sum(static_cast<std::size_t>(m), cfg.resolved_threads(),
                                [&](std::size_t i) {
            const double t = ta + (static_cast<double>(i) + 0.5) * dt;
            const Vec3 z = bf.y0 + t * bf.v0;
            const double amp = scatter_amp_point(pair, z);
            if (amp == 0.0) return 0.0;
            const double ein = std::exp(-absorption_line(pair, bf.y0 - R * bf.v0, z, step));
            double inner = 0.0;
            for (int j = 0; j < dirs.size(); ++j) {
                const Vec3& vj = dirs.dir[j];
                const Vec3 exit = z + (R - dot(z, vj)) * vj;
                inner += dirs.weight[j] * pd[j] *
                         std::exp(-absorption_line(pair, z, exit, step));
            }
            return dt * amp * ein * inner;
        });
    }

    auto shared = std::make_shared<const CoefficientPair>(pair);
    auto shared_dirs = cfg.dirs;
    const BeamFrame bff = bf;
    out.trace.eval = [shared, shared_dirs, bff, R, rho, step](int j, const Vec3& y) {
        const Vec3& vj = shared_dirs->dir[j];
        const auto slab = tube_slab(y, vj, bff, rho);
        if (!slab) return 0.0;
        const double mu = dot(bff.v0, vj);
        const double pd = shared->kappa.phase.density(mu, 3);
        const double mid = 0.5 * (slab->first + slab->second);
        const double half = 0.5 * (slab->second - slab->first);
        const Vec3 face = y + R * vj;
        double acc = 0.0;
        for (int q = 0; q < 10; ++q) {
            const double t = mid + half * kGl10X[q];
            const Vec3 z = y + t * vj;
            const double amp = scatter_amp_point(*shared, z);
            if (amp == 0.0) continue;
            const double g =
                beam_density(norm(perp_part(z - bff.y0, bff.v0)), bff.eps, bff.profile);
            if (g == 0.0) continue;
            const double ein =
                std::exp(-absorption_line(*shared, z - (R + dot(z, bff.v0)) * bff.v0, z, step));
            const double eout = std::exp(-absorption_line(*shared, z, face, step));
            acc += kGl10W[q] * amp * g * pd * ein * eout;
        }
        return half * acc;
    };
    return out;
}

PhaseSpaceField second_collision_source(const BeamSpec& beam, const CoefficientPair& pair,
                                        const AlbedoConfig& cfg) {
    cfg.validate();
    require_separable(pair);
    const BeamFrame bf = resolve_beam(beam, cfg);
    const double R = cfg.dom.R, rho = cfg.dom.rho;
    const double step = cfg.sigma_step;
    const DirectionSet& dirs = *cfg.dirs;
    const Lattice& lat = cfg.lat;

    PhaseSpaceField out = PhaseSpaceField::zeros(lat, cfg.dirs);
    const auto chord = chord_interval(bf.y0, bf.v0, rho);
    if (!chord) return out;
    const double ta = chord->first, tb = chord->second;

    const auto cross =
        CrossSectionRule::build(bf.eps, cfg.cross_radial, cfg.cross_angular, bf.profile);
    std::vector<Vec3> offsets(cross.size());
    for (int c = 0; c < cross.size(); ++c)
        offsets[c] = cross.da[c] * bf.e1 + cross.db[c] * bf.e2;
    const double near2 = 64.0 * bf.eps * bf.eps;  // full cross sum inside 8 eps

    const int nz = lat.npts;
    const std::size_t nodes = lat.size();
    const int ndir = dirs.size();
    const int m = cfg.source_axial;

    parallel_for(nodes, cfg.resolved_threads(), [&](std::size_t node) {
        const int i = static_cast<int>(node % nz);
        const int j = static_cast<int>((node / nz) % nz);
        const int k = static_cast<int>(node / (static_cast<std::size_t>(nz) * nz));
        const Vec3 x = lat.node(i, j, k);
        const double ampx = scatter_amp_point(pair, x);
        if (ampx == 0.0) return;

        // Axial nodes graded toward the point of closest approach, so the
        // near-field of the inverse-square factor is resolved at any x.
        const double tstar = dot(x, bf.v0);
        const double ulo = std::asinh((ta - tstar) / bf.eps);
        const double uhi = std::asinh((tb - tstar) / bf.eps);
        const double du = (uhi - ulo) / m;

        std::vector<double> dir_acc(ndir, 0.0);
        for (int a = 0; a < m; ++a) {
            const double u = ulo + (a + 0.5) * du;
            const double t = tstar + bf.eps * std::sinh(u);
            const double wt = bf.eps * std::cosh(u) * du;
            const Vec3 z = bf.y0 + t * bf.v0;
            const double ampz = scatter_amp_point(pair, z);
            if (ampz == 0.0) continue;
            const Vec3 dxz = x - z;
            const double d2 = norm2(dxz);
            double w_near;
            if (d2 > near2) {
                w_near = 1.0 / d2;
            } else {
                w_near = 0.0;
                for (int c = 0; c < cross.size(); ++c)
                    w_near += cross.w[c] / norm2(dxz - offsets[c]);
            }
            const Vec3 omega = d2 > 1e-24 ? dxz * (1.0 / std::sqrt(d2)) : bf.v0;
            const double ein = std::exp(-absorption_line(pair, bf.y0 - R * bf.v0, z, step));
            const double att = std::exp(-absorption_line(pair, z, x, step));
            const double q = wt * ampz * pair.kappa.phase.density(dot(bf.v0, omega), 3) * ein *
                             att * w_near;
            if (q == 0.0) continue;
            for (int d = 0; d < ndir; ++d)
                dir_acc[d] += q * pair.kappa.phase.density(dot(omega, dirs.dir[d]), 3);
        }
        for (int d = 0; d < ndir; ++d) out.at(d, node) = ampx * dir_acc[d];
    });
    return out;
}

MultipleResult multiple_component(const BeamSpec& beam, const CoefficientPair& pair,
                                  const AlbedoConfig& cfg) {
    cfg.validate();
    require_separable(pair);
    resolve_beam(beam, cfg);  // validates geometry up front
    const auto sub = check_subcritical(pair, cfg.dom, *cfg.dirs);
    if (!sub.subcritical)
        throw RefusalError("multiple component: no subcriticality certificate");
    const double q = sub.contraction;
    const int threads = cfg.resolved_threads();

    EvalGeometry geom{cfg.dirs, cfg.disc, 64, cfg.march_step, cfg.sigma_step};

    MultipleResult res;
    res.trace.trace = zero_outflow(cfg);
    res.report.contraction = q;

    PhaseSpaceField source = second_collision_source(beam, pair, cfg);

    // Per-order masses come from the escape-attenuated volume rule, not from
    // the disc quadrature of the swept trace: beam sources concentrate along
    // the axis, the trace inherits a ridge of lattice-cell width, and the
    // disc rule drops a resolution-independent share of it. The nodal volume
    // sum sees the full concentrated source.
    const DirectionSet& dirs = *cfg.dirs;
    const Lattice& lat = cfg.lat;
    const std::size_t nodes = lat.size();
    const int ndir = dirs.size();
    const double h3 = lat.h() * lat.h() * lat.h();
    // nodal sources vanish beyond the ball plus two amplitude-grid cells
    const double margin = 4.0 * cfg.dom.rho / (pair.kappa.amplitude.npts - 1);
    std::vector<double> escape(static_cast<std::size_t>(ndir) * nodes, 1.0);
    parallel_for(nodes, threads, [&](std::size_t node) {
        const int nz = lat.npts;
        const int i = static_cast<int>(node % nz);
        const int j = static_cast<int>((node / nz) % nz);
        const int k = static_cast<int>(node / (static_cast<std::size_t>(nz) * nz));
        const Vec3 x = lat.node(i, j, k);
        if (norm(x) > cfg.dom.rho + margin) return;
        for (int d = 0; d < ndir; ++d)
            escape[static_cast<std::size_t>(d) * nodes + node] = std::exp(
                -absorption_line(pair, x, x + (2.0 * cfg.dom.R) * dirs.dir[d], cfg.sigma_step));
    });
    const auto outgoing_mass = [&](const PhaseSpaceField& s) {
        return h3 * parallel_sum(nodes, threads, [&](std::size_t node) {
            double acc = 0.0;
            for (int d = 0; d < ndir; ++d) {
                const double sv = s.at(d, node);
                if (sv != 0.0)
                    acc += dirs.weight[d] * sv *
                           escape[static_cast<std::size_t>(d) * nodes + node];
            }
            return acc;
        });
    };

    for (int order = 2; order <= cfg.max_orders; ++order) {
        const SweepResult sw = sweep_streamed(source, pair.sigma, cfg.dom, geom, threads);
        res.order_masses.push_back(outgoing_mass(source));
        for (std::size_t i = 0; i < res.trace.trace.values.size(); ++i)
            res.trace.trace.values[i] += sw.trace.values[i];
        res.report.orders = order - 1;
        res.report.term_norms.push_back(sw.norm);
        res.report.tail_bound = sw.norm * q / (1.0 - q);
        if (res.report.tail_bound < cfg.tol) {
            res.report.converged = true;
            break;
        }
        if (order == cfg.max_orders) break;  // honest: report stays unconverged
        PhaseSpaceField flux = streaming_inverse(source, pair.sigma, cfg.dom.R, cfg.march_step,
                                                 threads);
        for (double& v : flux.v) v = -v;
        source = scattering_source(flux, pair.kappa, threads);
    }
    res.trace.mass = std::accumulate(res.order_masses.begin(), res.order_masses.end(), 0.0);
    return res;
}

AlbedoDecomposition apply_albedo(const BeamSpec& beam, const CoefficientPair& pair,
                                 const AlbedoConfig& cfg) {
    cfg.validate();
    AlbedoDecomposition dec;
    dec.unscattered = unscattered_component(beam, pair, cfg);
    dec.single_scatter = single_scatter_component(beam, pair, cfg);

    const double sup_sp = sup_scattering_cross_section(pair.kappa, *cfg.dirs);
    if (cfg.multiple_enabled && sup_sp > 0.0) {
        MultipleResult mr = multiple_component(beam, pair, cfg);
        dec.multiple = std::move(mr.trace);
        dec.order_masses = {dec.unscattered.mass, dec.single_scatter.mass};
        dec.order_masses.insert(dec.order_masses.end(), mr.order_masses.begin(),
                                mr.order_masses.end());
        dec.multiple_report = std::move(mr.report);
    } else {
        dec.multiple.trace = zero_outflow(cfg);
        dec.multiple_report.converged = true;
        dec.order_masses = {dec.unscattered.mass, dec.single_scatter.mass};
    }
    dec.total_mass = std::accumulate(dec.order_masses.begin(), dec.order_masses.end(), 0.0);
    return dec;
}

namespace {

// Inverse-CDF table of the beam radius distribution (density 2 pi r g(r)).
std::vector<double> beam_radius_cdf(int knots, BeamProfile profile) {
    std::vector<double> cdf(knots + 1, 0.0);
    double acc = 0.0;
    const double h = 1.0 / knots;
    for (int i = 1; i <= knots; ++i) {
        const double r0 = (i - 1) * h, r1 = i * h;
        const double rm = 0.5 * (r0 + r1);
        acc += (r0 * profile_value(profile, r0) + 4.0 * rm * profile_value(profile, rm) +
                r1 * profile_value(profile, r1)) *
               h / 6.0;
        cdf[i] = acc;
    }
    for (double& c : cdf) c /= acc;
    cdf.back() = 1.0;
    return cdf;
}

double invert_cdf(const std::vector<double>& cdf, double u) {
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    const int i = std::max<int>(1, static_cast<int>(it - cdf.begin()));
    const int hi = std::min<int>(i, static_cast<int>(cdf.size()) - 1);
    const double c0 = cdf[hi - 1], c1 = cdf[hi];
    const double f = c1 > c0 ? (u - c0) / (c1 - c0) : 0.0;
    const double h = 1.0 / (static_cast<double>(cdf.size()) - 1.0);
    return (hi - 1 + f) * h;
}

}  // namespace

McResult mc_oracle(const BeamSpec& beam, const DirectionSet& dirs, const CoefficientPair& pair,
                   const DomainConfig& dom, long histories, std::uint64_t seed, int order_cap,
                   int batches, int threads) {
    dom.validate();
    if (dom.n != 3) throw RefusalError("flight oracle: only the three dimensional domain");
    if (pair.kappa.tabulated)
        throw RefusalError("flight oracle: needs the separable scattering form");
    if (beam.dir_index < 0 || beam.dir_index >= dirs.size())
        throw ConfigError("flight oracle: direction index out of range");
    if (histories < batches || batches < 2)
        throw ConfigError("flight oracle: need at least two batches and one history per batch");
    if (order_cap < 1) throw ConfigError("flight oracle: order cap must be positive");
    const int nt = threads > 0 ? threads : hardware_threads();

    const Vec3 v0 = dirs.dir[beam.dir_index];
    const Vec3 y0 = beam.a0 * dirs.e1[beam.dir_index] + beam.b0 * dirs.e2[beam.dir_index];
    const Vec3 e1 = dirs.e1[beam.dir_index], e2 = dirs.e2[beam.dir_index];
    const double R = dom.R, rho = dom.rho;
    const double step = 1.0 / 32.0;

    // Global flight majorant: grid sup of the amplitude plus a closed-form
    // scan, with headroom for off-node maxima. A majorant below the true sup
    // would bias flight lengths, so overshoot is the safe side.
    double maj = pair.kappa.amplitude.sup();
    {
        const int s = 48;
        for (int k = 0; k < s; ++k)
            for (int j = 0; j < s; ++j)
                for (int i = 0; i < s; ++i) {
                    const Vec3 x{-rho + (2.0 * rho * i) / (s - 1),
                                 -rho + (2.0 * rho * j) / (s - 1),
                                 -rho + (2.0 * rho * k) / (s - 1)};
                    maj = std::max(maj, scatter_amp_point(pair, x));
                }
        maj *= 1.05;
    }

    const auto cdf = beam_radius_cdf(256, beam.profile);
    const PhaseModel phase = pair.kappa.phase;
    const int bins = order_cap + 1;

    // Contiguous history ranges per batch; per-history generators keep the
    // tallies independent of the thread layout.
    std::vector<long> batch_lo(batches + 1, 0);
    for (int b = 0; b <= batches; ++b)
        batch_lo[b] = (histories * static_cast<long>(b)) / batches;

    std::vector<std::vector<double>> batch_bins(batches, std::vector<double>(bins, 0.0));
    parallel_for(static_cast<std::size_t>(batches), nt, [&](std::size_t b) {
        auto& local = batch_bins[b];
        for (long h = batch_lo[b]; h < batch_lo[b + 1]; ++h) {
            Rng rng(seed, static_cast<std::uint64_t>(h));
            const double r = beam.eps * invert_cdf(cdf, rng.uniform());
            const double phi = 2.0 * kPi * rng.uniform();
            Vec3 x = y0 + r * std::cos(phi) * e1 + r * std::sin(phi) * e2 - R * v0;
            Vec3 v = v0;
            double weight = 1.0;
            int order = 0;
            for (int guard = 0; guard < 100000; ++guard) {
                const auto chord = chord_interval(x, v, rho);
                bool collided = false;
                if (chord && chord->second > 0.0 && maj > 0.0) {
                    const double ta = std::max(chord->first, 0.0);
                    const double tb = chord->second;
                    double s = ta;
                    while (true) {
                        s += -std::log(1.0 - rng.uniform()) / maj;
                        if (s >= tb) break;
                        const Vec3 xs = x + s * v;
                        if (rng.uniform() * maj < scatter_amp_point(pair, xs)) {
                            // real collision: weight the flown leg, scatter
                            const double excess = absorption_line(pair, x + ta * v, xs, step) -
                                                  scatter_amp_line(pair, x + ta * v, xs, step);
                            weight *= std::exp(-excess);
                            const double mu = phase.sample_mu(rng.uniform(), 3);
                            const double az = 2.0 * kPi * rng.uniform();
                            const auto [f1, f2] = make_frame(v);
                            const double st = std::sqrt(std::max(0.0, 1.0 - mu * mu));
                            v = normalized(mu * v + st * (std::cos(az) * f1 + std::sin(az) * f2));
                            x = xs;
                            ++order;
                            collided = true;
                            break;
                        }
                    }
                    if (!collided) {
                        const double excess = absorption_line(pair, x + ta * v, x + tb * v, step) -
                                              scatter_amp_line(pair, x + ta * v, x + tb * v, step);
                        weight *= std::exp(-excess);
                    }
                }
                if (!collided) break;  // ray leaves the support ball, exits
            }
            local[std::min(order, order_cap)] += weight;
        }
    });

    McResult res;
    res.histories = histories;
    res.order_mass.assign(bins, 0.0);
    res.order_se.assign(bins, 0.0);
    std::vector<std::vector<double>> means(batches, std::vector<double>(bins, 0.0));
    std::vector<double> totals(batches, 0.0);
    for (int b = 0; b < batches; ++b) {
        const double nb = static_cast<double>(batch_lo[b + 1] - batch_lo[b]);
        for (int i = 0; i < bins; ++i) {
            means[b][i] = batch_bins[b][i] / nb;
            totals[b] += means[b][i];
        }
    }
    for (int i = 0; i < bins; ++i) {
        double m = 0.0;
        for (int b = 0; b < batches; ++b) m += means[b][i];
        m /= batches;
        double var = 0.0;
        for (int b = 0; b < batches; ++b) var += (means[b][i] - m) * (means[b][i] - m);
        res.order_mass[i] = m;
        res.order_se[i] = std::sqrt(var / (batches - 1.0) / batches);
        res.total_mass += m;
    }
    {
        double m = res.total_mass;
        double var = 0.0;
        for (int b = 0; b < batches; ++b) var += (totals[b] - m) * (totals[b] - m);
        res.total_se = std::sqrt(var / (batches - 1.0) / batches);
    }
    return res;
}

ColumnCheckResult beta_column_check(const std::vector<BeamSpec>& beams,
                                    const CoefficientPair& pair, const AlbedoConfig& cfg,
                                    double slack) {
    ColumnCheckResult res;
    const double sp = sup_scattering_cross_section(pair.kappa, *cfg.dirs);
    res.bound = cfg.dom.R * sp * sp;
    res.ok = true;
    for (const auto& beam : beams) {
        const MultipleResult mr = multiple_component(beam, pair, cfg);
        const double column =
            std::accumulate(mr.order_masses.begin(), mr.order_masses.end(), 0.0);
        res.columns.push_back(column);
        res.tail_bounds.push_back(mr.report.tail_bound);
        if (column > res.bound * (1.0 + slack)) res.ok = false;
    }
    return res;
}

}  // namespace albedo
