#include "albedo/transport.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "albedo/errors.hpp"
#include "albedo/parallel.hpp"

namespace albedo {

Lattice Lattice::covering(const DomainConfig& dom, int npts, double margin) {
    dom.validate();
    if (npts < 5) throw ConfigError("lattice: need at least 5 nodes per axis");
    if (!(margin > 1.0)) throw ConfigError("lattice: margin must exceed 1");
    Lattice lat;
    lat.n = dom.n;
    lat.L = dom.rho * margin;
    lat.npts = npts;
    if (lat.L * std::sqrt(static_cast<double>(dom.n)) >= dom.R)
        throw ConfigError("lattice: cube diagonal must stay inside the domain radius");
    return lat;
}

PhaseSpaceField PhaseSpaceField::zeros(const Lattice& lat,
                                       std::shared_ptr<const DirectionSet> dirs) {
    PhaseSpaceField f;
    f.lat = lat;
    f.dirs = std::move(dirs);
    f.v.assign(static_cast<std::size_t>(f.dirs->size()) * lat.size(), 0.0);
    return f;
}

double PhaseSpaceField::value(int d, const Vec3& x) const {
    const double hh = lat.h();
    const double ux = (x.x + lat.L) / hh;
    const double uy = (x.y + lat.L) / hh;
    if (ux < 0.0 || uy < 0.0 || ux > lat.npts - 1 || uy > lat.npts - 1) return 0.0;
    int i = std::min(static_cast<int>(ux), lat.npts - 2);
    int j = std::min(static_cast<int>(uy), lat.npts - 2);
    const double fx = ux - i, fy = uy - j;
    const double* base = v.data() + static_cast<std::size_t>(d) * lat.size();
    auto plane = [&](int k) {
        const double v00 = base[lat.index(i, j, k)], v10 = base[lat.index(i + 1, j, k)];
        const double v01 = base[lat.index(i, j + 1, k)], v11 = base[lat.index(i + 1, j + 1, k)];
        return (1 - fx) * ((1 - fy) * v00 + fy * v01) + fx * ((1 - fy) * v10 + fy * v11);
    };
    if (lat.n == 2) return plane(0);
    const double uz = (x.z + lat.L) / hh;
    if (uz < 0.0 || uz > lat.npts - 1) return 0.0;
    int k = std::min(static_cast<int>(uz), lat.npts - 2);
    const double fz = uz - k;
    return (1 - fz) * plane(k) + fz * plane(k + 1);
}

PhaseSpaceField extend_inflow(const BoundaryDistribution& f_minus, const ScalarField& sigma,
                              const Lattice& lat, double R, double sigma_step, int threads) {
    PhaseSpaceField out = PhaseSpaceField::zeros(lat, f_minus.dirs);
    const DirectionSet& dirs = *out.dirs;
    const int nz = lat.n == 3 ? lat.npts : 1;
    parallel_for(dirs.size(), threads, [&](std::size_t d) {
        const Vec3 vh = dirs.dir[d];
        for (int k = 0; k < nz; ++k)
            for (int j = 0; j < lat.npts; ++j)
                for (int i = 0; i < lat.npts; ++i) {
                    const Vec3 x = lat.node(i, j, k);
                    const double ax = dot(x, vh);
                    const Vec3 y = x - ax * vh;
                    const double v0 = f_minus.value(static_cast<int>(d), y);
                    if (v0 == 0.0) continue;
                    const double att = line_integral(sigma, y - R * vh, x, sigma_step);
                    out.at(static_cast<int>(d), lat.index(i, j, k)) = v0 * std::exp(-att);
                }
    });
    return out;
}

namespace {

// dense scattering matrix: row d_out, column d_in, entries w_in * p
std::vector<double> phase_matrix(const PhaseModel& phase, const DirectionSet& dirs, int n) {
    const int m = dirs.size();
    std::vector<double> P(static_cast<std::size_t>(m) * m);
    for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b)
            P[static_cast<std::size_t>(a) * m + b] =
                dirs.weight[b] * phase.density(dot(dirs.dir[b], dirs.dir[a]), n);
    return P;
}

}  // namespace

PhaseSpaceField scattering_source(const PhaseSpaceField& f, const ScatteringField& kappa,
                                  int threads) {
    PhaseSpaceField out = PhaseSpaceField::zeros(f.lat, f.dirs);
    const DirectionSet& dirs = *f.dirs;
    const int m = dirs.size();
    const std::size_t nn = f.lat.size();
    const int nz = f.lat.n == 3 ? f.lat.npts : 1;

    if (!kappa.tabulated) {
        const std::vector<double> P = phase_matrix(kappa.phase, dirs, f.lat.n);
        parallel_for(nn, threads, [&](std::size_t node) {
            const int i = static_cast<int>(node) % f.lat.npts;
            const int j = (static_cast<int>(node) / f.lat.npts) % f.lat.npts;
            const int k = static_cast<int>(node) / (f.lat.npts * f.lat.npts);
            if (k >= nz) return;
            const double amp = kappa.amplitude.value(f.lat.node(i, j, k));
            if (amp == 0.0) return;
            for (int a = 0; a < m; ++a) {
                double s = 0.0;
                const double* row = P.data() + static_cast<std::size_t>(a) * m;
                for (int b = 0; b < m; ++b) s += row[b] * f.at(b, node);
                out.at(a, node) = amp * s;
            }
        });
        return out;
    }

    parallel_for(nn, threads, [&](std::size_t node) {
        const int i = static_cast<int>(node) % f.lat.npts;
        const int j = (static_cast<int>(node) / f.lat.npts) % f.lat.npts;
        const int k = static_cast<int>(node) / (f.lat.npts * f.lat.npts);
        if (k >= nz) return;
        const Vec3 x = f.lat.node(i, j, k);
        for (int a = 0; a < m; ++a) {
            double s = 0.0;
            for (int b = 0; b < m; ++b)
                s += dirs.weight[b] * kappa.value(x, b, a, dirs) * f.at(b, node);
            out.at(a, node) = s;
        }
    });
    return out;
}

namespace {

double clip_radius(const Lattice& lat) {
    return lat.L * std::sqrt(static_cast<double>(lat.n));
}

// positive flux streamed from a lattice source at a single point
double stream_flux_at(const PhaseSpaceField& source, const ScalarField& sigma, int d,
                      const Vec3& x, const Vec3& vh, double march_step) {
    const auto chord = chord_interval(x, -1.0 * vh, clip_radius(source.lat));
    if (!chord) return 0.0;
    const double t0 = std::max(0.0, chord->first);
    const double t1 = chord->second;
    if (t1 <= t0) return 0.0;
    const int steps = std::max(2, static_cast<int>(std::ceil((t1 - t0) / march_step)));
    const double h = (t1 - t0) / steps;
    double att = 0.0, acc = 0.0;
    for (int s = 0; s < steps; ++s) {
        const double tm = t0 + (s + 0.5) * h;
        const Vec3 p = x - tm * vh;
        const double sg = sigma.value(p);
        acc += std::exp(-(att + 0.5 * h * sg)) * source.value(d, p) * h;
        att += h * sg;
    }
    return acc;
}

}  // namespace

PhaseSpaceField streaming_inverse(const PhaseSpaceField& source, const ScalarField& sigma,
                                  double R, double march_step, int threads) {
    (void)R;
    PhaseSpaceField out = PhaseSpaceField::zeros(source.lat, source.dirs);
    const DirectionSet& dirs = *source.dirs;
    const Lattice& lat = source.lat;
    const int nz = lat.n == 3 ? lat.npts : 1;
    parallel_for(dirs.size(), threads, [&](std::size_t d) {
        const Vec3 vh = dirs.dir[d];
        for (int k = 0; k < nz; ++k)
            for (int j = 0; j < lat.npts; ++j)
                for (int i = 0; i < lat.npts; ++i)
                    out.at(static_cast<int>(d), lat.index(i, j, k)) = -stream_flux_at(
                        source, sigma, static_cast<int>(d), lat.node(i, j, k), vh, march_step);
    });
    return out;
}

double streaming_inverse_point(const std::function<double(const Vec3&)>& g,
                               const ScalarField& sigma, const Vec3& x, const Vec3& vhat,
                               double R, double step) {
    const Vec3 vh = normalized(vhat);
    const double t1 = R + dot(x, vh);
    if (t1 <= 0.0) return 0.0;
    const int steps = std::max(2, static_cast<int>(std::ceil(t1 / step)));
    const double h = t1 / steps;
    double att = 0.0, acc = 0.0;
    for (int s = 0; s < steps; ++s) {
        const double tm = (s + 0.5) * h;
        const Vec3 p = x - tm * vh;
        const double sg = sigma.value(p);
        acc += std::exp(-(att + 0.5 * h * sg)) * g(p) * h;
        att += h * sg;
    }
    return -acc;
}

PhaseSpaceField collision_step(const PhaseSpaceField& f, const CoefficientPair& pair,
                               double R, double march_step, int threads) {
    return streaming_inverse(scattering_source(f, pair.kappa, threads), pair.sigma, R,
                             march_step, threads);
}

SweepResult sweep_inflow(const BoundaryDistribution& f_minus, const ScalarField& sigma,
                         const DomainConfig& dom, const EvalGeometry& geom, int threads) {
    dom.validate();
    const DirectionSet& dirs = *geom.dirs;
    const DiscRule& disc = *geom.disc;
    SweepResult res;
    res.trace = BoundaryDistribution::zero(+1, geom.dirs, geom.disc);
    const double clip = sigma.rho + 2.0 * sigma.h();
    std::vector<double> parts(dirs.size(), 0.0);
    parallel_for(dirs.size(), threads, [&](std::size_t d) {
        const Vec3 vh = dirs.dir[d];
        double acc = 0.0;
        for (int q = 0; q < disc.size(); ++q) {
            const Vec3 y = disc.point(dirs, static_cast<int>(d), q);
            const double v0 = f_minus.value(static_cast<int>(d), y);
            if (v0 == 0.0) continue;
            const auto chord = chord_interval(y, vh, clip);
            if (!chord) {
                acc += disc.w[q] * std::abs(v0) * 2.0 * dom.R;
                res.trace.at(static_cast<int>(d), q) = v0;
                continue;
            }
            const double ta = chord->first, tb = chord->second;
            const int steps =
                std::max(2, static_cast<int>(std::ceil((tb - ta) / geom.march_step)));
            const double h = (tb - ta) / steps;
            double att = 0.0, seg = 0.0, prev = 1.0;
            for (int s = 0; s < steps; ++s) {
                att += h * sigma.value(y + (ta + (s + 0.5) * h) * vh);
                const double cur = std::exp(-att);
                seg += 0.5 * h * (prev + cur);
                prev = cur;
            }
            const double exit_att = prev;
            acc += disc.w[q] * std::abs(v0) *
                   ((ta + dom.R) + seg + (dom.R - tb) * exit_att);
            res.trace.at(static_cast<int>(d), q) = v0 * exit_att;
        }
        parts[d] = dirs.weight[d] * acc;
    });
    for (double p : parts) res.norm += p;
    return res;
}

SweepResult sweep_streamed(const PhaseSpaceField& source, const ScalarField& sigma,
                           const DomainConfig& dom, const EvalGeometry& geom, int threads) {
    dom.validate();
    const DirectionSet& dirs = *geom.dirs;
    const DiscRule& disc = *geom.disc;
    SweepResult res;
    res.trace = BoundaryDistribution::zero(+1, geom.dirs, geom.disc);
    const double clip = clip_radius(source.lat);
    std::vector<double> parts(dirs.size(), 0.0);
    parallel_for(dirs.size(), threads, [&](std::size_t d) {
        const Vec3 vh = dirs.dir[d];
        double acc = 0.0;
        for (int q = 0; q < disc.size(); ++q) {
            const Vec3 y = disc.point(dirs, static_cast<int>(d), q);
            const auto chord = chord_interval(y, vh, clip);
            if (!chord) continue;
            const double ta = chord->first;
            const double tb = std::min(chord->second, dom.R);
            if (tb <= ta) continue;
            const int steps =
                std::max(2, static_cast<int>(std::ceil((tb - ta) / geom.march_step)));
            const double h = (tb - ta) / steps;
            double flux = 0.0, seg = 0.0;
            for (int s = 0; s < steps; ++s) {
                const Vec3 p = y + (ta + (s + 0.5) * h) * vh;
                const double sg = sigma.value(p);
                const double next =
                    flux * std::exp(-sg * h) +
                    source.value(static_cast<int>(d), p) * h * std::exp(-0.5 * sg * h);
                seg += 0.5 * h * (std::abs(flux) + std::abs(next));
                flux = next;
            }
            acc += disc.w[q] * (seg + std::max(0.0, dom.R - tb) * std::abs(flux));
            res.trace.at(static_cast<int>(d), q) = flux;
        }
        parts[d] = dirs.weight[d] * acc;
    });
    for (double p : parts) res.norm += p;
    return res;
}

double field_norm_O(const PhaseSpaceField& f, const DomainConfig& dom,
                    const EvalGeometry& geom, int threads) {
    return integrate_O(
        dom, *geom.dirs, *geom.disc, geom.n_axial,
        [&](const Vec3& x, int d) { return std::abs(f.value(d, x)); }, threads);
}

TransportSolution solve_source_iteration(const BoundaryDistribution& f_minus,
                                         const CoefficientPair& pair, const DomainConfig& dom,
                                         const Lattice& lat, const EvalGeometry& geom,
                                         double tol, int max_orders, int threads,
                                         bool keep_order_traces) {
    dom.validate();
    if (f_minus.dirs.get() != geom.dirs.get())
        throw ConfigError("solve: inflow and evaluation geometry use different direction sets");
    const SubcriticalityReport sub = check_subcritical(pair, dom, *geom.dirs);
    if (!sub.subcritical)
        throw RefusalError("solve: no subcriticality certificate (product = " +
                           std::to_string(sub.product) + ")");
    const double q = sub.contraction;

    TransportSolution sol;
    sol.report.contraction = q;

    sol.total = extend_inflow(f_minus, pair.sigma, lat, dom.R, geom.sigma_step, threads);
    SweepResult sw = sweep_inflow(f_minus, pair.sigma, dom, geom, threads);
    sol.report.term_norms.push_back(sw.norm);
    sol.outflow = sw.trace;
    if (keep_order_traces) sol.order_traces.push_back(sw.trace);

    const double sup_sp = sup_scattering_cross_section(pair.kappa, *geom.dirs);
    if (sup_sp == 0.0) {
        sol.report.orders = 0;
        sol.report.tail_bound = 0.0;
        sol.report.converged = true;
        return sol;
    }

    PhaseSpaceField source = scattering_source(sol.total, pair.kappa, threads);
    for (int m = 1; m <= max_orders; ++m) {
        PhaseSpaceField flux = streaming_inverse(source, pair.sigma, dom.R, geom.march_step, threads);
        for (double& x : flux.v) x = -x;  // physical flux of this generation
        SweepResult swm = sweep_streamed(source, pair.sigma, dom, geom, threads);
        sol.report.term_norms.push_back(swm.norm);
        sol.report.orders = m;
        for (std::size_t i = 0; i < sol.total.v.size(); ++i) sol.total.v[i] += flux.v[i];
        for (std::size_t i = 0; i < sol.outflow.values.size(); ++i)
            sol.outflow.values[i] += swm.trace.values[i];
        if (keep_order_traces) sol.order_traces.push_back(swm.trace);

        sol.report.tail_bound = swm.norm * q / (1.0 - q);
        if (sol.report.tail_bound < tol) {
            sol.report.converged = true;
            return sol;
        }
        source = scattering_source(flux, pair.kappa, threads);
    }
    std::ostringstream msg;
    msg << "solve: series tail " << sol.report.tail_bound << " above tolerance " << tol
        << " after " << max_orders << " collision orders";
    throw ToleranceError(msg.str());
}

double absorbed_mass(const PhaseSpaceField& f, const CoefficientPair& pair, int threads) {
    const Lattice& lat = f.lat;
    const DirectionSet& dirs = *f.dirs;
    const int m = dirs.size();
    const int nz = lat.n == 3 ? lat.npts : 1;
    const double cell = lat.n == 3 ? lat.h() * lat.h() * lat.h() : lat.h() * lat.h();

    // separable kernels: sigma_p(x, d) = amplitude(x) * row_sum(d)
    std::vector<double> row(m, 0.0);
    if (!pair.kappa.tabulated)
        for (int a = 0; a < m; ++a)
            for (int b = 0; b < m; ++b)
                row[a] += dirs.weight[b] *
                          pair.kappa.phase.density(dot(dirs.dir[a], dirs.dir[b]), lat.n);

    return parallel_sum(lat.size(), threads, [&](std::size_t node) {
        const int i = static_cast<int>(node) % lat.npts;
        const int j = (static_cast<int>(node) / lat.npts) % lat.npts;
        const int k = static_cast<int>(node) / (lat.npts * lat.npts);
        if (k >= nz) return 0.0;
        const Vec3 x = lat.node(i, j, k);
        const double sg = pair.sigma.value(x);
        double s = 0.0;
        for (int d = 0; d < m; ++d) {
            const double sp = pair.kappa.tabulated
                                  ? scattering_cross_section(pair.kappa, x, d, dirs)
                                  : pair.kappa.amplitude.value(x) * row[d];
            s += dirs.weight[d] * (sg - sp) * f.at(d, node);
        }
        return cell * s;
    });
}

}  // namespace albedo
