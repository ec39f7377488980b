#include "albedo/inversion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "albedo/errors.hpp"
#include "albedo/parallel.hpp"

namespace albedo {

namespace {

constexpr double kPi = 3.14159265358979323846;

}  // namespace

ExtrapolatedMass extrapolate_mass(double coarse, double mid, double fine) {
    ExtrapolatedMass out;
    out.mass = fine;
    const double d1 = coarse - mid;
    const double d2 = mid - fine;
    if (std::abs(d2) < 1e-14) return out;  // converged already
    const double ratio = d1 / d2;
    if (ratio <= 0.0) return out;
    const double rate = std::log2(ratio);
    if (rate < 0.2 || rate > 4.0) return out;  // differences carry no usable order
    out.mass = fine - d2 / (std::pow(2.0, rate) - 1.0);
    out.rate = rate;
    out.extrapolated = true;
    return out;
}

std::string RayRecovery::report() const {
    std::ostringstream os;
    os << "rays: " << sino.values.size() << ", excluded: " << flagged.size();
    for (const auto& f : flagged)
        os << "\n  slice " << f[0] << " angle " << f[1] << " offset " << f[2]
           << ": nonpositive extrapolated mass";
    return os.str();
}

RayRecovery recover_line_integrals(const CoefficientPair& pair, const DomainConfig& dom,
                                   int n_slices, int n_angles, int n_offsets,
                                   const BallisticSweepOptions& opt) {
    dom.validate();
    for (double w : opt.widths)
        if (!(w > 0.0)) throw ConfigError("beam sweep: widths must be positive");
    if (!(opt.widths[0] > opt.widths[1] && opt.widths[1] > opt.widths[2]))
        throw ConfigError("beam sweep: widths must decrease");

    RayRecovery out;
    out.sino = Sinogram::zeros(dom.rho, n_slices, n_angles, n_offsets);
    const int nt = opt.threads > 0 ? opt.threads : hardware_threads();

    std::vector<std::vector<std::array<int, 3>>> flagged(n_slices);
    std::vector<std::vector<double>> rates(n_slices);
    parallel_for(static_cast<std::size_t>(n_slices), nt, [&](std::size_t k) {
        for (int i = 0; i < n_angles; ++i) {
            const Vec3 d = out.sino.ray_direction(i);
            for (int j = 0; j < n_offsets; ++j) {
                const Vec3 p = out.sino.ray_point(static_cast<int>(k), i, j);
                double m[3];
                for (int w = 0; w < 3; ++w)
                    m[w] = ballistic_transmission(pair, p, d, opt.widths[w], opt.profile, dom.R,
                                                  opt.cross_radial, opt.cross_angular,
                                                  opt.sigma_step);
                const ExtrapolatedMass ex = extrapolate_mass(m[0], m[1], m[2]);
                if (!(ex.mass > 0.0)) {
                    flagged[k].push_back({static_cast<int>(k), i, j});
                    continue;
                }
                if (ex.extrapolated) rates[k].push_back(ex.rate);
                out.sino.at(static_cast<int>(k), i, j) = -std::log(ex.mass);
            }
        }
    });
    for (int k = 0; k < n_slices; ++k) {
        out.flagged.insert(out.flagged.end(), flagged[k].begin(), flagged[k].end());
        out.rates.insert(out.rates.end(), rates[k].begin(), rates[k].end());
    }
    return out;
}

SigmaRecovery recover_sigma(const Sinogram& sino, const ScalarField* truth, int threads) {
    FbpResult fbp = fbp_invert(sino, sino.n_slices, threads);
    SigmaRecovery out;
    out.field = std::move(fbp.field);
    out.warnings = std::move(fbp.warnings);
    if (!truth) return out;
    if (truth->npts != out.field.npts || truth->n != out.field.n)
        throw ConfigError("absorption recovery: truth grid does not match the estimate");

    out.has_truth = true;
    double num = 0.0, den = 0.0, sup = 0.0;
    for (std::size_t i = 0; i < truth->v.size(); ++i) {
        const double d = out.field.v[i] - truth->v[i];
        num += d * d;
        den += truth->v[i] * truth->v[i];
        sup = std::max(sup, std::abs(d));
    }
    out.err_l2 = den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
    out.err_sup = sup;
    const ScalarField diff = out.field.scaled_add(-1.0, *truth);
    const double truth_hneg = sobolev_norm(*truth, -0.5);
    const double diff_hneg = sobolev_norm(diff, -0.5);
    out.err_hneg = truth_hneg > 0.0 ? diff_hneg / truth_hneg : diff_hneg;
    return out;
}

CoefficientPair make_absorption_only(ScalarField sigma) {
    CoefficientPair pair;
    const int n = sigma.n;
    const double rho = sigma.rho;
    pair.sigma = std::move(sigma);
    pair.kappa = ScatteringField::separable(ScalarField::zeros(n, rho, 2), PhaseModel{});
    return pair;
}

std::string KernelRecovery::rejection_csv() const {
    std::ostringstream os;
    os << "beam,dir,x,y,z,mu,attenuation,reason\n";
    for (const auto& s : samples) {
        if (s.accepted) continue;
        os << s.beam << ',' << s.dir << ',' << s.vertex.x << ',' << s.vertex.y << ','
           << s.vertex.z << ',' << s.mu << ',' << s.attenuation << ',' << s.reason << '\n';
    }
    return os.str();
}

KernelRecovery recover_k(const std::vector<BeamSpec>& beams, const CoefficientPair& measured,
                         const CoefficientPair& sigma_est, const AlbedoConfig& cfg,
                         const KernelRecoveryOptions& opt) {
    cfg.validate();
    if (opt.vertex_samples < 1) throw ConfigError("kernel recovery: need vertex samples");
    if (opt.transverse_nodes < 2) throw ConfigError("kernel recovery: need transverse nodes");
    if (opt.grid_npts < 3) throw ConfigError("kernel recovery: output grid too small");
    if (!(opt.parallel_cut > 0.0)) throw ConfigError("kernel recovery: parallel cut must be positive");

    const DirectionSet& dirs = *cfg.dirs;
    const double R = cfg.dom.R, rho = cfg.dom.rho;

    KernelRecovery rec;
    rec.amplitude = ScalarField::zeros(3, rho, opt.grid_npts);
    std::vector<double> num(rec.amplitude.v.size(), 0.0);
    std::vector<double> den(rec.amplitude.v.size(), 0.0);

    for (std::size_t b = 0; b < beams.size(); ++b) {
        const BeamSpec& beam = beams[b];
        const auto single = single_scatter_component(beam, measured, cfg);
        const Vec3 v0 = dirs.dir[beam.dir_index];
        const Vec3 y0 = beam.a0 * dirs.e1[beam.dir_index] + beam.b0 * dirs.e2[beam.dir_index];
        const auto chord = chord_interval(y0, v0, rho);
        if (!chord) continue;

        const int nv = opt.vertex_samples, nd = dirs.size();
        std::vector<BrokenRaySample> local(static_cast<std::size_t>(nv) * nd);
        parallel_for(local.size(), cfg.resolved_threads(), [&](std::size_t idx) {
            const int s = static_cast<int>(idx) / nd;
            const int j = static_cast<int>(idx) % nd;
            const double t = chord->first +
                             (s + 0.5) * (chord->second - chord->first) / nv;
            const Vec3 z = y0 + t * v0;
            const Vec3& vj = dirs.dir[j];

            BrokenRaySample smp;
            smp.beam = static_cast<int>(b);
            smp.dir = j;
            smp.vertex = z;
            smp.mu = dot(v0, vj);

            const Vec3 axis_perp = perp_part(v0, vj);
            const double sina = norm(axis_perp);
            if (sina <= opt.parallel_cut) {
                smp.reason = "parallel";
                local[idx] = smp;
                return;
            }
            const Vec3 us = axis_perp / sina;
            const Vec3 nhat = normalized(cross(vj, us));
            const Vec3 foot = z - dot(z, vj) * vj;
            const double tz = dot(z, vj);

            smp.attenuation =
                broken_ray_attenuation(sigma_est, foot, tz, vj, v0, R, cfg.sigma_step);
            if (smp.attenuation < opt.min_attenuation) {
                smp.reason = "opaque";
                local[idx] = smp;
                return;
            }

            // Midpoint rule across the projected beam band; the integrand is
            // smooth and vanishes with all derivatives at the band edges.
            const int q = opt.transverse_nodes;
            const double dq = 2.0 * beam.eps / q;
            double integral = 0.0;
            for (int mnode = 0; mnode < q; ++mnode) {
                const double d = -beam.eps + (mnode + 0.5) * dq;
                integral += single.trace.eval(j, foot + d * nhat);
            }
            integral *= dq;

            smp.value = sina * integral / smp.attenuation;
            smp.accepted = true;
            local[idx] = smp;
        });

        for (const auto& smp : local) {
            if (!smp.accepted) {
                if (smp.reason == "parallel") ++rec.rejected_parallel;
                else ++rec.rejected_opacity;
                rec.samples.push_back(smp);
                continue;
            }
            rec.samples.push_back(smp);
            const auto& g = rec.amplitude;
            const double h = g.h();
            const int ci = std::clamp(static_cast<int>(std::lround((smp.vertex.x + rho) / h)), 0,
                                      g.npts - 1);
            const int cj = std::clamp(static_cast<int>(std::lround((smp.vertex.y + rho) / h)), 0,
                                      g.npts - 1);
            const int ck = std::clamp(static_cast<int>(std::lround((smp.vertex.z + rho) / h)), 0,
                                      g.npts - 1);
            const std::size_t cell = g.index(ci, cj, ck);
            const double dist = norm(smp.vertex - g.node(ci, cj, ck));
            const double wt = dirs.weight[smp.dir] / (dist + 0.1 * h);
            num[cell] += wt * smp.value;
            den[cell] += wt;
        }
    }

    for (std::size_t i = 0; i < num.size(); ++i)
        if (den[i] > 0.0) rec.amplitude.v[i] = 4.0 * kPi * num[i] / den[i];
    return rec;
}

}  // namespace albedo
