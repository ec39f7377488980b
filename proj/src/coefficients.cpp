#include "albedo/coefficients.hpp"

#include <algorithm>
#include <cmath>

#include "albedo/errors.hpp"
#include "albedo/rng.hpp"

namespace albedo {

namespace {
constexpr double kPi = 3.14159265358979323846;
}  // namespace

double bump_profile(double t) {
    // C-infinity bump, 1 at the center, identically 0 for t >= 1
    const double t2 = t * t;
    if (t2 >= 1.0) return 0.0;
    return std::exp(1.0 - 1.0 / (1.0 - t2));
}

ScalarField ScalarField::zeros(int n, double rho, int npts) {
    if (n != 2 && n != 3) throw ConfigError("scalar field: dimension must be 2 or 3");
    if (npts < 2) throw ConfigError("scalar field: need at least 2 nodes per axis");
    if (!(rho > 0.0)) throw ConfigError("scalar field: support radius must be positive");
    ScalarField s;
    s.n = n;
    s.rho = rho;
    s.npts = npts;
    s.v.assign(static_cast<std::size_t>(npts) * npts * (n == 3 ? npts : 1), 0.0);
    return s;
}

double ScalarField::value(const Vec3& x) const {
    const double hh = h();
    const double ux = (x.x + rho) / hh;
    const double uy = (x.y + rho) / hh;
    if (ux < 0.0 || uy < 0.0 || ux > npts - 1 || uy > npts - 1) return 0.0;
    int i = std::min(static_cast<int>(ux), npts - 2);
    int j = std::min(static_cast<int>(uy), npts - 2);
    const double fx = ux - i, fy = uy - j;
    if (n == 2) {
        if (std::abs(x.z) > 0.0) return 0.0;
        const double v00 = v[index(i, j, 0)], v10 = v[index(i + 1, j, 0)];
        const double v01 = v[index(i, j + 1, 0)], v11 = v[index(i + 1, j + 1, 0)];
        return (1 - fx) * ((1 - fy) * v00 + fy * v01) + fx * ((1 - fy) * v10 + fy * v11);
    }
    const double uz = (x.z + rho) / hh;
    if (uz < 0.0 || uz > npts - 1) return 0.0;
    int k = std::min(static_cast<int>(uz), npts - 2);
    const double fz = uz - k;
    double c[2];
    for (int dk = 0; dk < 2; ++dk) {
        const double v00 = v[index(i, j, k + dk)], v10 = v[index(i + 1, j, k + dk)];
        const double v01 = v[index(i, j + 1, k + dk)], v11 = v[index(i + 1, j + 1, k + dk)];
        c[dk] = (1 - fx) * ((1 - fy) * v00 + fy * v01) + fx * ((1 - fy) * v10 + fy * v11);
    }
    return (1 - fz) * c[0] + fz * c[1];
}

double ScalarField::sup() const {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

double ScalarField::min_node() const {
    double m = v.empty() ? 0.0 : v[0];
    for (double x : v) m = std::min(m, x);
    return m;
}

ScalarField& ScalarField::operator+=(const ScalarField& o) {
    if (o.npts != npts || o.n != n) throw ConfigError("scalar field: grid mismatch in sum");
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += o.v[i];
    return *this;
}

ScalarField ScalarField::scaled_add(double s, const ScalarField& o) const {
    if (o.npts != npts || o.n != n) throw ConfigError("scalar field: grid mismatch in sum");
    ScalarField out = *this;
    for (std::size_t i = 0; i < v.size(); ++i) out.v[i] += s * o.v[i];
    return out;
}

double line_integral(const ScalarField& f, const Vec3& p0, const Vec3& p1, double max_step) {
    const Vec3 d = p1 - p0;
    const double len = norm(d);
    if (len == 0.0) return 0.0;
    const Vec3 u = d / len;
    // only the part of the segment inside the support ball contributes
    const double clip = f.rho + 2.0 * f.h();
    const auto chord = chord_interval(p0, u, clip);
    if (!chord) return 0.0;
    const double t0 = std::max(0.0, chord->first);
    const double t1 = std::min(len, chord->second);
    if (t1 <= t0) return 0.0;
    int m = std::max(2, static_cast<int>(std::ceil((t1 - t0) / max_step)));
    if (m % 2) ++m;
    const double hh = (t1 - t0) / m;
    double s = f.value(p0 + t0 * u) + f.value(p0 + t1 * u);
    for (int i = 1; i < m; ++i)
        s += (i % 2 ? 4.0 : 2.0) * f.value(p0 + (t0 + i * hh) * u);
    return s * hh / 3.0;
}

double PhaseModel::density(double mu, int n) const {
    mu = std::clamp(mu, -1.0, 1.0);
    if (n == 2) {
        switch (type) {
            case PhaseType::Isotropic:
                return 1.0 / (2.0 * kPi);
            case PhaseType::HenyeyGreenstein:
                return (1.0 - g * g) / (2.0 * kPi * (1.0 + g * g - 2.0 * g * mu));
            case PhaseType::ForwardLobe:
                return (1.0 + mu) * (1.0 + mu) / (3.0 * kPi);
        }
    }
    switch (type) {
        case PhaseType::Isotropic:
            return 1.0 / (4.0 * kPi);
        case PhaseType::HenyeyGreenstein: {
            const double d = 1.0 + g * g - 2.0 * g * mu;
            return (1.0 - g * g) / (4.0 * kPi * d * std::sqrt(d));
        }
        case PhaseType::ForwardLobe:
            return 3.0 * (1.0 + mu) * (1.0 + mu) / (16.0 * kPi);
    }
    return 0.0;
}

double PhaseModel::sample_mu(double u, int n) const {
    if (n != 3) throw RefusalError("phase sampling: only the 3-d sphere is supported");
    switch (type) {
        case PhaseType::Isotropic:
            return 2.0 * u - 1.0;
        case PhaseType::HenyeyGreenstein: {
            if (std::abs(g) < 1e-12) return 2.0 * u - 1.0;
            const double t = (1.0 - g * g) / (1.0 - g + 2.0 * g * u);
            return (1.0 + g * g - t * t) / (2.0 * g);
        }
        case PhaseType::ForwardLobe:
            // CDF is ((1 + mu)/2)^3
            return 2.0 * std::cbrt(u) - 1.0;
    }
    return 0.0;
}

ScatteringField ScatteringField::separable(ScalarField amplitude, PhaseModel phase) {
    ScatteringField k;
    k.tabulated = false;
    k.amplitude = std::move(amplitude);
    k.phase = phase;
    return k;
}

int ScatteringField::cell_of(const Vec3& x) const {
    const double rho = amplitude.rho;
    const double h = 2.0 * rho / table_cells;
    const int i = static_cast<int>(std::floor((x.x + rho) / h));
    const int j = static_cast<int>(std::floor((x.y + rho) / h));
    const int k = amplitude.n == 3 ? static_cast<int>(std::floor((x.z + rho) / h)) : 0;
    const int nz = amplitude.n == 3 ? table_cells : 1;
    if (i < 0 || j < 0 || k < 0 || i >= table_cells || j >= table_cells || k >= nz) return -1;
    return (k * table_cells + j) * table_cells + i;
}

double ScatteringField::value(const Vec3& x, int d_in, int d_out,
                              const DirectionSet& dirs) const {
    if (!tabulated)
        return amplitude.value(x) * phase.density(dot(dirs.dir[d_in], dirs.dir[d_out]), amplitude.n);
    if (table_dirs->size() != dirs.size())
        throw ConfigError("tabulated kernel: direction set does not match the table");
    const int c = cell_of(x);
    if (c < 0) return 0.0;
    const std::size_t m = static_cast<std::size_t>(dirs.size());
    return table[(static_cast<std::size_t>(c) * m + d_in) * m + d_out];
}

double scattering_cross_section(const ScatteringField& k, const Vec3& x, int d_in,
                                const DirectionSet& dirs) {
    double s = 0.0;
    for (int d = 0; d < dirs.size(); ++d) s += dirs.weight[d] * k.value(x, d_in, d, dirs);
    return s;
}

namespace {
// max over incoming nodes of the quadrature row sum of the phase density
double max_phase_row(const PhaseModel& p, const DirectionSet& dirs, int n) {
    double worst = 0.0;
    for (int a = 0; a < dirs.size(); ++a) {
        double s = 0.0;
        for (int b = 0; b < dirs.size(); ++b)
            s += dirs.weight[b] * p.density(dot(dirs.dir[a], dirs.dir[b]), n);
        worst = std::max(worst, s);
    }
    return worst;
}
}  // namespace

double sup_scattering_cross_section(const ScatteringField& k, const DirectionSet& dirs) {
    if (!k.tabulated) return k.amplitude.sup() * max_phase_row(k.phase, dirs, k.amplitude.n);
    const std::size_t m = static_cast<std::size_t>(dirs.size());
    const std::size_t cells = k.table.size() / (m * m);
    double worst = 0.0;
    for (std::size_t c = 0; c < cells; ++c)
        for (std::size_t a = 0; a < m; ++a) {
            double s = 0.0;
            for (std::size_t b = 0; b < m; ++b)
                s += dirs.weight[b] * k.table[(c * m + a) * m + b];
            worst = std::max(worst, s);
        }
    return worst;
}

AdmissibilityReport check_admissible(const CoefficientPair& pair, const DirectionSet& dirs) {
    AdmissibilityReport rep;
    rep.sup_sigma = pair.sigma.sup();
    rep.sup_sigma_p = sup_scattering_cross_section(pair.kappa, dirs);
    if (pair.sigma.min_node() < -1e-12) rep.violations.push_back("absorption has negative nodes");
    if (!pair.kappa.tabulated) {
        if (pair.kappa.amplitude.min_node() < -1e-12)
            rep.violations.push_back("scattering amplitude has negative nodes");
    } else {
        for (double t : pair.kappa.table)
            if (t < -1e-12) {
                rep.violations.push_back("scattering table has negative entries");
                break;
            }
    }
    // support confinement holds by construction; re-verify the absorption grid
    const ScalarField& s = pair.sigma;
    const int nz = s.n == 3 ? s.npts : 1;
    for (int k = 0; k < nz && rep.violations.empty(); ++k)
        for (int j = 0; j < s.npts; ++j)
            for (int i = 0; i < s.npts; ++i)
                if (norm(s.node(i, j, k)) > s.rho && s.v[s.index(i, j, k)] != 0.0) {
                    rep.violations.push_back("absorption not confined to the support ball");
                    k = nz;
                    j = s.npts;
                    break;
                }
    rep.ok = rep.violations.empty();
    return rep;
}

SubcriticalityReport check_subcritical(const CoefficientPair& pair, const DomainConfig& dom,
                                       const DirectionSet& dirs) {
    dom.validate();
    const AdmissibilityReport adm = check_admissible(pair, dirs);
    if (!adm.ok) throw RefusalError("subcriticality check requires admissible coefficients: " +
                                    adm.violations.front());
    SubcriticalityReport rep;
    rep.product = 2.0 * dom.R * adm.sup_sigma_p;
    rep.small_product = rep.product < 1.0;

    // pointwise sigma >= sigma_p, checked against the worst incoming node
    bool dominated = true;
    if (!pair.kappa.tabulated) {
        const double row = max_phase_row(pair.kappa.phase, dirs, pair.sigma.n);
        const ScalarField& s = pair.sigma;
        const int nz = s.n == 3 ? s.npts : 1;
        for (int k = 0; k < nz && dominated; ++k)
            for (int j = 0; j < s.npts && dominated; ++j)
                for (int i = 0; i < s.npts; ++i) {
                    const Vec3 x = s.node(i, j, k);
                    if (s.v[s.index(i, j, k)] -
                            pair.kappa.amplitude.value(x) * row < -1e-10) {
                        dominated = false;
                        break;
                    }
                }
    } else {
        const std::size_t m = static_cast<std::size_t>(dirs.size());
        const std::size_t cells = pair.kappa.table.size() / (m * m);
        const int per = pair.kappa.table_cells;
        const double h = 2.0 * pair.kappa.amplitude.rho / per;
        for (std::size_t c = 0; c < cells && dominated; ++c) {
            double worst = 0.0;
            for (std::size_t a = 0; a < m; ++a) {
                double srow = 0.0;
                for (std::size_t b = 0; b < m; ++b)
                    srow += dirs.weight[b] * pair.kappa.table[(c * m + a) * m + b];
                worst = std::max(worst, srow);
            }
            const int i = static_cast<int>(c) % per;
            const int j = (static_cast<int>(c) / per) % per;
            const int kz = static_cast<int>(c) / (per * per);
            const Vec3 x{-pair.kappa.amplitude.rho + (i + 0.5) * h,
                         -pair.kappa.amplitude.rho + (j + 0.5) * h,
                         pair.sigma.n == 3 ? -pair.kappa.amplitude.rho + (kz + 0.5) * h : 0.0};
            if (pair.sigma.value(x) - worst < -1e-10) dominated = false;
        }
    }
    rep.absorption_dominated = dominated;

    if (rep.absorption_dominated) {
        rep.subcritical = true;
        rep.contraction = 1.0 - std::exp(-rep.product);
        rep.certificate = "absorption-dominated";
    } else if (rep.small_product) {
        rep.subcritical = true;
        rep.contraction = rep.product;
        rep.certificate = "small-product";
    } else {
        rep.subcritical = false;
        rep.contraction = 1.0;
        rep.certificate = "none";
    }
    return rep;
}

double absorption_point(const CoefficientPair& pair, const Vec3& x) {
    return pair.sigma_exact ? pair.sigma_exact(x) : pair.sigma.value(x);
}

double absorption_line(const CoefficientPair& pair, const Vec3& p0, const Vec3& p1,
                       double step) {
    if (pair.sigma_line_exact) return pair.sigma_line_exact(p0, p1);
    return line_integral(pair.sigma, p0, p1, step);
}

double scatter_amp_point(const CoefficientPair& pair, const Vec3& x) {
    if (pair.scatter_amp_exact) return pair.scatter_amp_exact(x);
    if (pair.kappa.tabulated)
        throw ConfigError("amplitude access: tabulated kernels have no scalar amplitude");
    return pair.kappa.amplitude.value(x);
}

double scatter_amp_line(const CoefficientPair& pair, const Vec3& p0, const Vec3& p1,
                        double step) {
    if (pair.scatter_amp_line_exact) return pair.scatter_amp_line_exact(p0, p1);
    if (pair.kappa.tabulated)
        throw ConfigError("amplitude access: tabulated kernels have no scalar amplitude");
    return line_integral(pair.kappa.amplitude, p0, p1, step);
}

namespace {
double get_param(const std::map<std::string, double>& p, const std::string& key, double dflt) {
    const auto it = p.find(key);
    return it == p.end() ? dflt : it->second;
}

// segment integral of scale * indicator(|x| <= rb)
std::function<double(const Vec3&, const Vec3&)> indicator_line(double scale, double rb) {
    return [scale, rb](const Vec3& p0, const Vec3& p1) {
        const Vec3 d = p1 - p0;
        const double len = norm(d);
        if (len == 0.0 || scale == 0.0) return 0.0;
        const auto c = chord_interval(p0, d / len, rb);
        if (!c) return 0.0;
        const double t0 = std::clamp(c->first, 0.0, len);
        const double t1 = std::clamp(c->second, 0.0, len);
        return scale * std::max(0.0, t1 - t0);
    };
}

// segment integral of a smooth profile by composite Simpson on the clipped
// support chord; the fixed fine step keeps the error far below grid accuracy
double smooth_segment_integral(const std::function<double(const Vec3&)>& f, double support,
                               const Vec3& p0, const Vec3& p1) {
    const Vec3 d = p1 - p0;
    const double len = norm(d);
    if (len == 0.0) return 0.0;
    const Vec3 u = d / len;
    const auto c = chord_interval(p0, u, support);
    if (!c) return 0.0;
    const double t0 = std::clamp(c->first, 0.0, len);
    const double t1 = std::clamp(c->second, 0.0, len);
    if (t1 <= t0) return 0.0;
    const int m = 256;
    const double h = (t1 - t0) / m;
    double s = f(p0 + t0 * u) + f(p0 + t1 * u);
    for (int i = 1; i < m; ++i) s += (i % 2 ? 4.0 : 2.0) * f(p0 + (t0 + i * h) * u);
    return s * h / 3.0;
}

void attach_radial_forms(CoefficientPair& out, double sigma0, double c0, double rb,
                         bool indicator) {
    if (indicator) {
        out.sigma_exact = [sigma0, rb](const Vec3& x) { return norm(x) <= rb ? sigma0 : 0.0; };
        out.sigma_line_exact = indicator_line(sigma0, rb);
        out.scatter_amp_exact = [c0, rb](const Vec3& x) { return norm(x) <= rb ? c0 : 0.0; };
        out.scatter_amp_line_exact = indicator_line(c0, rb);
        return;
    }
    auto prof = [rb](const Vec3& x) { return bump_profile(norm(x) / rb); };
    out.sigma_exact = [sigma0, prof](const Vec3& x) { return sigma0 * prof(x); };
    out.sigma_line_exact = [sigma0, prof, rb](const Vec3& a, const Vec3& b) {
        return sigma0 * smooth_segment_integral(prof, rb, a, b);
    };
    out.scatter_amp_exact = [c0, prof](const Vec3& x) { return c0 * prof(x); };
    out.scatter_amp_line_exact = [c0, prof, rb](const Vec3& a, const Vec3& b) {
        return c0 * smooth_segment_integral(prof, rb, a, b);
    };
}
}  // namespace

CoefficientPair make_phantom(const std::string& name, const DomainConfig& dom, int grid_n,
                             const std::map<std::string, double>& params) {
    dom.validate();
    const double rho = dom.rho;
    const int n = dom.n;
    CoefficientPair out;
    const double sigma0 = get_param(params, "sigma0", 1.0);
    const double c0 = get_param(params, "c0", 0.3);

    if (name == "zero") {
        out.sigma = ScalarField::zeros(n, rho, grid_n);
        out.kappa = ScatteringField::separable(ScalarField::zeros(n, rho, grid_n), {});
        out.sigma_exact = [](const Vec3&) { return 0.0; };
        out.sigma_line_exact = [](const Vec3&, const Vec3&) { return 0.0; };
        out.scatter_amp_exact = out.sigma_exact;
        out.scatter_amp_line_exact = out.sigma_line_exact;
        return out;
    }
    if (name == "ball") {
        const double rb = get_param(params, "radius", rho);
        auto ind = [rb](const Vec3& x) { return norm(x) <= rb ? 1.0 : 0.0; };
        out.sigma = ScalarField::sample(n, rho, grid_n, [&](const Vec3& x) { return sigma0 * ind(x); });
        out.kappa = ScatteringField::separable(
            ScalarField::sample(n, rho, grid_n, [&](const Vec3& x) { return c0 * ind(x); }), {});
        attach_radial_forms(out, sigma0, c0, rb, true);
        return out;
    }
    if (name == "smooth-bump") {
        const double rb = get_param(params, "radius", rho);
        auto prof = [rb](const Vec3& x) { return bump_profile(norm(x) / rb); };
        out.sigma = ScalarField::sample(n, rho, grid_n, [&](const Vec3& x) { return sigma0 * prof(x); });
        out.kappa = ScatteringField::separable(
            ScalarField::sample(n, rho, grid_n, [&](const Vec3& x) { return c0 * prof(x); }), {});
        attach_radial_forms(out, sigma0, c0, rb, false);
        return out;
    }
    if (name == "two-bumps") {
        const double sep = get_param(params, "sep", 0.45) * rho;
        const double rb = get_param(params, "radius", 0.4 * rho);
        const Vec3 cp{sep, 0, 0}, cm{-sep, 0, 0};
        auto one = [rb](const Vec3& x) { return bump_profile(norm(x) / rb); };
        auto prof = [=](const Vec3& x) { return one(x - cp) + one(x - cm); };
        out.sigma = ScalarField::sample(n, rho, grid_n, [&](const Vec3& x) { return sigma0 * prof(x); });
        out.kappa = ScatteringField::separable(
            ScalarField::sample(n, rho, grid_n, [&](const Vec3& x) { return c0 * prof(x); }), {});
        auto line1 = [one, rb, cp, cm](const Vec3& a, const Vec3& b) {
            return smooth_segment_integral(one, rb, a - cp, b - cp) +
                   smooth_segment_integral(one, rb, a - cm, b - cm);
        };
        out.sigma_exact = [sigma0, prof](const Vec3& x) { return sigma0 * prof(x); };
        out.sigma_line_exact = [sigma0, line1](const Vec3& a, const Vec3& b) {
            return sigma0 * line1(a, b);
        };
        out.scatter_amp_exact = [c0, prof](const Vec3& x) { return c0 * prof(x); };
        out.scatter_amp_line_exact = [c0, line1](const Vec3& a, const Vec3& b) {
            return c0 * line1(a, b);
        };
        return out;
    }
    if (name == "anisotropic") {
        const double rb = get_param(params, "radius", rho);
        PhaseModel phase;
        if (get_param(params, "forward_lobe", 0.0) > 0.5) {
            phase.type = PhaseType::ForwardLobe;
        } else {
            phase.type = PhaseType::HenyeyGreenstein;
            phase.g = get_param(params, "g", 0.5);
        }
        auto ind = [rb](const Vec3& x) { return norm(x) <= rb ? 1.0 : 0.0; };
        out.sigma = ScalarField::sample(n, rho, grid_n, [&](const Vec3& x) { return sigma0 * ind(x); });
        out.kappa = ScatteringField::separable(
            ScalarField::sample(n, rho, grid_n, [&](const Vec3& x) { return c0 * ind(x); }), phase);
        attach_radial_forms(out, sigma0, c0, rb, true);
        return out;
    }
    throw ConfigError("unknown phantom: " + name);
}

double BumpSet::value(const Vec3& x) const {
    double s = 0.0;
    for (const auto& b : bumps) s += b.a * bump_profile(norm(x - b.c) / b.r);
    return s;
}

double BumpSet::line(const Vec3& p0, const Vec3& p1) const {
    double s = 0.0;
    for (const auto& b : bumps) {
        auto prof = [&b](const Vec3& x) { return bump_profile(norm(x) / b.r); };
        s += b.a * smooth_segment_integral(prof, b.r, p0 - b.c, p1 - b.c);
    }
    return s;
}

ScalarField BumpSet::sample(int n, double rho, int npts) const {
    return ScalarField::sample(n, rho, npts, [&](const Vec3& x) { return value(x); });
}

BumpSet make_perturbation_bumps(const DomainConfig& dom, std::uint64_t seed, double amp) {
    dom.validate();
    Rng rng(seed, 0x70657274ull);
    BumpSet set;
    for (int i = 0; i < 3; ++i) {
        BumpSet::Bump b;
        b.c = {rng.uniform(-0.5, 0.5) * dom.rho, rng.uniform(-0.5, 0.5) * dom.rho,
               dom.n == 3 ? rng.uniform(-0.5, 0.5) * dom.rho : 0.0};
        b.r = rng.uniform(0.25, 0.45) * dom.rho;
        b.a = rng.uniform(-1.0, 1.0) * amp;
        set.bumps.push_back(b);
    }
    return set;
}

ScalarField make_perturbation(const DomainConfig& dom, int grid_n, std::uint64_t seed,
                              double amp) {
    return make_perturbation_bumps(dom, seed, amp).sample(dom.n, dom.rho, grid_n);
}

}  // namespace albedo
