#include "albedo/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "albedo/errors.hpp"
#include "albedo/parallel.hpp"

#include "json.hpp"

namespace albedo {

namespace {
constexpr double kPi = 3.14159265358979323846;

// Gauss-Legendre nodes/weights on (-1, 1) by Newton iteration on the
// Legendre recurrence. Deterministic to machine precision.
void gauss_legendre(int p, std::vector<double>& x, std::vector<double>& w) {
    x.resize(p);
    w.resize(p);
    for (int i = 0; i < p; ++i) {
        double t = std::cos(kPi * (i + 0.75) / (p + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0, p1 = t;
            for (int k = 2; k <= p; ++k) {
                const double pk = ((2 * k - 1) * t * p1 - (k - 1) * p0) / k;
                p0 = p1;
                p1 = pk;
            }
            dp = p * (t * p1 - p0) / (t * t - 1.0);
            const double dt = p1 / dp;
            t -= dt;
            if (std::abs(dt) < 1e-15) break;
        }
        x[p - 1 - i] = t;
        w[p - 1 - i] = 2.0 / ((1.0 - t * t) * dp * dp);
    }
}
}  // namespace

void DomainConfig::validate() const {
    if (n != 2 && n != 3) throw ConfigError("dimension must be 2 or 3");
    if (!(R > 0.0)) throw ConfigError("domain radius must be positive");
    if (!(rho > 0.0 && rho < R)) throw ConfigError("coefficient radius must satisfy 0 < rho < R");
}

std::pair<Vec3, Vec3> make_frame(const Vec3& v_in) {
    const Vec3 v = normalized(v_in);
    const double c[3] = {std::abs(v.x), std::abs(v.y), std::abs(v.z)};
    int axis = 0;
    if (c[1] < c[axis]) axis = 1;
    if (c[2] < c[axis]) axis = 2;
    const Vec3 e = axis == 0 ? Vec3{1, 0, 0} : axis == 1 ? Vec3{0, 1, 0} : Vec3{0, 0, 1};
    const Vec3 e1 = normalized(perp_part(e, v));
    return {e1, cross(v, e1)};
}

std::optional<std::pair<double, double>> chord_interval(const Vec3& x, const Vec3& v,
                                                        double radius) {
    const double b = dot(x, v);
    const double disc = b * b - (norm2(x) - radius * radius);
    if (disc <= kBoundaryTol * radius * radius) return std::nullopt;
    const double h = std::sqrt(disc);
    return std::make_pair(-b - h, -b + h);
}

double DirectionSet::total_weight() const {
    double s = 0.0;
    for (double wi : weight) s += wi;
    return s;
}

DirectionSet DirectionSet::build(int n, int n_polar, int n_azimuth) {
    if (n != 2 && n != 3) throw ConfigError("direction set: dimension must be 2 or 3");
    DirectionSet ds;
    ds.n = n;
    if (n == 2) {
        const int m = n_azimuth > 0 ? n_azimuth : n_polar;
        if (m < 4) throw ConfigError("direction set: need at least 4 nodes on the circle");
        for (int i = 0; i < m; ++i) {
            const double th = 2.0 * kPi * (i + 0.5) / m;
            const Vec3 v{std::cos(th), std::sin(th), 0.0};
            ds.dir.push_back(v);
            ds.weight.push_back(2.0 * kPi / m);
            ds.e1.push_back({-v.y, v.x, 0.0}); // in-plane transverse axis
            ds.e2.push_back({0.0, 0.0, 1.0});
        }
        return ds;
    }
    if (n_polar < 2 || n_azimuth < 4)
        throw ConfigError("direction set: need n_polar >= 2 and n_azimuth >= 4");
    std::vector<double> mu, wmu;
    gauss_legendre(n_polar, mu, wmu);
    for (int i = 0; i < n_polar; ++i) {
        const double s = std::sqrt(std::max(0.0, 1.0 - mu[i] * mu[i]));
        for (int j = 0; j < n_azimuth; ++j) {
            const double ph = 2.0 * kPi * (j + 0.5) / n_azimuth;
            const Vec3 v{s * std::cos(ph), s * std::sin(ph), mu[i]};
            ds.dir.push_back(v);
            ds.weight.push_back(wmu[i] * 2.0 * kPi / n_azimuth);
            auto [e1, e2] = make_frame(v);
            ds.e1.push_back(e1);
            ds.e2.push_back(e2);
        }
    }
    return ds;
}

std::string DirectionSet::to_json() const {
    nlohmann::ordered_json j;
    j["dimension"] = n;
    j["count"] = size();
    auto vec_arr = [](const Vec3& v) { return nlohmann::ordered_json::array({v.x, v.y, v.z}); };
    for (int d = 0; d < size(); ++d) {
        j["nodes"].push_back(vec_arr(dir[d]));
        j["weights"].push_back(weight[d]);
        j["frames_e1"].push_back(vec_arr(e1[d]));
        j["frames_e2"].push_back(vec_arr(e2[d]));
    }
    return j.dump(2);
}

DiscRule DiscRule::build(int n, double radius, int n_radial, int n_angular) {
    if (!(radius > 0.0)) throw ConfigError("disc rule: radius must be positive");
    DiscRule r;
    r.n = n;
    r.radius = radius;
    r.n_radial = n_radial;
    r.n_angular = n_angular;
    if (n == 2) {
        if (n_radial < 2) throw ConfigError("disc rule: need at least 2 segment nodes");
        r.n_angular = 1;
        for (int i = 0; i < n_radial; ++i) {
            r.a.push_back(-radius + (i + 0.5) * 2.0 * radius / n_radial);
            r.b.push_back(0.0);
            r.w.push_back(2.0 * radius / n_radial);
        }
        return r;
    }
    if (n_radial < 2 || n_angular < 4)
        throw ConfigError("disc rule: need n_radial >= 2 and n_angular >= 4");
    const double cell = kPi * radius * radius / (n_radial * n_angular);
    for (int i = 0; i < n_radial; ++i) {
        const double ri = radius * std::sqrt((i + 0.5) / n_radial);
        for (int j = 0; j < n_angular; ++j) {
            const double ph = 2.0 * kPi * (j + 0.5) / n_angular;
            r.a.push_back(ri * std::cos(ph));
            r.b.push_back(ri * std::sin(ph));
            r.w.push_back(cell);
        }
    }
    return r;
}

FaceProjection project_to_F(const Vec3& x, const DirectionSet& dirs, int d, int sign,
                            double R) {
    if (d < 0 || d >= dirs.size()) throw DomainError("face projection: bad direction index");
    const Vec3 v = dirs.dir[d];
    FaceProjection out;
    out.axial = dot(x, v);
    out.transverse = x - out.axial * v;
    if (R - norm(out.transverse) < kBoundaryTol)
        throw DomainError("face projection: transverse part outside the disc");
    out.foot = out.transverse + (sign >= 0 ? R : -R) * v;
    return out;
}

double integrate_O(const DomainConfig& dom, const DirectionSet& dirs, const DiscRule& disc,
                   int n_axial, const std::function<double(const Vec3&, int)>& f,
                   int threads) {
    dom.validate();
    if (n_axial < 2) throw ConfigError("domain quadrature: need at least 2 axial nodes");
    const double ht = 2.0 * dom.R / n_axial;
    return parallel_sum(dirs.size(), threads, [&](std::size_t d) {
        double acc = 0.0;
        for (int q = 0; q < disc.size(); ++q) {
            const Vec3 y = disc.point(dirs, static_cast<int>(d), q);
            double ray = 0.0;
            for (int k = 0; k < n_axial; ++k) {
                const double t = -dom.R + (k + 0.5) * ht;
                ray += f(y + t * dirs.dir[d], static_cast<int>(d));
            }
            acc += disc.w[q] * ray * ht;
        }
        return dirs.weight[d] * acc;
    });
}

BoundaryDistribution BoundaryDistribution::zero(int side,
                                                std::shared_ptr<const DirectionSet> dirs,
                                                std::shared_ptr<const DiscRule> disc) {
    BoundaryDistribution b;
    b.side = side;
    b.dirs = std::move(dirs);
    b.disc = std::move(disc);
    b.values.assign(static_cast<std::size_t>(b.dirs->size()) * b.disc->size(), 0.0);
    return b;
}

void BoundaryDistribution::fill_from_eval() {
    if (!eval) throw ConfigError("boundary data: no evaluator to sample from");
    for (int d = 0; d < dirs->size(); ++d)
        for (int q = 0; q < disc->size(); ++q)
            at(d, q) = eval(d, disc->point(*dirs, d, q));
}

double BoundaryDistribution::value(int d, const Vec3& transverse) const {
    if (eval) return eval(d, transverse);
    const DiscRule& r = *disc;
    const double aa = dot(transverse, dirs->e1[d]);
    const double bb = dot(transverse, dirs->e2[d]);
    if (r.n == 2) {
        // linear in the segment coordinate
        const double u = (aa + r.radius) / (2.0 * r.radius) * r.n_radial - 0.5;
        if (u <= 0.0) return at(d, 0);
        if (u >= r.n_radial - 1) return at(d, r.n_radial - 1);
        const int i = static_cast<int>(u);
        const double f = u - i;
        return (1.0 - f) * at(d, i) + f * at(d, i + 1);
    }
    const double rr = std::sqrt(aa * aa + bb * bb);
    if (rr >= r.radius) return 0.0;
    double ph = std::atan2(bb, aa);
    if (ph < 0.0) ph += 2.0 * kPi;
    // ring index from the equal-area layout, angle index with wraparound
    double ur = (rr / r.radius) * (rr / r.radius) * r.n_radial - 0.5;
    double ua = ph / (2.0 * kPi) * r.n_angular - 0.5;
    if (ua < 0.0) ua += r.n_angular;
    const int j0 = static_cast<int>(ua) % r.n_angular;
    const int j1 = (j0 + 1) % r.n_angular;
    const double fa = ua - std::floor(ua);
    auto ring_val = [&](int i) {
        return (1.0 - fa) * at(d, i * r.n_angular + j0) + fa * at(d, i * r.n_angular + j1);
    };
    if (ur <= 0.0) return ring_val(0);
    if (ur >= r.n_radial - 1) return ring_val(r.n_radial - 1);
    const int i = static_cast<int>(ur);
    const double fr = ur - i;
    return (1.0 - fr) * ring_val(i) + fr * ring_val(i + 1);
}

double boundary_norm(const BoundaryDistribution& g) {
    double s = 0.0;
    for (int d = 0; d < g.dirs->size(); ++d) {
        double acc = 0.0;
        for (int q = 0; q < g.disc->size(); ++q) acc += g.disc->w[q] * std::abs(g.at(d, q));
        s += g.dirs->weight[d] * acc;
    }
    return s;
}

}  // namespace albedo
