#include "albedo/xray.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>

#include "albedo/errors.hpp"
#include "albedo/parallel.hpp"

#include "nlohmann/json.hpp"

namespace albedo {

namespace {

constexpr double kPi = 3.14159265358979323846;

double uniform_node(double rho, int count, int i) {
    if (count == 1) return 0.0;
    return -rho + 2.0 * rho * i / (count - 1);
}

}  // namespace

double Sinogram::slice(int k) const { return uniform_node(rho, n_slices, k); }

double Sinogram::angle(int i) const { return kPi * i / n_angles; }

double Sinogram::offset(int j) const { return uniform_node(rho, n_offsets, j); }

Vec3 Sinogram::ray_point(int k, int i, int j) const {
    const double th = angle(i), s = offset(j);
    return {-s * std::sin(th), s * std::cos(th), slice(k)};
}

Vec3 Sinogram::ray_direction(int i) const {
    const double th = angle(i);
    return {std::cos(th), std::sin(th), 0.0};
}

Sinogram Sinogram::zeros(double rho, int n_slices, int n_angles, int n_offsets) {
    if (!(rho > 0.0) || n_slices < 1 || n_angles < 1 || n_offsets < 2)
        throw ConfigError("sinogram: need a positive radius, slices, angles and offsets");
    Sinogram s;
    s.rho = rho;
    s.n_slices = n_slices;
    s.n_angles = n_angles;
    s.n_offsets = n_offsets;
    s.values.assign(static_cast<std::size_t>(n_slices) * n_angles * n_offsets, 0.0);
    return s;
}

std::string Sinogram::manifest_json() const {
    nlohmann::ordered_json j;
    j["kind"] = "sinogram";
    j["axis"] = "z";
    j["support_radius"] = rho;
    j["slices"] = n_slices;
    j["angles"] = n_angles;
    j["offsets"] = n_offsets;
    j["slice_spacing"] = n_slices > 1 ? 2.0 * rho / (n_slices - 1) : 0.0;
    j["angle_spacing"] = kPi / n_angles;
    j["offset_spacing"] = n_offsets > 1 ? 2.0 * rho / (n_offsets - 1) : 0.0;
    j["layout"] = "slice-major, then angle, then offset";
    return j.dump(2);
}

Sinogram xray_transform(const ScalarField& field, int n_slices, int n_angles, int n_offsets,
                        double max_step, int threads) {
    if (field.n != 3) throw ConfigError("ray transform: three dimensional fields only");
    Sinogram sino = Sinogram::zeros(field.rho, n_slices, n_angles, n_offsets);
    const double reach = 3.0 * field.rho;
    const int nt = threads > 0 ? threads : hardware_threads();
    parallel_for(static_cast<std::size_t>(n_slices), nt, [&](std::size_t k) {
        for (int i = 0; i < n_angles; ++i) {
            const Vec3 d = sino.ray_direction(i);
            for (int j = 0; j < n_offsets; ++j) {
                const Vec3 p = sino.ray_point(static_cast<int>(k), i, j);
                sino.at(static_cast<int>(k), i, j) =
                    line_integral(field, p - reach * d, p + reach * d, max_step);
            }
        }
    });
    return sino;
}

FbpResult fbp_invert(const Sinogram& sino, int out_npts, int threads) {
    if (out_npts != sino.n_slices)
        throw ConfigError("back-projection: output grid planes must match the slice stack");
    if (sino.n_offsets < 2) throw ConfigError("back-projection: need at least two offsets");

    FbpResult res;
    res.field = ScalarField::zeros(3, sino.rho, out_npts);

    const int required = static_cast<int>(std::ceil(0.5 * kPi * sino.n_offsets));
    if (sino.n_angles < required)
        res.warnings.push_back("angular sampling below the Nyquist estimate: have " +
                               std::to_string(sino.n_angles) + " angles, need about " +
                               std::to_string(required) + " for " +
                               std::to_string(sino.n_offsets) + " offsets");

    const int na = sino.n_angles, ns = sino.n_offsets;
    const double ds = 2.0 * sino.rho / (ns - 1);

    // Band-limited ramp kernel sampled in space; even taps vanish.
    std::vector<double> ramp(ns, 0.0);
    ramp[0] = 1.0 / (4.0 * ds * ds);
    for (int m = 1; m < ns; m += 2) ramp[m] = -1.0 / (kPi * m * ds) / (kPi * m * ds);

    const int nt = threads > 0 ? threads : hardware_threads();
    parallel_for(static_cast<std::size_t>(sino.n_slices), nt, [&](std::size_t k) {
        std::vector<double> filtered(static_cast<std::size_t>(na) * ns, 0.0);
        for (int i = 0; i < na; ++i)
            for (int j = 0; j < ns; ++j) {
                double acc = 0.0;
                for (int jp = 0; jp < ns; ++jp)
                    acc += sino.at(static_cast<int>(k), i, jp) * ramp[std::abs(j - jp)];
                filtered[static_cast<std::size_t>(i) * ns + j] = ds * acc;
            }

        const double z = sino.slice(static_cast<int>(k));
        for (int jy = 0; jy < out_npts; ++jy)
            for (int ix = 0; ix < out_npts; ++ix) {
                const Vec3 x = res.field.node(ix, jy, static_cast<int>(k));
                if (x.x * x.x + x.y * x.y + z * z > sino.rho * sino.rho) continue;
                double acc = 0.0;
                for (int i = 0; i < na; ++i) {
                    const double th = sino.angle(i);
                    const double s = -x.x * std::sin(th) + x.y * std::cos(th);
                    const double u = (s + sino.rho) / ds;
                    const int j0 = static_cast<int>(std::floor(u));
                    if (j0 < 0 || j0 >= ns - 1) continue;
                    const double f = u - j0;
                    const double* q = &filtered[static_cast<std::size_t>(i) * ns];
                    acc += (1.0 - f) * q[j0] + f * q[j0 + 1];
                }
                res.field.v[res.field.index(ix, jy, static_cast<int>(k))] = kPi / na * acc;
            }
    });
    return res;
}

namespace {

// FFTW plan creation and destruction are not thread safe.
std::mutex& fftw_plan_mutex() {
    static std::mutex m;
    return m;
}

SobolevSpectrum box_spectrum(std::vector<double>& in, int p, double box_side) {
    const std::size_t nc = static_cast<std::size_t>(p) * p * (p / 2 + 1);
    std::vector<std::complex<double>> out(nc);
    fftw_plan plan;
    {
        std::lock_guard<std::mutex> lock(fftw_plan_mutex());
        plan = fftw_plan_dft_r2c_3d(p, p, p, in.data(),
                                    reinterpret_cast<fftw_complex*>(out.data()), FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    {
        std::lock_guard<std::mutex> lock(fftw_plan_mutex());
        fftw_destroy_plan(plan);
    }

    const double h = box_side / p;
    const double scale = h * h * h * h * h * h / (box_side * box_side * box_side);
    const double dxi = 2.0 * kPi / box_side;
    auto freq = [&](int idx) { return dxi * (idx <= p / 2 ? idx : idx - p); };

    SobolevSpectrum sp;
    sp.mass.reserve(nc);
    sp.weight.reserve(nc);
    std::size_t at = 0;
    for (int kz = 0; kz < p; ++kz) {
        const double fz = freq(kz);
        for (int ky = 0; ky < p; ++ky) {
            const double fy = freq(ky);
            for (int kx = 0; kx <= p / 2; ++kx, ++at) {
                const double fx = freq(kx);
                const double mult = (kx == 0 || kx == p / 2) ? 1.0 : 2.0;
                sp.mass.push_back(mult * scale * std::norm(out[at]));
                sp.weight.push_back(1.0 + fx * fx + fy * fy + fz * fz);
            }
        }
    }
    return sp;
}

}  // namespace

double SobolevSpectrum::norm(double s) const {
    double acc = 0.0;
    for (std::size_t m = 0; m < mass.size(); ++m) acc += mass[m] * std::pow(weight[m], s);
    return std::sqrt(acc);
}

SobolevSpectrum sobolev_spectrum(const ScalarField& field) {
    if (field.n != 3) throw ConfigError("spectrum: three dimensional fields only");
    if (field.npts < 3) throw ConfigError("spectrum: need at least three nodes per axis");
    const int p = 2 * (field.npts - 1);
    std::vector<double> in(static_cast<std::size_t>(p) * p * p, 0.0);
    for (int k = 0; k < field.npts; ++k)
        for (int j = 0; j < field.npts; ++j)
            for (int i = 0; i < field.npts; ++i)
                in[(static_cast<std::size_t>(k) * p + j) * p + i] =
                    field.v[field.index(i, j, k)];
    return box_spectrum(in, p, 4.0 * field.rho);
}

SobolevSpectrum periodic_spectrum(const std::vector<double>& samples, int npts, double box_side) {
    if (npts < 2 || samples.size() != static_cast<std::size_t>(npts) * npts * npts)
        throw ConfigError("spectrum: samples must fill the periodic box");
    std::vector<double> in = samples;
    return box_spectrum(in, npts, box_side);
}

double sobolev_norm(const ScalarField& field, double s) { return sobolev_spectrum(field).norm(s); }

double interpolation_check(const SobolevSpectrum& spectrum, double s, double s_high) {
    if (!(s_high > -0.5) || s < -0.5 || s > s_high)
        throw DomainError("interpolation: need -1/2 <= s <= s_high");
    const double t = (2.0 * s + 1.0) / (2.0 * s_high + 1.0);
    const double lhs = spectrum.norm(s);
    const double rhs = std::pow(spectrum.norm(s_high), t) * std::pow(spectrum.norm(-0.5), 1.0 - t);
    return rhs - lhs;
}

double interpolation_check(const ScalarField& field, double s, double s_high) {
    return interpolation_check(sobolev_spectrum(field), s, s_high);
}

double embedding_constant(const std::vector<ScalarField>& probes, double r_tilde) {
    if (probes.empty()) throw ConfigError("embedding estimate: need at least one probe");
    if (!(r_tilde > 0.0)) throw DomainError("embedding estimate: smoothness excess must be positive");
    double best = 0.0;
    for (const ScalarField& f : probes) {
        const double denom = sobolev_norm(f, 0.5 * f.n + r_tilde);
        if (denom <= 0.0) continue;
        best = std::max(best, f.sup() / denom);
    }
    return best;
}

std::vector<ScalarField> make_gaussian_probes(double rho, int npts, int count) {
    std::vector<ScalarField> probes;
    probes.reserve(count);
    for (int c = 0; c < count; ++c) {
        const double w = rho * 0.5 * std::pow(0.5, 0.5 * c);
        probes.push_back(ScalarField::sample(3, rho, npts, [&](const Vec3& x) {
            return std::exp(-0.5 * norm2(x) / (w * w));
        }));
    }
    return probes;
}

}  // namespace albedo
