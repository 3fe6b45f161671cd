#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "hersim/dispersion.hpp"
#include "hersim/error.hpp"
#include "hersim/numeric.hpp"
#include "hersim/phasematching.hpp"
#include "hersim/units.hpp"

namespace hersim {

using cplx = std::complex<double>;

struct SpectralGrid
{
    UniformAxis signal;
    UniformAxis idler;

    Eigen::VectorXd signal_weights() const { return to_vector(signal.weights()); }
    Eigen::VectorXd idler_weights() const { return to_vector(idler.weights()); }

    static Eigen::VectorXd to_vector(const std::vector<double>& v)
    {
        return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
    }
};

enum class PumpShape { Gaussian };

struct PumpEnvelope
{
    double center_wavelength = nm(751.1);
    double fwhm_wavelength = nm(0.5);
    PumpShape shape = PumpShape::Gaussian;

    double center_omega() const { return wavelength_to_omega(center_wavelength); }

    // Amplitude width s of a(w) = exp(-(w - w0)^2 / (2 s^2)).
    double amplitude_sigma() const
    {
        require(fwhm_wavelength > 0.0, Errc::InvalidArgument, "pump FWHM must be positive");
        return amplitude_sigma_from_intensity_fwhm(wavelength_width_to_omega(center_wavelength, fwhm_wavelength));
    }

    double amplitude(double omega) const
    {
        const double s = amplitude_sigma();
        const double d = omega - center_omega();
        return std::exp(-d * d / (2.0 * s * s));
    }

    // Self-convolution of the pump amplitude as a function of ws + wi, peak 1.
    double pair_amplitude(double sum_omega) const
    {
        const double s = amplitude_sigma();
        const double d = sum_omega - 2.0 * center_omega();
        return std::exp(-d * d / (4.0 * s * s));
    }
};

struct JointAmplitude
{
    SpectralGrid grid;
    Eigen::MatrixXcd values;  // rows: signal, columns: idler
    cplx gain{1.0, 0.0};
};

struct JsaOptions
{
    bool exact_pump_convolution = false;
    std::size_t pump_quadrature = 48;
    unsigned workers = default_worker_count();
};

namespace detail {

inline double sinc(double x) { return std::abs(x) < 1e-8 ? 1.0 - x * x / 6.0 : std::sin(x) / x; }

}  // namespace detail

// F(ws, wi) = A(ws + wi) sinc(L dk / 2) exp(i L dk / 2), unit norm under the grid weights.
inline JointAmplitude build_jsa(const PhasematchConfig& cfg, const PumpEnvelope& pump, double length,
                                const SpectralGrid& grid, const JsaOptions& opts = {})
{
    require(length > 0.0, Errc::NonPositiveLength, "fibre length must be positive");
    const auto& range = cfg.model.valid_range();
    for (double w : {grid.signal.front(), grid.signal.back(), grid.idler.front(), grid.idler.back()})
        require(range.contains(w), Errc::OutOfRange, "spectral grid leaves the dispersion model's valid range");

    const auto ns = grid.signal.count;
    const auto ni = grid.idler.count;
    std::vector<double> ks(ns), ki(ni);
    parallel_for(ns, [&](std::size_t j) { ks[j] = cfg.model.propagation_constant(grid.signal[j]); }, opts.workers);
    parallel_for(ni, [&](std::size_t k) { ki[k] = cfg.model.propagation_constant(grid.idler[k]); }, opts.workers);

    // On a common step the pump frequencies (ws + wi)/2 fall on a lattice; evaluate k there once.
    const bool lattice = std::abs(grid.signal.step - grid.idler.step) <= 1e-12 * grid.signal.step;
    std::vector<double> kp_lattice;
    if (lattice && !opts.exact_pump_convolution) {
        kp_lattice.resize(ns + ni - 1);
        parallel_for(kp_lattice.size(), [&](std::size_t m) {
            // index m = j + k
            const std::size_t j = std::min(m, ns - 1);
            const std::size_t k = m - j;
            const double wp = 0.5 * (grid.signal[j] + grid.idler[k]);
            kp_lattice[m] = cfg.model.propagation_constant(wp);
        }, opts.workers);
    }

    const double sigma = pump.amplitude_sigma();
    const double w0 = pump.center_omega();
    JointAmplitude out;
    out.grid = grid;
    out.values.resize(static_cast<Eigen::Index>(ns), static_cast<Eigen::Index>(ni));
    parallel_for(ns, [&](std::size_t j) {
        const double ws = grid.signal[j];
        for (std::size_t k = 0; k < ni; ++k) {
            const double wi = grid.idler[k];
            const double sum = ws + wi;
            cplx v;
            if (!opts.exact_pump_convolution) {
                const double kp = lattice ? kp_lattice[j + k] : cfg.model.propagation_constant(0.5 * sum);
                const double dk = 2.0 * kp - (ks[j] + ki[k]) - cfg.phi_nl;
                const double half = 0.5 * length * dk;
                v = pump.pair_amplitude(sum) * detail::sinc(half) * std::polar(1.0, half);
            } else {
                // Quadrature over the pump line: the product a(w) a(sum - w) is a
                // Gaussian in w centred on sum/2 with width sigma/sqrt(2).
                const double width = 6.0 * sigma / std::numbers::sqrt2;
                const auto axis = UniformAxis::centered(0.5 * sum, width, opts.pump_quadrature);
                const auto qw = axis.weights();
                for (std::size_t q = 0; q < axis.count; ++q) {
                    const double w1 = axis[q];
                    const double w2 = sum - w1;
                    if (!range.contains(w1) || !range.contains(w2)) continue;
                    const double dk = cfg.model.propagation_constant(w1) + cfg.model.propagation_constant(w2)
                        - (ks[j] + ki[k]) - cfg.phi_nl;
                    const double half = 0.5 * length * dk;
                    const double a = std::exp(-((w1 - w0) * (w1 - w0) + (w2 - w0) * (w2 - w0)) / (2.0 * sigma * sigma));
                    v += qw[q] * a * detail::sinc(half) * std::polar(1.0, half);
                }
                v /= std::sqrt(std::numbers::pi) * sigma;
            }
            out.values(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) = v;
        }
    }, opts.workers);

    const Eigen::VectorXd ws = grid.signal_weights();
    const Eigen::VectorXd wi = grid.idler_weights();
    const double norm = std::sqrt((ws.transpose() * out.values.cwiseAbs2() * wi)(0, 0));
    require(norm > 0.0 && std::isfinite(norm), Errc::EmptyOverlap, "joint amplitude vanishes on the grid");
    out.values /= norm;
    out.gain = norm;
    return out;
}

inline Eigen::MatrixXd jsi(const JointAmplitude& f) { return f.values.cwiseAbs2(); }

inline Eigen::VectorXd signal_marginal(const JointAmplitude& f) { return jsi(f) * f.grid.idler_weights(); }
inline Eigen::VectorXd idler_marginal(const JointAmplitude& f)
{
    return jsi(f).transpose() * f.grid.signal_weights();
}

namespace detail {

// FWHM of a sampled single-peaked profile; returns a negative value if a
// half-maximum crossing falls outside the sampled window.
inline double sampled_fwhm(const Eigen::VectorXd& p, const UniformAxis& axis)
{
    Eigen::Index peak = 0;
    const double top = p.maxCoeff(&peak);
    if (!(top > 0.0)) return -1.0;
    const double half = 0.5 * top;
    auto cross = [&](Eigen::Index from, int dir) -> double {
        for (Eigen::Index i = from; i + dir >= 0 && i + dir < p.size(); i += dir) {
            if (p(i + dir) < half) {
                const double t = (p(i) - half) / (p(i) - p(i + dir));
                return axis[static_cast<std::size_t>(i)] + dir * t * axis.step;
            }
        }
        return std::numeric_limits<double>::quiet_NaN();
    };
    const double lo = cross(peak, -1);
    const double hi = cross(peak, +1);
    if (std::isnan(lo) || std::isnan(hi)) return -1.0;
    return hi - lo;
}

}  // namespace detail

inline constexpr double kFwhmPerSigma = 2.3548200450309493;  // 2 sqrt(2 ln 2)

// Grid spanning +-half_widths FWHM-equivalent standard deviations of each
// marginal around the given centre. Marginal widths are measured on coarse
// pre-evaluations that zoom until both half-maximum points are resolved.
inline SpectralGrid default_grid(const PhasematchConfig& cfg, const PumpEnvelope& pump, double length,
                                 double signal_center, double idler_center, std::size_t n = 256,
                                 double half_widths = 6.0)
{
    constexpr std::size_t kCoarse = 160;
    double hs = 40.0 * pump.amplitude_sigma();
    double hi = hs;
    for (int it = 0; it < 12; ++it) {
        const SpectralGrid g{UniformAxis::centered(signal_center, hs, kCoarse),
                             UniformAxis::centered(idler_center, hi, kCoarse)};
        const auto f = build_jsa(cfg, pump, length, g);
        const double fs = detail::sampled_fwhm(signal_marginal(f), g.signal);
        const double fi = detail::sampled_fwhm(idler_marginal(f), g.idler);
        // Widen when a crossing is off-grid; shrink when the peak spans too few samples.
        const double target_s = fs < 0.0 ? 4.0 * hs : 8.0 * fs / kFwhmPerSigma;
        const double target_i = fi < 0.0 ? 4.0 * hi : 8.0 * fi / kFwhmPerSigma;
        const bool settled = fs > 0.0 && fi > 0.0 && std::abs(target_s / hs - 1.0) < 0.25
            && std::abs(target_i / hi - 1.0) < 0.25;
        hs = target_s;
        hi = target_i;
        if (settled) break;
    }
    const double ss = hs / 8.0, si = hi / 8.0;
    return {UniformAxis::centered(signal_center, half_widths * ss, n),
            UniformAxis::centered(idler_center, half_widths * si, n)};
}

struct SchmidtResult
{
    Eigen::VectorXd lambdas;          // descending, sum 1
    Eigen::MatrixXcd signal_modes;    // columns, unit norm under signal weights
    Eigen::MatrixXcd idler_modes;     // columns, F = sum sqrt(l_n) u_n conj(v_n)
    double cooperativity = 1.0;       // K
    double purity = 1.0;              // 1 / K
};

inline SchmidtResult schmidt_decompose(const JointAmplitude& f)
{
    const Eigen::VectorXd ws = f.grid.signal_weights().cwiseSqrt();
    const Eigen::VectorXd wi = f.grid.idler_weights().cwiseSqrt();
    const Eigen::MatrixXcd m = ws.asDiagonal() * f.values * wi.asDiagonal();
    Eigen::BDCSVD<Eigen::MatrixXcd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    require(svd.info() == Eigen::Success, Errc::SvdFailure, "SVD did not converge");
    const Eigen::VectorXd s = svd.singularValues();
    require(s.allFinite(), Errc::SvdFailure, "non-finite singular values");
    SchmidtResult r;
    r.lambdas = s.cwiseAbs2();
    const double total = r.lambdas.sum();
    require(total > 0.0, Errc::SvdFailure, "joint amplitude has zero norm");
    r.lambdas /= total;
    r.signal_modes = ws.cwiseInverse().asDiagonal() * svd.matrixU();
    r.idler_modes = wi.cwiseInverse().asDiagonal() * svd.matrixV();
    r.cooperativity = 1.0 / r.lambdas.squaredNorm();
    r.purity = 1.0 / r.cooperativity;
    return r;
}

}  // namespace hersim
