#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

// pchip.hpp in Boost 1.74 relies on boost::math::isnan being declared first.
#include <boost/math/special_functions/fpclassify.hpp>
#include <boost/math/interpolators/pchip.hpp>

#include "hersim/dual.hpp"
#include "hersim/error.hpp"
#include "hersim/numeric.hpp"
#include "hersim/units.hpp"

namespace hersim {

struct FrequencyRange
{
    double lo = 0.0;
    double hi = 0.0;

    bool contains(double omega) const { return omega >= lo && omega <= hi; }

    static FrequencyRange from_wavelengths(double shortest, double longest)
    {
        return {wavelength_to_omega(longest), wavelength_to_omega(shortest)};
    }
};

// Three-term Sellmeier relation for fused silica (Malitson), wavelength in um.
template <typename T>
T fused_silica_index(const T& wavelength_um)
{
    const T l2 = wavelength_um * wavelength_um;
    const T n2 = T(1.0) + T(0.6961663) * l2 / (l2 - T(0.0684043 * 0.0684043))
        + T(0.4079426) * l2 / (l2 - T(0.1162414 * 0.1162414))
        + T(0.8974794) * l2 / (l2 - T(9.896161 * 9.896161));
    using std::sqrt;
    return sqrt(n2);
}

enum class DispersionKind { StepIndexStrand, TabulatedBeta, PolynomialBeta };

struct StepIndexStrand
{
    double core_radius = 0.0;      // m
    double cladding_index = 1.0;   // 1 = strand in air
};

struct PolynomialBeta
{
    double reference_omega = 0.0;  // rad/s
    std::vector<double> beta;      // beta_n in s^n/m, k = sum beta_n (w - w0)^n / n!
};

struct TabulatedBeta
{
    std::vector<double> omega;
    std::vector<double> k;
};

enum class DerivativePath { Analytic, FiniteDifference };

namespace detail {

inline constexpr double kFirstBesselZero = 2.404825557695773;
inline constexpr double kRelativeFdStep = 1e-6;

// HE11 eigenvalue equation of a step-index fibre in (u, omega), written in
// terms of J0, J1, K0, K1 so that it lifts to dual numbers.
template <typename T>
T he11_characteristic(const T& u, const T& omega, double radius, double n_clad)
{
    using std::sqrt;
    const T wavelength_um = T(kTwoPi * kSpeedOfLight * 1e6) / omega;
    const T n1 = fused_silica_index(wavelength_um);
    const T k0 = omega / T(kSpeedOfLight);
    const T v = k0 * T(radius) * sqrt(n1 * n1 - T(n_clad * n_clad));
    const T w = sqrt(v * v - u * u);
    const T ju = (bessel_j0(u) - bessel_j1(u) / u) / (u * bessel_j1(u));
    const T kw = (-bessel_k0(w) - bessel_k1(w) / w) / (w * bessel_k1(w));
    const T r = T(n_clad * n_clad) / (n1 * n1);
    const T iu2 = T(1.0) / (u * u);
    const T iw2 = T(1.0) / (w * w);
    return (ju + kw) * (ju + r * kw) - (iu2 + iw2) * (iu2 + r * iw2);
}

template <typename T>
T he11_beta(const T& u, const T& omega, double radius)
{
    using std::sqrt;
    const T wavelength_um = T(kTwoPi * kSpeedOfLight * 1e6) / omega;
    const T n1 = fused_silica_index(wavelength_um);
    const T k0n1 = omega / T(kSpeedOfLight) * n1;
    const T ua = u / T(radius);
    return sqrt(k0n1 * k0n1 - ua * ua);
}

inline double strand_v_number(const StepIndexStrand& s, double omega)
{
    const double n1 = fused_silica_index(kTwoPi * kSpeedOfLight * 1e6 / omega);
    require(n1 > s.cladding_index, Errc::ModelUnderspecified, "cladding index must stay below the core index");
    return omega / kSpeedOfLight * s.core_radius * std::sqrt(n1 * n1 - s.cladding_index * s.cladding_index);
}

// Transverse core parameter u of the fundamental mode, u in (0, min(V, j01)).
inline double strand_u(const StepIndexStrand& s, double omega)
{
    const double v = strand_v_number(s, omega);
    const double hi = std::min(v, kFirstBesselZero) * (1.0 - 1e-12);
    auto f = [&](double u) { return he11_characteristic(u, omega, s.core_radius, s.cladding_index); };
    // The characteristic function is continuous on the interval but suffers
    // cancellation near u = 0, so the bracket is taken from the largest-u sign
    // change of a coarse scan.
    constexpr int kScan = 48;
    double prev_u = hi;
    double prev_f = f(hi);
    for (int i = kScan - 1; i >= 1; --i) {
        const double u = hi * static_cast<double>(i) / kScan;
        const double fu = f(u);
        if (std::isfinite(fu) && std::isfinite(prev_f) && std::signbit(fu) != std::signbit(prev_f)) {
            return find_root(f, u, prev_u);
        }
        prev_u = u;
        prev_f = fu;
    }
    fail(Errc::ModelUnderspecified, "no guided HE11 solution for the given strand radius");
}

}  // namespace detail

// Propagation constant k(w) of the nonlinear fibre's fundamental mode.
// Immutable after construction; every query is a pure function.
class DispersionModel
{
public:
    static DispersionModel step_index_strand(double core_radius, FrequencyRange range, double cladding_index = 1.0)
    {
        require(core_radius > 0.0, Errc::ModelUnderspecified, "step-index strand needs core_radius > 0");
        require(cladding_index >= 1.0, Errc::ModelUnderspecified, "cladding index must be at least 1");
        return DispersionModel(StepIndexStrand{core_radius, cladding_index}, range);
    }

    static DispersionModel polynomial(double reference_omega, std::vector<double> beta, FrequencyRange range)
    {
        require(!beta.empty(), Errc::ModelUnderspecified, "polynomial model needs at least beta_0");
        require(reference_omega > 0.0, Errc::ModelUnderspecified, "polynomial model needs a reference frequency");
        return DispersionModel(PolynomialBeta{reference_omega, std::move(beta)}, range);
    }

    static DispersionModel tabulated(std::vector<double> omega, std::vector<double> k)
    {
        require(omega.size() == k.size(), Errc::ModelUnderspecified, "table columns differ in length");
        require(omega.size() >= 4, Errc::ModelUnderspecified, "table needs at least 4 samples");
        for (std::size_t i = 1; i < omega.size(); ++i)
            require(omega[i] > omega[i - 1], Errc::ModelUnderspecified, "table omega must be strictly increasing");
        const FrequencyRange range{omega.front(), omega.back()};
        return DispersionModel(TabulatedBeta{std::move(omega), std::move(k)}, range);
    }

    // Two-column CSV (omega_rad_per_s, k_per_m) with a header row.
    static DispersionModel from_csv(const std::filesystem::path& path)
    {
        std::ifstream in(path);
        require(static_cast<bool>(in), Errc::IoError, "cannot open " + path.string());
        std::string line;
        require(static_cast<bool>(std::getline(in, line)), Errc::ModelUnderspecified, "empty dispersion table");
        std::vector<double> omega, k;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#') continue;
            std::replace(line.begin(), line.end(), ',', ' ');
            std::istringstream row(line);
            double w = 0.0, kk = 0.0;
            require(static_cast<bool>(row >> w >> kk), Errc::ModelUnderspecified, "malformed row: " + line);
            omega.push_back(w);
            k.push_back(kk);
        }
        return tabulated(std::move(omega), std::move(k));
    }

    DispersionKind kind() const
    {
        if (std::holds_alternative<StepIndexStrand>(params_)) return DispersionKind::StepIndexStrand;
        if (std::holds_alternative<TabulatedBeta>(params_)) return DispersionKind::TabulatedBeta;
        return DispersionKind::PolynomialBeta;
    }

    const FrequencyRange& valid_range() const { return range_; }

    template <typename P>
    const P* params() const { return std::get_if<P>(&params_); }

    double propagation_constant(double omega) const
    {
        check_range(omega, 0.0);
        if (const auto* s = std::get_if<StepIndexStrand>(&params_)) {
            return detail::he11_beta(detail::strand_u(*s, omega), omega, s->core_radius);
        }
        if (const auto* p = std::get_if<PolynomialBeta>(&params_)) return polynomial_value(*p, omega, 0);
        return (*table_)(omega);
    }

    // dk/dw, the inverse group velocity.
    double inverse_group_velocity(double omega, DerivativePath path = DerivativePath::Analytic) const
    {
        if (path == DerivativePath::FiniteDifference) {
            const double h = detail::kRelativeFdStep * omega;
            check_range(omega, h);
            return (propagation_constant(omega + h) - propagation_constant(omega - h)) / (2.0 * h);
        }
        check_range(omega, 0.0);
        if (const auto* s = std::get_if<StepIndexStrand>(&params_)) return strand_slope(*s, omega);
        if (const auto* p = std::get_if<PolynomialBeta>(&params_)) return polynomial_value(*p, omega, 1);
        return table_->prime(omega);
    }

    double group_velocity(double omega, DerivativePath path = DerivativePath::Analytic) const
    {
        const double slope = inverse_group_velocity(omega, path);
        require(slope > 0.0 && std::isfinite(slope), Errc::NonPositiveSlope,
                "dk/dw <= 0 at omega = " + std::to_string(omega));
        return 1.0 / slope;
    }

private:
    using Params = std::variant<StepIndexStrand, PolynomialBeta, TabulatedBeta>;
    using Pchip = boost::math::interpolators::pchip<std::vector<double>>;

    DispersionModel(Params params, FrequencyRange range) : params_(std::move(params)), range_(range)
    {
        require(range_.lo > 0.0 && range_.hi > range_.lo, Errc::ModelUnderspecified, "invalid frequency range");
        if (auto* t = std::get_if<TabulatedBeta>(&params_)) {
            table_ = std::make_shared<const Pchip>(std::vector<double>(t->omega), std::vector<double>(t->k));
        }
    }

    void check_range(double omega, double margin) const
    {
        if (!(omega - margin >= range_.lo && omega + margin <= range_.hi)) {
            fail(Errc::OutOfRange, "omega " + std::to_string(omega) + " outside [" + std::to_string(range_.lo) + ", "
                                       + std::to_string(range_.hi) + "]");
        }
    }

    static double polynomial_value(const PolynomialBeta& p, double omega, int derivative)
    {
        const double nu = omega - p.reference_omega;
        double value = 0.0;
        double power = 1.0;
        double factorial = 1.0;
        for (std::size_t n = static_cast<std::size_t>(derivative); n < p.beta.size(); ++n) {
            const std::size_t m = n - static_cast<std::size_t>(derivative);
            if (m > 0) {
                power *= nu;
                factorial *= static_cast<double>(m);
            }
            value += p.beta[n] * power / factorial;
        }
        return value;
    }

    // Implicit differentiation of the eigenvalue equation:
    // dk/dw = dbeta/dw|_u + dbeta/du * du/dw, du/dw = -f_w / f_u.
    static double strand_slope(const StepIndexStrand& s, double omega)
    {
        using D = Dual<double>;
        const double u = detail::strand_u(s, omega);
        const double f_u = detail::he11_characteristic(D::variable(u), D(omega), s.core_radius, s.cladding_index).deriv;
        const double f_w = detail::he11_characteristic(D(u), D::variable(omega), s.core_radius, s.cladding_index).deriv;
        const double b_u = detail::he11_beta(D::variable(u), D(omega), s.core_radius).deriv;
        const double b_w = detail::he11_beta(D(u), D::variable(omega), s.core_radius).deriv;
        return b_w + b_u * (-f_w / f_u);
    }

    Params params_;
    FrequencyRange range_;
    std::shared_ptr<const Pchip> table_;
};

inline double propagation_constant(const DispersionModel& model, double omega)
{
    return model.propagation_constant(omega);
}

inline double group_velocity(const DispersionModel& model, double omega,
                             DerivativePath path = DerivativePath::Analytic)
{
    return model.group_velocity(omega, path);
}

struct GvmResult
{
    double tau_s = 0.0;     // s
    double tau_i = 0.0;     // s
    double theta_si = 0.0;  // degrees, [-90, 90]
};

// JSI orientation from the group-delay mismatches, theta = -atan(tau_s / tau_i).
inline double orientation_angle(double tau_s, double tau_i)
{
    if (tau_i == 0.0) {
        require(tau_s != 0.0, Errc::DegenerateGvm, "tau_s = tau_i = 0, orientation undefined");
        return tau_s < 0.0 ? 90.0 : -90.0;
    }
    return -degrees(std::atan(tau_s / tau_i));
}

inline GvmResult gvm(const DispersionModel& model, double length, double pump_omega, double signal_omega,
                     double idler_omega)
{
    require(length > 0.0, Errc::NonPositiveLength, "fibre length must be positive");
    const double kp = model.inverse_group_velocity(pump_omega);
    GvmResult r;
    r.tau_s = length * (kp - model.inverse_group_velocity(signal_omega));
    r.tau_i = length * (kp - model.inverse_group_velocity(idler_omega));
    r.theta_si = orientation_angle(r.tau_s, r.tau_i);
    return r;
}

// ---------------------------------------------------------------------------
// Operating-point calibration
// ---------------------------------------------------------------------------

struct OperatingPoint
{
    double pump_wavelength = nm(751.1);
    double idler_wavelength = nm(1593.0);
};

inline FrequencyRange default_frequency_range() { return FrequencyRange::from_wavelengths(um(0.40), um(2.6)); }

struct CalibratedDispersion
{
    double core_radius = 0.0;
    DispersionModel strand;
    DispersionModel model;  // Taylor model anchored on the strand at the pump
    double pump_omega = 0.0;
    double signal_omega = 0.0;
    double idler_omega = 0.0;
    double signal_delay_per_length = 0.0;  // k'(w_p) - k'(w_s), s/m
};

// Strand radius whose far-detuned phasematching branch maps the pump onto the
// requested idler.
inline double calibrate_strand_radius(const OperatingPoint& op, FrequencyRange range = default_frequency_range())
{
    const double wp = wavelength_to_omega(op.pump_wavelength);
    const double wi = wavelength_to_omega(op.idler_wavelength);
    const double ws = 2.0 * wp - wi;
    auto mismatch = [&](double radius) {
        const auto m = DispersionModel::step_index_strand(radius, range);
        return 2.0 * m.propagation_constant(wp) - m.propagation_constant(ws) - m.propagation_constant(wi);
    };
    double prev_a = um(1.0);
    double prev_f = mismatch(prev_a);
    for (double a = um(1.05); a <= um(2.0) + 1e-12; a += um(0.05)) {
        const double f = mismatch(a);
        if (std::signbit(f) != std::signbit(prev_f)) return find_root(mismatch, prev_a, a);
        prev_a = a;
        prev_f = f;
    }
    fail(Errc::NoIntersection, "no strand radius in [1, 2] um phasematches the requested operating point");
}

// Builds the default fibre model. The strand fixes the operating wavelengths,
// k, k' at the pump and the signal group-delay mismatch; the quartic Taylor
// terms are then solved so that Delta k = 0 and tau_i = 0 hold exactly at the
// operating point:
//   beta4 = -6 T / W^3,  beta3 = beta4 W / 6,  beta2 = -beta4 W^2 / 12,
// with W = w_s - w_p and T = k'(w_p) - k'(w_s).
inline CalibratedDispersion calibrate_operating_point(const OperatingPoint& op = {},
                                                      FrequencyRange range = default_frequency_range())
{
    const double radius = calibrate_strand_radius(op, range);
    auto strand = DispersionModel::step_index_strand(radius, range);
    const double wp = wavelength_to_omega(op.pump_wavelength);
    const double wi = wavelength_to_omega(op.idler_wavelength);
    const double ws = 2.0 * wp - wi;
    const double big_w = ws - wp;
    const double t = strand.inverse_group_velocity(wp) - strand.inverse_group_velocity(ws);
    const double b4 = -6.0 * t / (big_w * big_w * big_w);
    const double b3 = b4 * big_w / 6.0;
    const double b2 = -b4 * big_w * big_w / 12.0;
    auto model = DispersionModel::polynomial(
        wp, {strand.propagation_constant(wp), strand.inverse_group_velocity(wp), b2, b3, b4}, range);
    return {radius, std::move(strand), std::move(model), wp, ws, wi, t};
}

}  // namespace hersim
