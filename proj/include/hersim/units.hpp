#pragma once

#include <cmath>
#include <numbers>

namespace hersim {

// All internal quantities are SI: angular frequency in rad/s, wavelength and
// length in m, time in s, wavenumber in 1/m.
inline constexpr double kSpeedOfLight = 299792458.0;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr double kTera = 1e12;

inline double wavelength_to_omega(double wavelength) { return kTwoPi * kSpeedOfLight / wavelength; }
inline double omega_to_wavelength(double omega) { return kTwoPi * kSpeedOfLight / omega; }

inline double nm(double v) { return v * 1e-9; }
inline double um(double v) { return v * 1e-6; }
inline double cm(double v) { return v * 1e-2; }
inline double trad_per_s(double v) { return v * kTera; }

// Converts a wavelength interval centred on `center` to an angular-frequency
// interval at that carrier (first-order).
inline double wavelength_width_to_omega(double center, double width)
{
    return kTwoPi * kSpeedOfLight * width / (center * center);
}

// Gaussian amplitude a(w) = exp(-(w-w0)^2 / (2 s^2)) has intensity FWHM 2 s sqrt(ln 2).
inline double amplitude_sigma_from_intensity_fwhm(double fwhm)
{
    return fwhm / (2.0 * std::sqrt(std::numbers::ln2));
}

inline double radians(double deg) { return deg * std::numbers::pi / 180.0; }
inline double degrees(double rad) { return rad * 180.0 / std::numbers::pi; }

}  // namespace hersim
