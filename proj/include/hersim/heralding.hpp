#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "hersim/error.hpp"
#include "hersim/fockspace.hpp"
#include "hersim/jsa.hpp"
#include "hersim/units.hpp"

namespace hersim {

enum class FilterKind { Flat, Gaussian };

struct DetectorFilter
{
    FilterKind kind = FilterKind::Flat;
    double center_wavelength = nm(1593.0);
    double fwhm_wavelength = nm(10.0);

    static DetectorFilter flat() { return {}; }
    static DetectorFilter gaussian(double center, double fwhm) { return {FilterKind::Gaussian, center, fwhm}; }

    // Power transmission |d(w)|^2.
    double transmission(double omega) const
    {
        if (kind == FilterKind::Flat) return 1.0;
        require(fwhm_wavelength > 0.0, Errc::InvalidArgument, "filter FWHM must be positive");
        const double fwhm = wavelength_width_to_omega(center_wavelength, fwhm_wavelength);
        const double s = fwhm / (2.0 * std::sqrt(std::log(2.0)));
        const double x = omega - wavelength_to_omega(center_wavelength);
        return std::exp(-x * x / (s * s));
    }

    Eigen::VectorXd transmission(const UniformAxis& axis) const
    {
        Eigen::VectorXd t(static_cast<Eigen::Index>(axis.count));
        for (std::size_t i = 0; i < axis.count; ++i) t(static_cast<Eigen::Index>(i)) = transmission(axis[i]);
        return t;
    }
};

// Which photon of the pair is kept; the other one is detected as the herald.
enum class HeraldedArm { Signal, Idler };

struct HeraldKernel
{
    UniformAxis axis;
    Eigen::VectorXd weights;
    Eigen::MatrixXcd values;   // G[j, k], trace 1 under the weights
    double herald_weight = 0;  // trace before normalization
    HeraldedArm arm = HeraldedArm::Signal;
    bool normalized = true;
};

struct KernelModes
{
    Eigen::VectorXd eigenvalues;  // descending
    Eigen::MatrixXcd modes;       // columns, unit norm under the kernel weights
};

namespace detail {

inline void check_kernel(const HeraldKernel& g)
{
    const double scale = std::max(g.values.cwiseAbs().maxCoeff(), 1e-300);
    require((g.values - g.values.adjoint()).cwiseAbs().maxCoeff() <= 1e-12 * scale, Errc::InvalidArgument,
            "herald kernel is not Hermitian");
}

}  // namespace detail

inline HeraldKernel herald_kernel(const JointAmplitude& f, const DetectorFilter& filter = {},
                                  HeraldedArm arm = HeraldedArm::Signal)
{
    const bool keep_signal = arm == HeraldedArm::Signal;
    const UniformAxis& kept = keep_signal ? f.grid.signal : f.grid.idler;
    const UniformAxis& traced = keep_signal ? f.grid.idler : f.grid.signal;
    const Eigen::VectorXd tw = SpectralGrid::to_vector(traced.weights()).cwiseProduct(filter.transmission(traced));
    require(tw.maxCoeff() > 0.0, Errc::EmptyOverlap, "detector filter has no support on the grid");

    // rows of `m` run over the kept frequency
    const Eigen::MatrixXcd m = keep_signal ? Eigen::MatrixXcd(f.values) : Eigen::MatrixXcd(f.values.transpose());
    HeraldKernel g;
    g.axis = kept;
    g.arm = arm;
    g.weights = SpectralGrid::to_vector(kept.weights());
    g.values = m * tw.cast<cplx>().asDiagonal() * m.adjoint();
    g.values = 0.5 * (g.values + g.values.adjoint()).eval();
    const double trace = (g.weights.cast<cplx>().asDiagonal() * g.values).trace().real();
    require(trace > 0.0 && std::isfinite(trace), Errc::EmptyOverlap, "filtered herald probability vanishes");
    g.values /= trace;
    g.herald_weight = trace;
    detail::check_kernel(g);
    return g;
}

inline KernelModes kernel_modes(const HeraldKernel& g)
{
    const Eigen::VectorXd sw = g.weights.cwiseSqrt();
    const Eigen::MatrixXcd h = sw.asDiagonal() * g.values * sw.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (h + h.adjoint()));
    require(es.info() == Eigen::Success, Errc::SvdFailure, "kernel eigendecomposition failed");
    const auto n = h.rows();
    KernelModes k;
    k.eigenvalues = es.eigenvalues().reverse();
    k.modes = sw.cwiseInverse().asDiagonal() * es.eigenvectors().rowwise().reverse();
    const double total = k.eigenvalues.sum();
    require(k.eigenvalues(n - 1) >= -1e-10 * total, Errc::InvalidArgument, "herald kernel is not positive semidefinite");
    k.eigenvalues = k.eigenvalues.cwiseMax(0.0);
    return k;
}

inline double heralded_purity(const HeraldKernel& g)
{
    const auto k = kernel_modes(g);
    const double t = k.eigenvalues.sum();
    return k.eigenvalues.squaredNorm() / (t * t);
}

struct HeraldingEfficiencyResult
{
    cplx alpha0{};
    double p_a = 0.0;
    double p_ab = 0.0;
    double p_h_over_eta = 0.0;
};

struct HeraldingOptions
{
    HeraldedArm arm = HeraldedArm::Signal;
    std::size_t cutoff = 20;
    double retained_mass = 1.0 - 1e-9;
    std::size_t max_modes = 64;
    double convergence = 1e-3;
};

namespace detail {

struct EfficiencyTerms
{
    double p_a = 0.0;
    double p_ab = 0.0;
};

// Heralded arm prepared as a_n^dagger |alpha0 e> with probability weight mu_n;
// the accepted outcome is the ideal seeded state a_p^dagger |alpha0 e> (p the
// principal kernel mode).
inline EfficiencyTerms efficiency_terms(const KernelModes& km, std::size_t retained, const Eigen::VectorXcd& envelope,
                                        const Eigen::VectorXd& weights, cplx alpha0, std::size_t cutoff)
{
    EfficiencyTerms t;
    const Eigen::VectorXcd principal = km.modes.col(0);
    for (std::size_t n = 0; n < retained; ++n) {
        const double mu = km.eigenvalues(static_cast<Eigen::Index>(n));
        std::vector<Eigen::VectorXcd> env{envelope, principal};
        if (n > 0) env.push_back(km.modes.col(static_cast<Eigen::Index>(n)));
        const auto basis = ModeBasis::orthonormalize(env, weights);
        const ArmSpace arm(basis.size(), cutoff, Truncation::TotalPerArm);
        const Eigen::VectorXcd seed = arm.coherent_state(alpha0 * basis.coefficients(0));
        const Eigen::VectorXcd s = arm.apply_creation(seed, basis.coefficients(1));
        const Eigen::VectorXcd v = n == 0 ? s : arm.apply_creation(seed, basis.coefficients(2));
        const double ns = s.squaredNorm();
        require(ns > 0.0, Errc::EmptyOverlap, "seeded reference state vanishes");
        t.p_a += mu * v.squaredNorm();
        t.p_ab += mu * std::norm(s.dot(v)) / ns;
    }
    return t;
}

}  // namespace detail

// P_A and P_AB are reported per pair event and scaled by 1/(1 + |alpha0|^2),
// the largest stimulated enhancement, so both stay within [0, 1].
inline HeraldingEfficiencyResult heralding_efficiency(const JointAmplitude& f, cplx alpha0,
                                                      const DetectorFilter& filter = {},
                                                      const std::optional<Eigen::VectorXcd>& coherent_envelope = {},
                                                      const HeraldingOptions& opts = {})
{
    require(std::norm(alpha0) <= 4.0 + 1e-12, Errc::InvalidArgument, "|alpha0|^2 must not exceed 4");
    const auto g = herald_kernel(f, filter, opts.arm);
    const auto km = kernel_modes(g);
    const double total = km.eigenvalues.sum();
    std::size_t retained = 0;
    double mass = 0.0;
    while (retained < static_cast<std::size_t>(km.eigenvalues.size()) && retained < opts.max_modes
           && mass < opts.retained_mass * total)
        mass += km.eigenvalues(static_cast<Eigen::Index>(retained++));

    Eigen::VectorXcd envelope = coherent_envelope ? *coherent_envelope : Eigen::VectorXcd(km.modes.col(0));
    require(envelope.size() == g.weights.size(), Errc::MismatchedBases, "seed envelope is not sampled on the kernel grid");
    const double en = weighted_norm(envelope, g.weights);
    require(std::abs(en - 1.0) < 1e-6, Errc::InvalidArgument, "seed envelope must be unit-normalized");

    const auto lo = detail::efficiency_terms(km, retained, envelope, g.weights, alpha0, opts.cutoff);
    const auto hi = detail::efficiency_terms(km, retained, envelope, g.weights, alpha0, opts.cutoff + 2);
    const double r_lo = lo.p_ab / lo.p_a;
    const double r_hi = hi.p_ab / hi.p_a;
    require(std::abs(r_hi - r_lo) <= opts.convergence, Errc::TruncationUnconverged,
            "heralding efficiency not converged in the photon-number cutoff");

    const double scale = 1.0 / ((1.0 + std::norm(alpha0)) * mass);
    HeraldingEfficiencyResult r;
    r.alpha0 = alpha0;
    r.p_a = hi.p_a * scale;
    r.p_ab = hi.p_ab * scale;
    r.p_h_over_eta = r_hi;
    return r;
}

}  // namespace hersim
