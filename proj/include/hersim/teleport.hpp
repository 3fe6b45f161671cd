#pragma once

#include <array>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hersim/error.hpp"
#include "hersim/fockspace.hpp"
#include "hersim/heralding.hpp"
#include "hersim/numeric.hpp"
#include "hersim/units.hpp"

namespace hersim {

enum class HerVariant { pd, pa };
enum class HerSign { minus, plus };

// Gaussian spectral amplitude exp(-(w - w0)^2 / (4 sigma^2)); sigma is the
// standard deviation of the intensity |amplitude|^2.
struct GaussianEnvelope
{
    double center_wavelength = nm(1593.0);
    double sigma = trad_per_s(1.0);

    double center_omega() const { return wavelength_to_omega(center_wavelength); }

    Eigen::VectorXcd sample(const UniformAxis& axis, const Eigen::VectorXd& weights) const
    {
        require(sigma > 0.0, Errc::InvalidArgument, "envelope bandwidth must be positive");
        Eigen::VectorXcd v(static_cast<Eigen::Index>(axis.count));
        const double w0 = center_omega();
        for (std::size_t i = 0; i < axis.count; ++i) {
            const double d = axis[i] - w0;
            v(static_cast<Eigen::Index>(i)) = std::exp(-d * d / (4.0 * sigma * sigma));
        }
        const double n = weighted_norm(v, weights);
        require(n > 0.0, Errc::EmptyOverlap, "envelope has no support on the grid");
        return v / n;
    }
};

struct HerSpec
{
    HerVariant variant = HerVariant::pd;
    std::optional<HerSign> sign;                       // defaults from the variant
    cplx alpha{0.0, 0.0};                              // per-arm coherent amplitude
    std::optional<GaussianEnvelope> coherent_envelope; // defaults to the qubit envelope
    HeraldKernel herald;
    std::size_t n_schmidt_modes = 0;                   // 0: keep modes until the mass target is met
    std::shared_ptr<const KernelModes> herald_modes;   // optional cache of kernel_modes(herald)

    // Decomposes the kernel once so repeated protocol runs can share it.
    HerSpec& prepare()
    {
        herald_modes = std::make_shared<const KernelModes>(kernel_modes(herald));
        return *this;
    }

    KernelModes modes() const { return herald_modes ? *herald_modes : kernel_modes(herald); }

    HerSign resolved_sign() const
    {
        if (sign) return *sign;
        return variant == HerVariant::pd ? HerSign::minus : HerSign::plus;
    }
};

struct QubitSpec
{
    double theta = 0.0;
    double center_wavelength = nm(1593.0);
    double sigma = trad_per_s(1.0);

    double x() const { return std::sin(theta); }
    double y() const { return std::cos(theta); }
    GaussianEnvelope envelope() const { return {center_wavelength, sigma}; }
};

using Outcome = std::pair<int, int>;

struct MeasurementSpec
{
    double tau = 0.99;
    cplx z{0.0, 0.0};
    DetectorFilter detector = DetectorFilter::gaussian(nm(1593.0), nm(10.0));
    std::vector<Outcome> accepted_outcomes{{0, 1}, {1, 0}};

    // Coherent amplitude that reaches each detector arm after BS2.
    static cplx detector_amplitude(cplx alpha) { return alpha * cplx(1.0, 1.0) / std::numbers::sqrt2; }

    // Solves i z sqrt(1 - tau) = detector amplitude for z.
    static MeasurementSpec matched(const HerSpec& her, double tau = 0.99,
                                   DetectorFilter detector = DetectorFilter::gaussian(nm(1593.0), nm(10.0)))
    {
        require(tau >= 0.0 && tau < 1.0, Errc::InvalidArgument, "displacement transmittance must lie in [0, 1)");
        MeasurementSpec m;
        m.tau = tau;
        m.detector = detector;
        m.z = detector_amplitude(her.alpha) / (cplx(0.0, 1.0) * std::sqrt(1.0 - tau));
        return m;
    }

    void validate(const HerSpec& her) const
    {
        require(tau >= 0.0 && tau < 1.0, Errc::ConstraintViolation, "displacement transmittance must lie in [0, 1)");
        const cplx want = detector_amplitude(her.alpha);
        const cplx got = cplx(0.0, 1.0) * z * std::sqrt(1.0 - tau);
        require(std::abs(got - want) <= 1e-10 * std::max(1.0, std::abs(want)), Errc::ConstraintViolation,
                "displacement beam does not cancel the coherent background");
        require(!accepted_outcomes.empty(), Errc::InvalidArgument, "no accepted outcomes");
    }
};

struct ProtocolOptions
{
    std::size_t theta_samples = 32;
    double theta_i = 0.0;
    double theta_f = 2.0 * std::numbers::pi;
    std::size_t cutoff = 3;
    bool check_cutoff = true;
    double cutoff_tolerance = 1e-3;
    double retained_mass = 0.999;
    std::size_t max_modes = 64;
    double envelope_half_width = 7.0;  // qubit / coherent envelopes covered to +-this many sigma
};

struct ProtocolResult
{
    double avg_fidelity = 0.0;
    std::vector<double> thetas;
    std::vector<double> per_theta_fidelity;
    double success_probability = 0.0;
    double rejected_probability = 0.0;
    bool truncation_flag = false;
    double mode_leakage = 0.0;
    std::size_t retained_modes = 0;
    std::array<double, 4> correction_phases{};  // per accepted outcome, radians
    std::vector<double> per_outcome_fidelity;   // theta-averaged, conditioned on each accepted outcome
};

inline double average_fidelity(const std::vector<double>& curve, double theta_i, double theta_f)
{
    require(!curve.empty(), Errc::EmptyCurve, "fidelity curve has no samples");
    require(theta_f > theta_i, Errc::InvalidArgument, "empty theta interval");
    double s = 0.0;
    for (double f : curve) s += f;
    return s / static_cast<double>(curve.size());
}

// Uniform samples of a periodic integrand over [theta_i, theta_f).
inline std::vector<double> theta_grid(std::size_t n, double theta_i, double theta_f)
{
    require(n > 0, Errc::EmptyCurve, "need at least one theta sample");
    std::vector<double> t(n);
    for (std::size_t k = 0; k < n; ++k) t[k] = theta_i + (theta_f - theta_i) * static_cast<double>(k) / static_cast<double>(n);
    return t;
}

namespace detail {

struct RetainedModes
{
    std::size_t count = 0;
    double mass = 0.0;
};

inline RetainedModes retain(const KernelModes& km, std::size_t requested, double target, std::size_t cap)
{
    RetainedModes r;
    const double total = km.eigenvalues.sum();
    const auto n = static_cast<std::size_t>(km.eigenvalues.size());
    if (requested > 0) {
        r.count = std::min(requested, n);
        for (std::size_t i = 0; i < r.count; ++i) r.mass += km.eigenvalues(static_cast<Eigen::Index>(i));
    } else {
        while (r.count < std::min(n, cap) && r.mass < target * total)
            r.mass += km.eigenvalues(static_cast<Eigen::Index>(r.count++));
    }
    r.mass /= total;
    return r;
}

// 50:50 BS2 on two identical arms, cached by (modes, cutoff).
inline const Eigen::MatrixXcd& bs2(const ArmSpace& arm)
{
    static std::mutex mu;
    static std::map<std::pair<std::size_t, std::size_t>, Eigen::MatrixXcd> cache;
    std::lock_guard lock(mu);
    const auto key = std::make_pair(arm.modes(), arm.cutoff());
    auto it = cache.find(key);
    if (it == cache.end()) it = cache.emplace(key, beamsplitter_pair(arm, arm, 0.5)).first;
    return it->second;
}

inline int outcome_slot(const std::vector<Outcome>& acc, int nb, int nc)
{
    for (std::size_t o = 0; o < acc.size(); ++o)
        if (acc[o].first == nb && acc[o].second == nc) return static_cast<int>(o);
    return -1;
}

// Quadratic/quartic forms in (x, y) accumulated over Schmidt terms.
// tensor[o][k][l][i][j] = sum_n w_n <k|R^o_ij|l>, with k, l in {vacuum, qubit photon}
// on Alice's arm and R^o_ij = Tr_BC[Pi^o U |Psi_i><Psi_j| U^dagger].
struct ProtocolTensors
{
    std::vector<std::array<cplx, 16>> tensor;
    std::vector<std::array<cplx, 4>> accepted;
    std::array<cplx, 4> rejected{};
    double norm = 0.0;

    explicit ProtocolTensors(std::size_t outcomes = 0) : tensor(outcomes), accepted(outcomes)
    {
        for (auto& t : tensor) t.fill(cplx{});
        for (auto& a : accepted) a.fill(cplx{});
    }
};

struct TermSpec
{
    Eigen::VectorXcd herald_mode;  // coefficients of the heralded Schmidt mode on the basis
    Eigen::VectorXcd qubit_mode;   // coefficients of the qubit photon mode
    double sign = -1.0;            // -1: a^+ - b^+, +1: a^+ + b^+
    cplx vacuum_amplitude{};       // in-frame vacuum component of the HER term
    Eigen::MatrixXcd filter;       // detector filter <m|T|n>
    double weight = 1.0;
};

inline void accumulate_term(const TermSpec& t, std::size_t cutoff, const std::vector<Outcome>& acc, ProtocolTensors& out)
{
    const auto modes = static_cast<std::size_t>(t.herald_mode.size());
    const ArmSpace arm(modes, cutoff, Truncation::TotalPerArm);
    const FockSpace space(std::vector<ArmSpace>{arm, arm, arm}, std::numeric_limits<std::size_t>::max());
    const Eigen::VectorXcd vac = arm.vacuum();
    const Eigen::VectorXcd one_h = arm.apply_creation(vac, t.herald_mode);
    const Eigen::VectorXcd one_q = arm.apply_creation(vac, t.qubit_mode);

    // HER on (A, B) in the displaced frame
    Eigen::VectorXcd her = FockSpace::kron(one_h, vac) + t.sign * FockSpace::kron(vac, one_h);
    if (t.vacuum_amplitude != cplx{}) her += t.vacuum_amplitude * FockSpace::kron(vac, vac);
    const double her_norm = her.squaredNorm();

    std::array<Eigen::VectorXcd, 2> psi{FockSpace::kron(her, vac), FockSpace::kron(her, one_q)};
    const Eigen::MatrixXcd& u = bs2(arm);
    const auto da = static_cast<Eigen::Index>(arm.dim());
    const Eigen::Index dbc = da * da;
    std::array<Eigen::MatrixXcd, 2> m;
    for (int i = 0; i < 2; ++i) {
        const Eigen::VectorXcd v = space.apply(u, {1, 2}, psi[static_cast<std::size_t>(i)]);
        m[static_cast<std::size_t>(i)] = Eigen::Map<const Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(v.data(), da, dbc);
    }

    const auto povm = arm.counting_povm(t.filter);
    const std::array<Eigen::VectorXcd, 2> alice{vac, one_q};
    // Tr[M_i Pi M_j^dagger] = sum(Pi o (M_j^dagger M_i)^T); enough for rejected outcomes
    std::array<Eigen::MatrixXcd, 4> gram;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            gram[static_cast<std::size_t>(2 * i + j)]
                = (m[static_cast<std::size_t>(j)].adjoint() * m[static_cast<std::size_t>(i)]).transpose();
    for (std::size_t nb = 0; nb < povm.size(); ++nb)
        for (std::size_t nc = 0; nc < povm.size(); ++nc) {
            const Eigen::MatrixXcd pi = FockSpace::kron(povm[nb], povm[nc]).conjugate();
            const int slot = outcome_slot(acc, static_cast<int>(nb), static_cast<int>(nc));
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j) {
                    if (slot < 0) {
                        out.rejected[static_cast<std::size_t>(2 * i + j)]
                            += t.weight * pi.cwiseProduct(gram[static_cast<std::size_t>(2 * i + j)]).sum();
                        continue;
                    }
                    const Eigen::MatrixXcd r = m[static_cast<std::size_t>(i)] * pi * m[static_cast<std::size_t>(j)].adjoint();
                    const cplx tr = t.weight * r.trace();
                    const auto s = static_cast<std::size_t>(slot);
                    out.accepted[s][static_cast<std::size_t>(2 * i + j)] += tr;
                    for (int k = 0; k < 2; ++k)
                        for (int l = 0; l < 2; ++l)
                            out.tensor[s][static_cast<std::size_t>(8 * k + 4 * l + 2 * i + j)]
                                += t.weight * alice[static_cast<std::size_t>(k)].dot(r * alice[static_cast<std::size_t>(l)]);
                }
        }
    out.norm += t.weight * her_norm;
}

struct ThetaEvaluation
{
    std::vector<double> fidelity;
    std::vector<double> success;
    std::vector<double> rejected;
    std::vector<std::vector<double>> per_outcome;  // un-normalized fidelity numerators
    std::vector<std::vector<double>> outcome_probability;
};

inline ThetaEvaluation evaluate_theta(const ProtocolTensors& pt, const std::vector<double>& thetas,
                                      const std::vector<double>& phases)
{
    ThetaEvaluation ev;
    ev.per_outcome.assign(pt.tensor.size(), {});
    ev.outcome_probability.assign(pt.tensor.size(), {});
    for (double th : thetas) {
        const std::array<double, 2> c{std::sin(th), std::cos(th)};
        double num = 0.0, den = 0.0, rej = 0.0;
        for (std::size_t o = 0; o < pt.tensor.size(); ++o) {
            double on = 0.0;
            for (int k = 0; k < 2; ++k)
                for (int l = 0; l < 2; ++l) {
                    const cplx ph = std::polar(1.0, phases[o] * (k - l));
                    for (int i = 0; i < 2; ++i)
                        for (int j = 0; j < 2; ++j)
                            on += (ph * c[static_cast<std::size_t>(k)] * c[static_cast<std::size_t>(l)] * c[static_cast<std::size_t>(i)]
                                   * c[static_cast<std::size_t>(j)] * pt.tensor[o][static_cast<std::size_t>(8 * k + 4 * l + 2 * i + j)])
                                      .real();
                }
            double od = 0.0;
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j)
                    od += (c[static_cast<std::size_t>(i)] * c[static_cast<std::size_t>(j)] * pt.accepted[o][static_cast<std::size_t>(2 * i + j)]).real();
            num += on;
            den += od;
            ev.per_outcome[o].push_back(on);
            ev.outcome_probability[o].push_back(od);
        }
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
                rej += (c[static_cast<std::size_t>(i)] * c[static_cast<std::size_t>(j)] * pt.rejected[static_cast<std::size_t>(2 * i + j)]).real();
        require(den > 0.0, Errc::EmptyOverlap, "accepted outcomes have zero probability");
        ev.fidelity.push_back(std::clamp(num / den, 0.0, 1.0));
        ev.success.push_back(den / pt.norm);
        ev.rejected.push_back(rej / pt.norm);
    }
    return ev;
}

inline const std::array<double, 4> kPhaseGates{0.0, 0.5 * std::numbers::pi, std::numbers::pi, 1.5 * std::numbers::pi};

// Phase-gate correction per accepted outcome, chosen once on the ideal
// single-mode resource (alpha = 0, perfect overlap, no filter) by maximising
// the outcome's averaged fidelity, then frozen.
inline std::vector<double> calibrated_corrections(HerSign sign, const std::vector<Outcome>& acc)
{
    static std::mutex mu;
    static std::map<std::pair<int, std::vector<Outcome>>, std::vector<double>> cache;
    std::lock_guard lock(mu);
    const auto key = std::make_pair(static_cast<int>(sign), acc);
    if (auto it = cache.find(key); it != cache.end()) return it->second;

    TermSpec t;
    t.herald_mode = Eigen::VectorXcd::Ones(1);
    t.qubit_mode = Eigen::VectorXcd::Ones(1);
    t.sign = sign == HerSign::minus ? -1.0 : 1.0;
    t.filter = Eigen::MatrixXcd::Identity(1, 1);
    ProtocolTensors pt(acc.size());
    accumulate_term(t, 2, acc, pt);
    const auto thetas = theta_grid(16, 0.0, 2.0 * std::numbers::pi);
    std::vector<double> best(acc.size(), 0.0);
    for (std::size_t o = 0; o < acc.size(); ++o) {
        double top = -1.0;
        for (double g : kPhaseGates) {
            std::vector<double> ph(acc.size(), 0.0);
            ph[o] = g;
            const auto ev = evaluate_theta(pt, thetas, ph);
            double s = 0.0;
            for (double v : ev.per_outcome[o]) s += v;
            if (s > top + 1e-12) {
                top = s;
                best[o] = g;
            }
        }
    }
    cache.emplace(key, best);
    return best;
}

// Heralded axis extended with the same step and origin so it also covers the
// given frequency interval; returns the axis and the index offset of the
// original first sample.
inline std::pair<UniformAxis, std::size_t> extend_axis(const UniformAxis& a, double lo, double hi)
{
    const auto first = static_cast<long>(std::floor((lo - a.start) / a.step));
    const auto last = static_cast<long>(std::ceil((hi - a.start) / a.step));
    const long begin = std::min(0L, first);
    const long end = std::max(static_cast<long>(a.count) - 1, last);
    UniformAxis out{a.start + static_cast<double>(begin) * a.step, a.step, static_cast<std::size_t>(end - begin + 1)};
    return {out, static_cast<std::size_t>(-begin)};
}

inline Eigen::VectorXcd zero_pad(const Eigen::VectorXcd& v, std::size_t offset, std::size_t count)
{
    Eigen::VectorXcd out = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(count));
    out.segment(static_cast<Eigen::Index>(offset), v.size()) = v;
    return out;
}

inline Eigen::VectorXcd unit(const Eigen::VectorXcd& v)
{
    const double n = v.norm();
    require(n > 0.0, Errc::BasisMissingMode, "mode has no component in the basis");
    return v / n;
}

}  // namespace detail

// Mixture over retained Schmidt modes of (a_n^+ -/+ b_n^+)|alpha e>|alpha e>
// on arms (A, B), held in the displaced frame of the coherent background.
inline TruncatedState build_her(const HerSpec& spec, const ModeBasis& basis, std::size_t cutoff = 3)
{
    const auto& g = spec.herald;
    require(basis.weights().size() == g.weights.size(), Errc::MismatchedBases, "basis and kernel grids differ");
    const auto km = spec.modes();
    const auto kept = detail::retain(km, spec.n_schmidt_modes, 0.999, 64);
    require(kept.count >= 1, Errc::InvalidArgument, "no Schmidt modes retained");

    Eigen::VectorXcd env = km.modes.col(0);
    if (spec.coherent_envelope) env = spec.coherent_envelope->sample(g.axis, g.weights);
    const double sign = spec.resolved_sign() == HerSign::minus ? -1.0 : 1.0;

    const ArmSpace arm(basis.size(), cutoff, Truncation::TotalPerArm);
    const FockSpace space(std::vector<ArmSpace>{arm, arm});
    const Eigen::VectorXcd vac = arm.vacuum();
    Eigen::MatrixXcd rho = Eigen::MatrixXcd::Zero(space.dim(), space.dim());
    double total = 0.0;
    for (std::size_t n = 0; n < kept.count; ++n) {
        const Eigen::VectorXcd phi = km.modes.col(static_cast<Eigen::Index>(n));
        const Eigen::VectorXcd c = basis.project(phi);
        require(c.squaredNorm() > 1.0 - 1e-8, Errc::BasisMissingMode, "Schmidt mode is not spanned by the basis");
        const Eigen::VectorXcd one = arm.apply_creation(vac, c);
        Eigen::VectorXcd v = FockSpace::kron(one, vac) + sign * FockSpace::kron(vac, one);
        if (sign > 0.0 && spec.alpha != cplx{})
            v += 2.0 * std::conj(spec.alpha) * weighted_inner(env, phi, g.weights) * FockSpace::kron(vac, vac);
        const double mu = km.eigenvalues(static_cast<Eigen::Index>(n));
        rho += mu * v * v.adjoint();
        total += mu * v.squaredNorm();
    }
    TruncatedState st{space, rho / total, {}};
    if (spec.alpha != cplx{}) {
        const Eigen::VectorXcd ce = basis.project(env);
        require(ce.squaredNorm() > 1.0 - 1e-8, Errc::BasisMissingMode, "coherent envelope is not spanned by the basis");
        for (int a = 0; a < 2; ++a)
            for (Eigen::Index m = 0; m < ce.size(); ++m) st.frame_displacements.push_back(spec.alpha * ce(m));
    }
    return st;
}

inline ProtocolResult run_protocol(const HerSpec& her, const QubitSpec& qubit, const MeasurementSpec& meas,
                                   const ProtocolOptions& opts = {})
{
    meas.validate(her);
    require(opts.cutoff >= 2, Errc::TruncationUnconverged, "cutoff below the in-frame photon content");
    const auto& g = her.herald;
    const std::shared_ptr<const KernelModes> held = her.herald_modes;
    const KernelModes computed = held ? KernelModes{} : kernel_modes(g);
    const KernelModes& km = held ? *held : computed;
    const auto kept = detail::retain(km, her.n_schmidt_modes, opts.retained_mass, opts.max_modes);
    require(kept.count >= 1, Errc::InvalidArgument, "no Schmidt modes retained");

    const GaussianEnvelope qenv = qubit.envelope();
    const GaussianEnvelope cenv = her.coherent_envelope.value_or(qenv);
    const double reach_q = opts.envelope_half_width * qenv.sigma;
    const double reach_c = opts.envelope_half_width * cenv.sigma;
    const double lo = std::min(qenv.center_omega() - reach_q, cenv.center_omega() - reach_c);
    const double hi = std::max(qenv.center_omega() + reach_q, cenv.center_omega() + reach_c);
    const auto [axis, offset] = detail::extend_axis(g.axis, lo, hi);
    const Eigen::VectorXd w = SpectralGrid::to_vector(axis.weights());
    const Eigen::VectorXcd beta = qenv.sample(axis, w);
    const Eigen::VectorXcd env = cenv.sample(axis, w);
    const Eigen::VectorXd transmission = meas.detector.transmission(axis);

    const double sign = her.resolved_sign() == HerSign::minus ? -1.0 : 1.0;
    const auto phases = detail::calibrated_corrections(her.resolved_sign(), meas.accepted_outcomes);

    auto terms = [&](std::size_t n) {
        const Eigen::VectorXcd phi = detail::zero_pad(km.modes.col(static_cast<Eigen::Index>(n)), offset, axis.count);
        const auto basis = ModeBasis::orthonormalize({phi, beta}, w);
        detail::TermSpec t;
        t.herald_mode = detail::unit(basis.coefficients(0));
        t.qubit_mode = detail::unit(basis.coefficients(1));
        t.sign = sign;
        if (sign > 0.0) t.vacuum_amplitude = 2.0 * std::conj(her.alpha) * weighted_inner(env, phi, w) / weighted_norm(phi, w);
        t.filter = basis.response_matrix(transmission);
        t.weight = km.eigenvalues(static_cast<Eigen::Index>(n));
        return t;
    };

    detail::ProtocolTensors pt(meas.accepted_outcomes.size());
    std::vector<detail::TermSpec> specs;
    for (std::size_t n = 0; n < kept.count; ++n) {
        specs.push_back(terms(n));
        detail::accumulate_term(specs.back(), opts.cutoff, meas.accepted_outcomes, pt);
    }
    const auto thetas = theta_grid(opts.theta_samples, opts.theta_i, opts.theta_f);
    const auto ev = detail::evaluate_theta(pt, thetas, phases);

    ProtocolResult r;
    r.thetas = thetas;
    r.per_theta_fidelity = ev.fidelity;
    r.avg_fidelity = average_fidelity(ev.fidelity, opts.theta_i, opts.theta_f);
    r.success_probability = average_fidelity(ev.success, opts.theta_i, opts.theta_f);
    r.rejected_probability = average_fidelity(ev.rejected, opts.theta_i, opts.theta_f);
    r.retained_modes = kept.count;
    r.mode_leakage = 1.0 - kept.mass;
    r.truncation_flag = kept.mass < 0.999;
    for (std::size_t o = 0; o < phases.size() && o < r.correction_phases.size(); ++o) r.correction_phases[o] = phases[o];
    for (std::size_t o = 0; o < phases.size(); ++o) {
        std::vector<double> f;
        for (std::size_t k = 0; k < thetas.size(); ++k)
            f.push_back(ev.outcome_probability[o][k] > 0.0
                            ? std::clamp(ev.per_outcome[o][k] / ev.outcome_probability[o][k], 0.0, 1.0)
                            : 0.0);
        r.per_outcome_fidelity.push_back(average_fidelity(f, opts.theta_i, opts.theta_f));
    }

    if (opts.check_cutoff) {
        // every term carries the same photon-number content, so the dominant one decides
        detail::ProtocolTensors a(meas.accepted_outcomes.size()), b(meas.accepted_outcomes.size());
        detail::accumulate_term(specs.front(), opts.cutoff, meas.accepted_outcomes, a);
        detail::accumulate_term(specs.front(), opts.cutoff + 1, meas.accepted_outcomes, b);
        const auto ea = detail::evaluate_theta(a, thetas, phases);
        const auto eb = detail::evaluate_theta(b, thetas, phases);
        const double df = std::abs(average_fidelity(ea.fidelity, opts.theta_i, opts.theta_f)
                                   - average_fidelity(eb.fidelity, opts.theta_i, opts.theta_f));
        const double dp = std::abs(average_fidelity(ea.success, opts.theta_i, opts.theta_f)
                                   - average_fidelity(eb.success, opts.theta_i, opts.theta_f));
        require(std::max(df, dp) <= opts.cutoff_tolerance, Errc::TruncationUnconverged,
                "teleportation fidelity changes with the photon-number cutoff");
    }
    return r;
}

}  // namespace hersim
