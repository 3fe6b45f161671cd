#include <chrono>
#include <cmath>

#include <gtest/gtest.h>

#include "hersim/teleport.hpp"

using namespace hersim;

namespace {

constexpr double kPi = std::numbers::pi;

const UniformAxis& ideal_axis()
{
    static const UniformAxis a = UniformAxis::centered(wavelength_to_omega(nm(1593)), trad_per_s(8), 201);
    return a;
}

// Kernel sum_n mu_n |g_n><g_n| with Hermite-Gauss g_n matched to a qubit envelope.
HeraldKernel synthetic_kernel(const std::vector<double>& mu, double sigma = trad_per_s(1.0))
{
    const auto& axis = ideal_axis();
    const Eigen::VectorXd w = SpectralGrid::to_vector(axis.weights());
    HeraldKernel g{axis, w, Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(axis.count), static_cast<Eigen::Index>(axis.count)),
                   1.0, HeraldedArm::Idler, true};
    const double w0 = wavelength_to_omega(nm(1593));
    for (std::size_t n = 0; n < mu.size(); ++n) {
        Eigen::VectorXcd v(static_cast<Eigen::Index>(axis.count));
        for (std::size_t i = 0; i < axis.count; ++i) {
            const double x = (axis[i] - w0) / sigma;
            v(static_cast<Eigen::Index>(i)) = std::exp(-x * x / 4.0) * (n == 0 ? 1.0 : x);
        }
        v /= weighted_norm(v, w);
        g.values += mu[n] * v * v.adjoint();
    }
    return g;
}

HerSpec ideal_her(HerVariant variant = HerVariant::pd, cplx alpha = 0.0)
{
    HerSpec h;
    h.variant = variant;
    h.alpha = alpha;
    h.herald = synthetic_kernel({1.0});
    return h;
}

MeasurementSpec unfiltered(const HerSpec& h)
{
    return MeasurementSpec::matched(h, 0.99, DetectorFilter::flat());
}

const CalibratedDispersion& calibrated()
{
    static const CalibratedDispersion c = calibrate_operating_point();
    return c;
}

HerSpec paper_her(double length = 0.8, HerVariant variant = HerVariant::pd, cplx alpha = 0.0)
{
    const auto& c = calibrated();
    const PhasematchConfig cfg{c.model};
    const auto grid = default_grid(cfg, PumpEnvelope{}, length, c.signal_omega, c.idler_omega, 256);
    HerSpec h;
    h.variant = variant;
    h.alpha = alpha;
    h.herald = herald_kernel(build_jsa(cfg, PumpEnvelope{}, length, grid), DetectorFilter::flat(), HeraldedArm::Idler);
    h.prepare();
    return h;
}

QubitSpec qubit(double sigma_trad = 1.0, double center_nm = 1593.0)
{
    QubitSpec q;
    q.sigma = trad_per_s(sigma_trad);
    q.center_wavelength = nm(center_nm);
    return q;
}

// Lab-frame brute force: one mode per arm, explicit coherent states,
// displaced-number projectors and displaced phase corrections.
double brute_force_fidelity(double sign, cplx alpha, const std::array<double, 4>& phases, std::size_t cutoff = 16,
                            std::size_t thetas = 16)
{
    const ArmSpace arm(1, cutoff);
    const FockSpace space(3, 1, cutoff);
    const Eigen::MatrixXcd ad = arm.creation(0);
    const Eigen::MatrixXcd d = arm.displacement(0, alpha);
    const Eigen::VectorXcd vac = arm.vacuum();
    const Eigen::VectorXcd coh = d * vac;
    const Eigen::VectorXcd one = d * ad * vac;
    const Eigen::VectorXcd her = FockSpace::kron(ad * coh, coh) + sign * FockSpace::kron(coh, ad * coh);
    const Eigen::MatrixXcd bs = beamsplitter_pair(arm, arm, 0.5);
    const cplx gamma = MeasurementSpec::detector_amplitude(alpha);
    const Eigen::MatrixXcd dg = arm.displacement(0, gamma);
    const std::array<std::pair<int, int>, 2> outcomes{{{0, 1}, {1, 0}}};
    const auto n = static_cast<Eigen::Index>(arm.dim());

    double total = 0.0;
    for (double th : theta_grid(thetas, 0.0, 2.0 * kPi)) {
        const double x = std::sin(th), y = std::cos(th);
        const Eigen::VectorXcd q = x * coh + y * one;
        const Eigen::VectorXcd psi = space.apply(bs, {1, 2}, FockSpace::kron(her, q));
        double num = 0.0, den = 0.0;
        for (std::size_t o = 0; o < outcomes.size(); ++o) {
            Eigen::VectorXcd eb = Eigen::VectorXcd::Zero(n), ec = Eigen::VectorXcd::Zero(n);
            eb(outcomes[o].first) = 1.0;
            ec(outcomes[o].second) = 1.0;
            const Eigen::VectorXcd pb = dg * eb, pc = dg * ec;
            const Eigen::VectorXcd bc = FockSpace::kron(pb, pc);
            Eigen::VectorXcd alice(n);
            for (Eigen::Index a = 0; a < n; ++a) alice(a) = bc.dot(psi.segment(a * n * n, n * n));
            Eigen::VectorXcd ph(n);
            for (Eigen::Index k = 0; k < n; ++k) ph(k) = std::polar(1.0, phases[o] * static_cast<double>(k));
            const Eigen::VectorXcd corrected = d * ph.asDiagonal() * d.adjoint() * alice;
            const Eigen::VectorXcd target = x * coh + y * one;
            num += std::norm(target.dot(corrected));
            den += alice.squaredNorm();
        }
        total += num / den;
    }
    return total / static_cast<double>(thetas);
}

// Two modes per arm: mode 0 carries the qubit photon and the coherent
// background, the HER photon occupies s * mode0 + sqrt(1 - s^2) * mode1.
double two_mode_brute_force(double sign, cplx alpha, double s, const std::array<double, 4>& phases, std::size_t cutoff)
{
    const ArmSpace arm(2, cutoff, Truncation::TotalPerArm);
    const FockSpace space(std::vector<ArmSpace>{arm, arm, arm}, std::numeric_limits<std::size_t>::max());
    Eigen::VectorXcd cphi(2), cb(2);
    cphi << s, std::sqrt(1.0 - s * s);
    cb << 1.0, 0.0;
    const Eigen::MatrixXcd d = arm.displacement(0, alpha);
    const Eigen::VectorXcd coh = d * arm.vacuum();
    const Eigen::VectorXcd one = d * arm.apply_creation(arm.vacuum(), cb);
    const Eigen::VectorXcd her = FockSpace::kron(arm.apply_creation(coh, cphi), coh)
        + sign * FockSpace::kron(coh, arm.apply_creation(coh, cphi));
    const Eigen::MatrixXcd bs = beamsplitter_pair(arm, arm, 0.5);
    const Eigen::MatrixXcd dg = arm.displacement(0, MeasurementSpec::detector_amplitude(alpha));
    const auto n = static_cast<Eigen::Index>(arm.dim());
    const std::array<std::pair<int, int>, 2> outcomes{{{0, 1}, {1, 0}}};
    const auto thetas = theta_grid(8, 0.0, 2.0 * kPi);
    double total = 0.0;
    for (double th : thetas) {
        const double x = std::sin(th), y = std::cos(th);
        const Eigen::VectorXcd psi = space.apply(bs, {1, 2}, FockSpace::kron(her, Eigen::VectorXcd(x * coh + y * one)));
        const Eigen::Map<const Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(psi.data(), n, n * n);
        double num = 0.0, den = 0.0;
        for (std::size_t o = 0; o < outcomes.size(); ++o) {
            const Eigen::MatrixXcd pb = dg * arm.number_projector(outcomes[o].first) * dg.adjoint();
            const Eigen::MatrixXcd pc = dg * arm.number_projector(outcomes[o].second) * dg.adjoint();
            const Eigen::MatrixXcd rho = m * FockSpace::kron(pb, pc).transpose() * m.adjoint();
            Eigen::VectorXcd ph(n);
            for (Eigen::Index k = 0; k < n; ++k) ph(k) = std::polar(1.0, phases[o] * arm.total(static_cast<std::size_t>(k)));
            const Eigen::MatrixXcd c = d * ph.asDiagonal() * d.adjoint();
            const Eigen::VectorXcd target = x * coh + y * one;
            num += target.dot(c * rho * c.adjoint() * target).real();
            den += rho.trace().real();
        }
        total += num / den;
    }
    return total / static_cast<double>(thetas.size());
}

}  // namespace

TEST(AverageFidelity, UniformQuadrature)
{
    EXPECT_DOUBLE_EQ(average_fidelity(std::vector<double>(7, 0.83), 0.0, 2 * kPi), 0.83);
    std::vector<double> s;
    for (double t : theta_grid(8, 0.0, 2 * kPi)) s.push_back(std::sin(t) * std::sin(t));
    EXPECT_NEAR(average_fidelity(s, 0.0, 2 * kPi), 0.5, 1e-10);
    try {
        (void)average_fidelity({}, 0.0, 1.0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::EmptyCurve);
    }
}

TEST(BuildHer, IdealResourceIsPathEntangledPhoton)
{
    for (auto sign : {HerSign::minus, HerSign::plus}) {
        auto h = ideal_her();
        h.sign = sign;
        const auto& g = h.herald;
        const auto km = kernel_modes(g);
        const auto basis = ModeBasis::orthonormalize({km.modes.col(0)}, g.weights);
        const auto st = build_her(h, basis);
        EXPECT_NEAR(st.purity(), 1.0, 1e-12);
        const auto& arm = st.space.arm(0);
        const Eigen::VectorXcd vac = arm.vacuum();
        const Eigen::VectorXcd one = arm.creation(0) * vac;
        const double s = sign == HerSign::minus ? -1.0 : 1.0;
        const Eigen::VectorXcd want = (FockSpace::kron(one, vac) + s * FockSpace::kron(vac, one)) / std::sqrt(2.0);
        EXPECT_NEAR(fidelity(st, want), 1.0, 1e-12);
    }
}

TEST(BuildHer, TwoModeKernelPurity)
{
    auto h = ideal_her();
    h.herald = synthetic_kernel({0.8, 0.2});
    const auto km = kernel_modes(h.herald);
    EXPECT_NEAR(km.eigenvalues(0), 0.8, 1e-8);
    const auto basis = ModeBasis::orthonormalize({km.modes.col(0), km.modes.col(1)}, h.herald.weights);
    const auto st = build_her(h, basis);
    EXPECT_NEAR(st.purity(), 0.68, 1e-8);
    EXPECT_NEAR(st.trace(), 1.0, 1e-12);
    EXPECT_GT(st.min_eigenvalue(), -1e-9);
}

TEST(BuildHer, MissingModeIsReported)
{
    auto h = ideal_her();
    h.herald = synthetic_kernel({0.8, 0.2});
    const auto km = kernel_modes(h.herald);
    const auto basis = ModeBasis::orthonormalize({km.modes.col(0)}, h.herald.weights);
    try {
        (void)build_her(h, basis);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::BasisMissingMode);
    }
}

TEST(BuildHer, SeededResourceCarriesFrameDisplacement)
{
    auto h = ideal_her(HerVariant::pa, cplx(0.5, 0.2));
    const auto km = kernel_modes(h.herald);
    const auto basis = ModeBasis::orthonormalize({km.modes.col(0)}, h.herald.weights);
    const auto st = build_her(h, basis);
    ASSERT_EQ(st.frame_displacements.size(), 2u);
    EXPECT_NEAR(std::abs(std::abs(st.frame_displacements[0]) - std::abs(h.alpha)), 0.0, 1e-10);
    EXPECT_NEAR(st.purity(), 1.0, 1e-12);
}

TEST(Protocol, IdealLimitIsPerfectAndFast)
{
    const auto h = ideal_her();
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = run_protocol(h, qubit(), unfiltered(h));
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    EXPECT_NEAR(r.avg_fidelity, 1.0, 1e-6);
    EXPECT_NEAR(r.success_probability, 0.5, 1e-10);
    EXPECT_LT(dt, 1.0);
    EXPECT_EQ(r.per_theta_fidelity.size(), 32u);
}

TEST(Protocol, MatchesLabFrameBruteForce)
{
    // the seeded resources are checked against explicit coherent states
    for (auto [variant, alpha] : {std::pair{HerVariant::pd, cplx(0.0, 0.0)}, std::pair{HerVariant::pd, cplx(0.4, 0.0)},
                                  std::pair{HerVariant::pa, cplx(std::sqrt(0.5), 0.0)},
                                  std::pair{HerVariant::pa, cplx(0.3, -0.4)}}) {
        const auto h = ideal_her(variant, alpha);
        ProtocolOptions o;
        o.theta_samples = 16;
        const auto r = run_protocol(h, qubit(), unfiltered(h), o);
        const double sign = h.resolved_sign() == HerSign::minus ? -1.0 : 1.0;
        EXPECT_NEAR(r.avg_fidelity, brute_force_fidelity(sign, alpha, r.correction_phases), 1e-6) << alpha;
    }
}

TEST(Protocol, MatchesTwoModeLabFrameWithPartialOverlap)
{
    const auto& axis = ideal_axis();
    const Eigen::VectorXd w = SpectralGrid::to_vector(axis.weights());
    const auto q = qubit();
    const Eigen::VectorXcd beta = q.envelope().sample(axis, w);
    Eigen::VectorXcd chi(beta.size());
    for (std::size_t i = 0; i < axis.count; ++i)
        chi(static_cast<Eigen::Index>(i)) = beta(static_cast<Eigen::Index>(i)) * (axis[i] - q.envelope().center_omega()) / q.sigma;
    chi /= weighted_norm(chi, w);
    const double s = 0.6;
    const Eigen::VectorXcd phi = s * beta + std::sqrt(1.0 - s * s) * chi;
    for (auto [variant, alpha] : {std::pair{HerVariant::pd, cplx(0.5, 0.0)}, std::pair{HerVariant::pa, cplx(std::sqrt(0.5), 0.0)}}) {
        HerSpec h;
        h.variant = variant;
        h.alpha = alpha;
        h.herald = HeraldKernel{axis, w, phi * phi.adjoint(), 1.0, HeraldedArm::Idler, true};
        ProtocolOptions o;
        o.theta_samples = 8;
        const auto r = run_protocol(h, q, unfiltered(h), o);
        const double sign = h.resolved_sign() == HerSign::minus ? -1.0 : 1.0;
        EXPECT_NEAR(r.avg_fidelity, two_mode_brute_force(sign, alpha, s, r.correction_phases, 5), 2e-4);
    }
}

TEST(Protocol, IdealPhotonAddedResource)
{
    // |alpha|^2 = 1/2 per arm
    const auto h = ideal_her(HerVariant::pa, std::sqrt(0.5));
    const auto r = run_protocol(h, qubit(), unfiltered(h));
    EXPECT_NEAR(r.avg_fidelity, 0.711325, 1e-5);
    EXPECT_NEAR(r.success_probability, 0.5, 1e-10);
}

TEST(Protocol, OverlapFormulaForPureResource)
{
    // single-mode pd resource with qubit overlap s: F = 3/8 + 5/8 s^2
    const auto h = ideal_her();
    const auto q = qubit(1.3);
    const auto& axis = ideal_axis();
    const Eigen::VectorXd w = SpectralGrid::to_vector(axis.weights());
    const double s = std::abs(weighted_inner(q.envelope().sample(axis, w), kernel_modes(h.herald).modes.col(0), w));
    const auto r = run_protocol(h, q, unfiltered(h));
    EXPECT_NEAR(r.avg_fidelity, 3.0 / 8.0 + 5.0 / 8.0 * s * s, 1e-6);
    EXPECT_NEAR(r.success_probability, 0.5, 1e-10);
}

TEST(Protocol, OutcomesAreSymmetricInIdealOverlap)
{
    for (auto v : {HerVariant::pd, HerVariant::pa}) {
        const auto h = ideal_her(v, v == HerVariant::pa ? cplx(0.6, 0.0) : cplx{});
        const auto r = run_protocol(h, qubit(), unfiltered(h));
        ASSERT_EQ(r.per_outcome_fidelity.size(), 2u);
        EXPECT_NEAR(r.per_outcome_fidelity[0], r.per_outcome_fidelity[1], 1e-8);
    }
}

TEST(Protocol, CorrectionsAreFrozenPhaseGates)
{
    const auto h = ideal_her();
    const auto r = run_protocol(h, qubit(), unfiltered(h));
    // outcome (0,1) needs S^dagger, outcome (1,0) needs S under the i-convention beamsplitter
    EXPECT_NEAR(r.correction_phases[0], 1.5 * kPi, 1e-12);
    EXPECT_NEAR(r.correction_phases[1], 0.5 * kPi, 1e-12);
}

TEST(Protocol, ConstraintIsEnforced)
{
    const auto h = ideal_her(HerVariant::pa, 0.5);
    auto m = unfiltered(h);
    m.z *= 1.01;
    try {
        (void)run_protocol(h, qubit(), m);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::ConstraintViolation);
    }
    EXPECT_NO_THROW(unfiltered(h).validate(h));
}

TEST(Protocol, CutoffBelowPhotonContentIsRejected)
{
    const auto h = ideal_her();
    ProtocolOptions o;
    o.cutoff = 1;
    try {
        (void)run_protocol(h, qubit(), unfiltered(h), o);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::TruncationUnconverged);
    }
}

TEST(Protocol, PaperOperatingPoint)
{
    const auto h = paper_her();
    const auto m = MeasurementSpec::matched(h);
    const auto r = run_protocol(h, qubit(1.0), m);
    EXPECT_GT(r.avg_fidelity, 0.9);
    EXPECT_LE(r.success_probability, 0.5 + 1e-6);
    EXPECT_NEAR(r.success_probability + r.rejected_probability, 1.0, 1e-10);
    EXPECT_FALSE(r.truncation_flag);
    EXPECT_LE(r.mode_leakage, 1e-3);

    ProtocolOptions more;
    more.theta_samples = 64;
    EXPECT_NEAR(run_protocol(h, qubit(1.0), m, more).avg_fidelity, r.avg_fidelity, 1e-6);
    ProtocolOptions higher;
    higher.cutoff = 4;
    EXPECT_NEAR(run_protocol(h, qubit(1.0), m, higher).avg_fidelity, r.avg_fidelity, 1e-10);
}

TEST(Protocol, PhotonDelocalisedFidelityIgnoresAlpha)
{
    const auto h0 = paper_her();
    auto h1 = h0;
    h1.alpha = 0.4;
    for (double s : {0.6, 1.0, 1.7}) {
        const double f0 = run_protocol(h0, qubit(s), MeasurementSpec::matched(h0)).avg_fidelity;
        const double f1 = run_protocol(h1, qubit(s), MeasurementSpec::matched(h1)).avg_fidelity;
        EXPECT_LT(std::abs(f1 - f0), 1e-3);
    }
}

TEST(Protocol, PhotonAddedNeverBeatsDelocalised)
{
    const auto pd = paper_her();
    auto pa = pd;
    pa.variant = HerVariant::pa;
    pa.alpha = std::sqrt(0.5);
    for (double s : {0.4, 0.8, 1.2, 2.0})
        for (double c : {1590.0, 1593.0, 1596.0}) {
            const double fd = run_protocol(pd, qubit(s, c), MeasurementSpec::matched(pd)).avg_fidelity;
            const double fa = run_protocol(pa, qubit(s, c), MeasurementSpec::matched(pa)).avg_fidelity;
            EXPECT_LE(fa, fd + 1e-12) << s << " " << c;
        }
}

TEST(Protocol, ProbabilityBookkeepingWithFilter)
{
    const auto h = paper_her(0.3, HerVariant::pa, 0.5);
    auto m = MeasurementSpec::matched(h, 0.9, DetectorFilter::gaussian(nm(1593), nm(2)));
    const auto r = run_protocol(h, qubit(2.0, 1594), m);
    EXPECT_NEAR(r.success_probability + r.rejected_probability, 1.0, 1e-10);
    EXPECT_LE(r.success_probability, 0.5 + 1e-6);
    EXPECT_GE(r.avg_fidelity, 0.0);
    EXPECT_LE(r.avg_fidelity, 1.0);
}

TEST(Protocol, FidelityFallsAwayFromTheBestCentre)
{
    const auto h = paper_her();
    const auto m = MeasurementSpec::matched(h);
    std::vector<double> f;
    const auto centres = linspace(1588.0, 1598.0, 21);
    for (double c : centres) f.push_back(run_protocol(h, qubit(1.0, c), m).avg_fidelity);
    const auto best = static_cast<std::size_t>(std::max_element(f.begin(), f.end()) - f.begin());
    for (std::size_t i = best; i + 1 < f.size(); ++i) EXPECT_LE(f[i + 1], f[i] + 1e-12);
    for (std::size_t i = best; i > 0; --i) EXPECT_LE(f[i - 1], f[i] + 1e-12);
}
