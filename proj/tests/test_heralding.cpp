#include <cmath>

#include <gtest/gtest.h>

#include "hersim/heralding.hpp"

using namespace hersim;

namespace {

const CalibratedDispersion& calibrated()
{
    static const CalibratedDispersion c = calibrate_operating_point();
    return c;
}

JointAmplitude paper_jsa(double length, std::size_t n = 160)
{
    const auto& c = calibrated();
    const PhasematchConfig cfg{c.model};
    const auto g = default_grid(cfg, PumpEnvelope{}, length, c.signal_omega, c.idler_omega, n);
    return build_jsa(cfg, PumpEnvelope{}, length, g);
}

// F = sum_k sqrt(l_k) u_k(x) v_k(y) with Hermite-Gauss u, v
JointAmplitude separable_sum(const std::vector<double>& lambdas, std::size_t n = 96)
{
    JointAmplitude f;
    f.grid = {UniformAxis::centered(2e15, 8e12, n), UniformAxis::centered(1.2e15, 8e12, n)};
    f.values = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = 0; k < n; ++k) {
            const double x = (f.grid.signal[j] - 2e15) / 1e12;
            const double y = (f.grid.idler[k] - 1.2e15) / 1e12;
            const double gx = std::exp(-x * x / 2.0), gy = std::exp(-y * y / 2.0);
            cplx v = std::sqrt(lambdas[0]) * gx * gy;
            if (lambdas.size() > 1) v += std::sqrt(lambdas[1]) * std::sqrt(2.0) * x * gx * std::sqrt(2.0) * y * gy;
            f.values(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) = v;
        }
    const double norm = std::sqrt(
        (f.grid.signal_weights().transpose() * jsi(f) * f.grid.idler_weights())(0, 0));
    f.values /= norm;
    return f;
}

// closed form for a seeded single-photon addition: <S| a_n^+ |a e> with S the
// principal-mode reference
double closed_form_ratio(const KernelModes& km, const Eigen::VectorXd& w, const Eigen::VectorXcd& e, cplx alpha)
{
    const double a2 = std::norm(alpha);
    Eigen::VectorXcd c(km.modes.cols());
    for (Eigen::Index n = 0; n < c.size(); ++n) c(n) = weighted_inner(km.modes.col(n), e, w);
    double pa = 0.0, pab = 0.0;
    for (Eigen::Index n = 0; n < c.size(); ++n) {
        const double mu = km.eigenvalues(n);
        pa += mu * (1.0 + a2 * std::norm(c(n)));
        const cplx amp = (n == 0 ? 1.0 : 0.0) + a2 * std::conj(c(n)) * c(0);
        pab += mu * std::norm(amp) / (1.0 + a2 * std::norm(c(0)));
    }
    return pab / pa;
}

}  // namespace

TEST(HeraldKernel, FlatFilterReproducesSchmidtSpectrum)
{
    const auto f = paper_jsa(0.3, 128);
    const auto s = schmidt_decompose(f);
    for (auto arm : {HeraldedArm::Signal, HeraldedArm::Idler}) {
        const auto g = herald_kernel(f, DetectorFilter::flat(), arm);
        const auto km = kernel_modes(g);
        for (Eigen::Index n = 0; n < 12; ++n) EXPECT_NEAR(km.eigenvalues(n), s.lambdas(n), 1e-8);
        EXPECT_NEAR(heralded_purity(g), s.purity, 1e-8);
    }
}

TEST(HeraldKernel, HermitianPositiveAndTraceNormalized)
{
    const auto f = paper_jsa(0.8);
    const auto g = herald_kernel(f, DetectorFilter::gaussian(nm(1593), nm(2)));
    EXPECT_LT((g.values - g.values.adjoint()).cwiseAbs().maxCoeff(), 1e-12 * g.values.cwiseAbs().maxCoeff());
    EXPECT_NEAR((g.weights.cast<cplx>().asDiagonal() * g.values).trace().real(), 1.0, 1e-12);
    const auto km = kernel_modes(g);
    EXPECT_GE(km.eigenvalues.minCoeff(), 0.0);
    EXPECT_NEAR(km.eigenvalues.sum(), 1.0, 1e-10);
    EXPECT_GT(g.herald_weight, 0.0);
    EXPECT_LT(g.herald_weight, 1.0);
}

TEST(HeraldKernel, RankOneStaysPureUnderAnyFilter)
{
    const auto f = separable_sum({1.0});
    for (double fwhm : {0.5, 5.0, 50.0}) {
        const double center = omega_to_wavelength(1.2e15 + 1e12);
        const auto g = herald_kernel(f, DetectorFilter::gaussian(center, nm(fwhm)));
        EXPECT_NEAR(heralded_purity(g), 1.0, 1e-10);
    }
}

TEST(HeraldKernel, TwoEqualModesGiveHalfPurity)
{
    const auto g = herald_kernel(separable_sum({0.5, 0.5}));
    EXPECT_NEAR(heralded_purity(g), 0.5, 1e-10);
}

TEST(HeraldKernel, FilterOutsideGridIsEmptyOverlap)
{
    const auto f = paper_jsa(0.8, 64);
    try {
        (void)herald_kernel(f, DetectorFilter::gaussian(nm(500), nm(0.01)));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::EmptyOverlap);
    }
}

TEST(HeraldKernel, NarrowingTheFilterNeverLowersPurity)
{
    const auto f = paper_jsa(0.8);
    double prev = heralded_purity(herald_kernel(f));
    const double unfiltered = prev;
    for (double fwhm : {40.0, 25.0, 15.0, 10.0, 7.0, 5.0, 3.5, 2.5, 1.5, 1.0}) {
        const double p = heralded_purity(herald_kernel(f, DetectorFilter::gaussian(nm(1593), nm(fwhm))));
        EXPECT_GE(p, prev - 1e-12) << fwhm << " nm";
        prev = p;
    }
    EXPECT_GE(heralded_purity(herald_kernel(f, DetectorFilter::gaussian(nm(1593), nm(10)))), unfiltered - 1e-12);
}

TEST(HeraldKernel, PurityAtThresholdLength)
{
    const double p = heralded_purity(herald_kernel(paper_jsa(0.0845, 256)));
    EXPECT_NEAR(p, 0.7187, 0.05);
}

TEST(HeraldingEfficiency, PerfectSeedOnPureSourceIsUnity)
{
    const auto f = separable_sum({1.0});
    for (double a : {0.0, 0.5, 1.3, 2.0}) EXPECT_NEAR(heralding_efficiency(f, a).p_h_over_eta, 1.0, 1e-10);
}

TEST(HeraldingEfficiency, SeedlessLimitIsPrincipalWeight)
{
    const auto f = paper_jsa(0.3, 128);
    const auto km = kernel_modes(herald_kernel(f));
    const auto r = heralding_efficiency(f, 0.0);
    EXPECT_NEAR(r.p_h_over_eta, km.eigenvalues(0), 1e-8);
    EXPECT_LE(r.p_ab, r.p_a);
    EXPECT_LE(r.p_a, 1.0);
    EXPECT_GE(r.p_ab, 0.0);
}

TEST(HeraldingEfficiency, MatchesClosedFormForMismatchedSeed)
{
    const auto f = paper_jsa(0.3, 128);
    const auto g = herald_kernel(f);
    const auto km = kernel_modes(g);
    // seed: principal mode shifted by a fraction of the grid
    Eigen::VectorXcd e = Eigen::VectorXcd::Zero(km.modes.rows());
    e.tail(e.size() - 3) = km.modes.col(0).head(e.size() - 3);
    e += 0.3 * km.modes.col(1);
    e /= weighted_norm(e, g.weights);
    for (cplx a : {cplx(0.4, 0.0), cplx(1.0, 1.0), cplx(0.0, 2.0)}) {
        const auto r = heralding_efficiency(f, a, {}, e);
        EXPECT_NEAR(r.p_h_over_eta, closed_form_ratio(km, g.weights, e, a), 1e-6) << a;
    }
}

TEST(HeraldingEfficiency, InvariantUnderGlobalSeedPhase)
{
    const auto f = paper_jsa(0.3, 96);
    const double ref = heralding_efficiency(f, 1.4).p_h_over_eta;
    for (double phi : {0.7, 2.0, -2.9})
        EXPECT_NEAR(heralding_efficiency(f, std::polar(1.4, phi)).p_h_over_eta, ref, 1e-10);
}

TEST(HeraldingEfficiency, RejectsLargeSeedAndBadEnvelope)
{
    const auto f = paper_jsa(0.3, 64);
    try {
        (void)heralding_efficiency(f, 2.1);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::InvalidArgument);
    }
    const auto km = kernel_modes(herald_kernel(f));
    EXPECT_THROW((void)heralding_efficiency(f, 1.0, {}, Eigen::VectorXcd(2.0 * km.modes.col(0))), Error);
}

TEST(HeraldingEfficiency, TruncationIsCheckedAgainstLargerCutoff)
{
    const auto f = paper_jsa(0.3, 64);
    HeraldingOptions opts;
    opts.cutoff = 2;
    try {
        (void)heralding_efficiency(f, 2.0, {}, {}, opts);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::TruncationUnconverged);
    }
}

TEST(HeraldingEfficiency, FlatAcrossSeedAmplitudes)
{
    const auto f = paper_jsa(0.8);
    const double base = heralding_efficiency(f, 0.0).p_h_over_eta;
    for (double a = 0.0; a <= 2.0 + 1e-12; a += 0.25) {
        const double r = heralding_efficiency(f, a).p_h_over_eta;
        EXPECT_LT(std::abs(r / base - 1.0), 0.05) << "alpha0 = " << a;
    }
}
