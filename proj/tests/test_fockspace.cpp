#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "hersim/fockspace.hpp"
#include "hersim/jsa.hpp"

using namespace hersim;

namespace {

constexpr cplx I{0.0, 1.0};

double poisson_amplitude(double a, int n) { return std::exp(-0.5 * a * a) * std::pow(a, n) / std::sqrt(std::tgamma(n + 1.0)); }

Eigen::MatrixXcd random_unitary(Eigen::Index n, unsigned seed)
{
    std::mt19937 rng(seed);
    std::normal_distribution<double> g;
    Eigen::MatrixXcd m(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) m(i, j) = cplx(g(rng), g(rng));
    return Eigen::HouseholderQR<Eigen::MatrixXcd>(m).householderQ();
}

Eigen::VectorXcd gaussian_envelope(const UniformAxis& axis, double center, double width)
{
    Eigen::VectorXcd v(static_cast<Eigen::Index>(axis.count));
    for (std::size_t i = 0; i < axis.count; ++i) {
        const double d = axis[i] - center;
        v(static_cast<Eigen::Index>(i)) = std::exp(-d * d / (4.0 * width * width));
    }
    return v;
}

}  // namespace

TEST(ModeBasis, TwoOverlappingGaussians)
{
    const auto axis = UniformAxis::centered(0.0, 30.0, 2001);
    const auto w = SpectralGrid::to_vector(axis.weights());
    const double s = 1.0;
    // overlap of two normalized Gaussians separated by d is exp(-d^2 / (8 s^2))
    const double d = std::sqrt(-8.0 * s * s * std::log(0.9));
    Eigen::VectorXcd e1 = gaussian_envelope(axis, 0.0, s);
    Eigen::VectorXcd e2 = gaussian_envelope(axis, d, s);
    e1 /= weighted_norm(e1, w);
    e2 /= weighted_norm(e2, w);
    const auto b = ModeBasis::orthonormalize({e1, e2}, w);
    ASSERT_EQ(b.size(), 2u);
    const auto c = b.coefficients(1);
    EXPECT_NEAR(c(0).real(), 0.9, 1e-8);
    EXPECT_NEAR(c(1).real(), std::sqrt(0.19), 1e-8);
    const Eigen::MatrixXcd gram = b.modes().adjoint() * w.cast<cplx>().asDiagonal() * b.modes();
    EXPECT_LT((gram - Eigen::MatrixXcd::Identity(2, 2)).norm(), 1e-12);
}

TEST(ModeBasis, DependentEnvelopeIsFlagged)
{
    const auto axis = UniformAxis::centered(0.0, 10.0, 301);
    const auto w = SpectralGrid::to_vector(axis.weights());
    const Eigen::VectorXcd e = gaussian_envelope(axis, 0.0, 1.0);
    const auto b = ModeBasis::orthonormalize({e, cplx(0.0, 2.0) * e}, w);
    EXPECT_EQ(b.size(), 1u);
    EXPECT_TRUE(b.rank_deficient()[1]);
    EXPECT_FALSE(b.rank_deficient()[0]);
    EXPECT_THROW((void)ModeBasis::orthonormalize({e, Eigen::VectorXcd::Ones(3)}, w), Error);
}

TEST(ArmSpace, DimensionsFollowTruncation)
{
    EXPECT_EQ(ArmSpace(3, 2, Truncation::PerMode).dim(), 27u);
    EXPECT_EQ(ArmSpace(3, 2, Truncation::TotalPerArm).dim(), 10u);  // C(5, 3)
    EXPECT_EQ(FockSpace(2, 2, 3).dim(), 256u);
    EXPECT_THROW(FockSpace(4, 3, 4), Error);  // 125^4 beyond the budget
}

TEST(ArmSpace, CreationOperatorAlgebra)
{
    const ArmSpace a(2, 4, Truncation::PerMode);
    EXPECT_THROW((void)a.creation(2), Error);
    const Eigen::MatrixXcd ad = a.creation(0);
    const Eigen::MatrixXcd bd = a.creation(1);
    // commutators hold exactly away from the cutoff edge
    const Eigen::MatrixXcd comm = ad.adjoint() * ad - ad * ad.adjoint();
    for (std::size_t s = 0; s < a.dim(); ++s)
        if (a.occupation(s)[0] < 4) EXPECT_NEAR(comm(s, s).real(), 1.0, 1e-12);
    EXPECT_LT((ad * bd - bd * ad).norm(), 1e-12);
    const Eigen::MatrixXcd n = ad * ad.adjoint() + bd * bd.adjoint();
    EXPECT_LT((n - a.number()).norm(), 1e-12);
}

TEST(ArmSpace, ApplyCreationMatchesMatrices)
{
    const ArmSpace a(3, 4, Truncation::TotalPerArm);
    std::mt19937 rng(3);
    std::normal_distribution<double> g;
    Eigen::VectorXcd psi(a.dim()), c(3);
    for (Eigen::Index i = 0; i < psi.size(); ++i) psi(i) = cplx(g(rng), g(rng));
    for (Eigen::Index i = 0; i < 3; ++i) c(i) = cplx(g(rng), g(rng));
    Eigen::VectorXcd ref = Eigen::VectorXcd::Zero(a.dim());
    for (std::size_t m = 0; m < 3; ++m) ref += c(static_cast<Eigen::Index>(m)) * (a.creation(m) * psi);
    EXPECT_LT((a.apply_creation(psi, c) - ref).norm(), 1e-12);
}

TEST(Displacement, ZeroIsIdentity)
{
    const ArmSpace a(1, 10);
    EXPECT_LT((a.displacement(0, 0.0) - Eigen::MatrixXcd::Identity(a.dim(), a.dim())).norm(), 1e-15);
}

TEST(Displacement, VacuumBecomesPoisson)
{
    const ArmSpace a(1, 30);
    const cplx gamma = std::polar(0.7, 0.4);
    const Eigen::VectorXcd psi = a.displacement(0, gamma) * a.vacuum();
    for (int n = 0; n <= 8; ++n) {
        const cplx expect = poisson_amplitude(0.7, n) * std::polar(1.0, 0.4 * n);
        EXPECT_LT(std::abs(psi(n) - expect), 1e-8) << "n = " << n;
    }
    EXPECT_LT((psi - a.coherent_state(Eigen::VectorXcd::Constant(1, gamma))).head(10).norm(), 1e-8);
}

TEST(Displacement, InverseAndUnitarity)
{
    const FockSpace s(2, 1, 8);
    const Eigen::MatrixXcd d = displacement(s, 1, 0, cplx(0.3, -0.5));
    const Eigen::MatrixXcd dm = displacement(s, 1, 0, cplx(-0.3, 0.5));
    const Eigen::MatrixXcd id = Eigen::MatrixXcd::Identity(s.dim(), s.dim());
    EXPECT_LT((d * dm - id).norm(), 1e-8);
    EXPECT_LT((d * d.adjoint() - id).norm(), 1e-8);
}

TEST(Coherent, MeanNumberAndSinglePhotonProbability)
{
    const ArmSpace a(1, 12);
    const double alpha = 0.7;
    const Eigen::VectorXcd psi = a.coherent_state(Eigen::VectorXcd::Constant(1, cplx(alpha, 0.0)));
    EXPECT_NEAR(psi.dot(a.number() * psi).real(), alpha * alpha, 1e-6);
    const double p1 = std::norm(psi.dot(a.number_projector(1) * psi));
    EXPECT_NEAR(std::sqrt(p1), std::exp(-alpha * alpha) * alpha * alpha, 1e-12);
}

TEST(Beamsplitter, FullTransmissionIsIdentity)
{
    const FockSpace s(2, 2, 2, Truncation::TotalPerArm);
    const Eigen::MatrixXcd b = beamsplitter(s, 0, 1, 1.0);
    EXPECT_LT((b - Eigen::MatrixXcd::Identity(s.dim(), s.dim())).norm(), 1e-12);
}

TEST(Beamsplitter, UnitaryAndMapsSinglePhoton)
{
    const FockSpace s(2, 2, 3, Truncation::TotalPerArm);
    const double tau = 0.3;
    const Eigen::MatrixXcd b = beamsplitter(s, 0, 1, tau);
    EXPECT_LT((b * b.adjoint() - Eigen::MatrixXcd::Identity(s.dim(), s.dim())).norm(), 1e-8);
    // a1^dagger |0> -> sqrt(tau) a1^dagger |0> + i sqrt(1-tau) b1^dagger |0>
    Eigen::VectorXcd vac = Eigen::VectorXcd::Zero(s.dim());
    vac(0) = 1.0;
    const Eigen::VectorXcd in = creation(s, 0, 1) * vac;
    const Eigen::VectorXcd expect = std::sqrt(tau) * (creation(s, 0, 1) * vac)
        + I * std::sqrt(1.0 - tau) * (creation(s, 1, 1) * vac);
    EXPECT_LT((b * in - expect).norm(), 1e-10);
}

TEST(Beamsplitter, CoherentProductMapsToCoherentProduct)
{
    const ArmSpace x(1, 24), y(1, 24);
    const double tau = 0.5;
    const cplx a(0.6, 0.2), c(-0.3, 0.4);
    const Eigen::VectorXcd in = FockSpace::kron(x.coherent_state(Eigen::VectorXcd::Constant(1, a)),
                                                y.coherent_state(Eigen::VectorXcd::Constant(1, c)));
    const cplx ao = std::sqrt(tau) * a + I * std::sqrt(1.0 - tau) * c;
    const cplx co = I * std::sqrt(1.0 - tau) * a + std::sqrt(tau) * c;
    const Eigen::VectorXcd expect = FockSpace::kron(x.coherent_state(Eigen::VectorXcd::Constant(1, ao)),
                                                    y.coherent_state(Eigen::VectorXcd::Constant(1, co)));
    const Eigen::VectorXcd out = beamsplitter_pair(x, y, tau) * in;
    EXPECT_GT(std::norm(expect.dot(out)), 1.0 - 1e-8);
}

TEST(Passive, MatchesModeUnitaryOnSinglePhotons)
{
    const ArmSpace a(3, 3, Truncation::TotalPerArm);
    const Eigen::MatrixXcd u = random_unitary(3, 5);
    const Eigen::MatrixXcd p = a.passive(u);
    EXPECT_LT((p * p.adjoint() - Eigen::MatrixXcd::Identity(a.dim(), a.dim())).norm(), 1e-10);
    for (std::size_t m = 0; m < 3; ++m) {
        const Eigen::VectorXcd out = p * (a.creation(m) * a.vacuum());
        Eigen::VectorXcd expect = Eigen::VectorXcd::Zero(a.dim());
        for (std::size_t j = 0; j < 3; ++j)
            expect += u(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(m)) * (a.creation(j) * a.vacuum());
        EXPECT_LT((out - expect).norm(), 1e-10);
    }
}

TEST(Povm, NumberProjectorsAreComplete)
{
    for (auto t : {Truncation::PerMode, Truncation::TotalPerArm}) {
        const FockSpace s(2, 2, 2, t);
        Eigen::MatrixXcd sum = Eigen::MatrixXcd::Zero(s.dim(), s.dim());
        for (int n = 0; n <= s.arm(0).max_total(); ++n) sum += number_projector(s, 0, n);
        EXPECT_LT((sum - Eigen::MatrixXcd::Identity(s.dim(), s.dim())).norm(), 1e-12);
    }
}

TEST(Povm, FilteredCountingIsCompleteAndPositive)
{
    const ArmSpace a(3, 3, Truncation::TotalPerArm);
    const Eigen::MatrixXcd u = random_unitary(3, 9);
    const Eigen::Vector3d eta(0.9, 0.4, 0.05);
    const Eigen::MatrixXcd filter = u * eta.cast<cplx>().asDiagonal() * u.adjoint();
    const auto povm = a.counting_povm(filter);
    Eigen::MatrixXcd sum = Eigen::MatrixXcd::Zero(a.dim(), a.dim());
    for (const auto& e : povm) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(e);
        EXPECT_GT(es.eigenvalues()(0), -1e-9);
        sum += e;
    }
    EXPECT_LT((sum - Eigen::MatrixXcd::Identity(a.dim(), a.dim())).norm(), 1e-10);
    // a single photon in filter eigenmode k clicks with probability eta_k
    for (Eigen::Index k = 0; k < 3; ++k) {
        const Eigen::VectorXcd one = a.apply_creation(a.vacuum(), u.col(k));
        EXPECT_NEAR(one.dot(povm[1] * one).real(), eta(k), 1e-10);
    }
}

TEST(PartialTrace, ProductStateReturnsFactor)
{
    const FockSpace s(2, 1, 3);
    const ArmSpace& x = s.arm(0);
    const Eigen::VectorXcd px = x.coherent_state(Eigen::VectorXcd::Constant(1, cplx(0.4, 0.1))).normalized();
    const Eigen::VectorXcd py = x.coherent_state(Eigen::VectorXcd::Constant(1, cplx(-0.2, 0.5))).normalized();
    const auto rho = TruncatedState::pure(s, FockSpace::kron(px, py));
    const auto rx = partial_trace(rho, {0});
    const auto ry = partial_trace(rho, {1});
    EXPECT_LT((rx.matrix - px * px.adjoint()).norm(), 1e-12);
    EXPECT_LT((ry.matrix - py * py.adjoint()).norm(), 1e-12);
    EXPECT_NEAR(rx.trace(), rho.trace(), 1e-12);
}

TEST(PartialTrace, MaximallyEntangledArmIsMaximallyMixed)
{
    const FockSpace s(2, 1, 2);
    Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(s.dim());
    for (std::size_t n = 0; n < 3; ++n) psi(static_cast<Eigen::Index>(n * s.stride(0) + n)) = 1.0 / std::sqrt(3.0);
    const auto r = partial_trace(TruncatedState::pure(s, psi), {1});
    EXPECT_LT((r.matrix - Eigen::MatrixXcd::Identity(3, 3) / 3.0).norm(), 1e-12);
    EXPECT_NEAR(r.purity(), 1.0 / 3.0, 1e-12);
}

TEST(PartialTrace, ReorderedArmsGiveTransposedLayout)
{
    const FockSpace s(3, 1, 2);
    std::mt19937 rng(1);
    std::normal_distribution<double> g;
    Eigen::VectorXcd psi(s.dim());
    for (Eigen::Index i = 0; i < psi.size(); ++i) psi(i) = cplx(g(rng), g(rng));
    psi.normalize();
    const auto rho = TruncatedState::pure(s, psi);
    const auto r02 = partial_trace(rho, {0, 2});
    const auto r20 = partial_trace(rho, {2, 0});
    const auto r0 = partial_trace(rho, {0});
    // tracing out arm 2 from r02 equals tracing everything but 0
    EXPECT_LT((partial_trace(r02, {0}).matrix - r0.matrix).norm(), 1e-12);
    EXPECT_LT((partial_trace(r20, {1}).matrix - r0.matrix).norm(), 1e-12);
    EXPECT_NEAR(r02.purity(), r20.purity(), 1e-12);
}

TEST(States, FidelityIsClampedAndExact)
{
    const ArmSpace a(1, 3);
    Eigen::VectorXcd psi = a.vacuum();
    Eigen::MatrixXcd rho = 1.0000001 * psi * psi.adjoint();
    EXPECT_EQ(fidelity(rho, psi), 1.0);
    Eigen::VectorXcd one = a.creation(0) * psi;
    EXPECT_EQ(fidelity(Eigen::MatrixXcd(one * one.adjoint()), psi), 0.0);
}

TEST(States, MixtureInvariants)
{
    const FockSpace s(2, 2, 2, Truncation::TotalPerArm);
    std::mt19937 rng(21);
    std::normal_distribution<double> g;
    Eigen::MatrixXcd rho = Eigen::MatrixXcd::Zero(s.dim(), s.dim());
    for (int k = 0; k < 4; ++k) {
        Eigen::VectorXcd v(s.dim());
        for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = cplx(g(rng), g(rng));
        rho += 0.25 * v.normalized() * v.normalized().adjoint();
    }
    TruncatedState st{s, rho, {}};
    const Eigen::MatrixXcd u = beamsplitter(s, 0, 1, 0.37);
    st.matrix = u * st.matrix * u.adjoint();
    EXPECT_NEAR(st.trace(), 1.0, 1e-10);
    EXPECT_LT(st.hermiticity_error(), 1e-10);
    EXPECT_GT(st.min_eigenvalue(), -1e-9);
    EXPECT_LE(st.purity(), 1.0 + 1e-12);
}

TEST(States, ModeOrderingDoesNotChangePhysics)
{
    // the same single-photon state built in two mode orderings has identical
    // photon statistics and fidelities
    const ArmSpace a(3, 2, Truncation::TotalPerArm);
    Eigen::Vector3cd c(cplx(0.2, 0.1), cplx(-0.7, 0.0), cplx(0.3, 0.6));
    c.normalize();
    Eigen::Matrix3cd perm;
    perm << 0, 0, 1, 1, 0, 0, 0, 1, 0;
    const Eigen::VectorXcd psi = a.apply_creation(a.vacuum(), c);
    const Eigen::VectorXcd psi_perm = a.apply_creation(a.vacuum(), perm * c);
    const Eigen::MatrixXcd p = a.passive(perm);
    EXPECT_LT((p * psi - psi_perm).norm(), 1e-8);
    EXPECT_NEAR(psi.dot(a.number() * psi).real(), psi_perm.dot(a.number() * psi_perm).real(), 1e-8);
}
