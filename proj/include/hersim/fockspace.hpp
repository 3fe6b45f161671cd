#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numeric>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "hersim/error.hpp"

namespace hersim {

using cplx = std::complex<double>;

// ---------------------------------------------------------------------------
// Spectral mode basis
// ---------------------------------------------------------------------------

inline cplx weighted_inner(const Eigen::VectorXcd& f, const Eigen::VectorXcd& g, const Eigen::VectorXd& w)
{
    return (f.conjugate().array() * g.array() * w.array()).sum();
}

inline double weighted_norm(const Eigen::VectorXcd& f, const Eigen::VectorXd& w)
{
    return std::sqrt((f.cwiseAbs2().array() * w.array()).sum());
}

class ModeBasis
{
public:
    // Modified Gram-Schmidt (two passes) in input order. A linearly dependent
    // envelope adds no mode; its residual is reported as leakage.
    static ModeBasis orthonormalize(const std::vector<Eigen::VectorXcd>& envelopes, const Eigen::VectorXd& weights,
                                    double tolerance = 1e-10)
    {
        require(!envelopes.empty(), Errc::InvalidArgument, "no envelopes to orthonormalize");
        const auto n = weights.size();
        for (const auto& e : envelopes)
            require(e.size() == n, Errc::MismatchedBases, "envelopes must share the quadrature grid");
        ModeBasis b;
        b.weights_ = weights;
        std::vector<Eigen::VectorXcd> modes;
        std::vector<std::vector<cplx>> coeffs;
        for (const auto& e : envelopes) {
            Eigen::VectorXcd v = e;
            std::vector<cplx> c(modes.size(), cplx{});
            for (int pass = 0; pass < 2; ++pass) {
                for (std::size_t m = 0; m < modes.size(); ++m) {
                    const cplx p = weighted_inner(modes[m], v, weights);
                    c[m] += p;
                    v -= p * modes[m];
                }
            }
            const double r = weighted_norm(v, weights);
            const double scale = std::max(weighted_norm(e, weights), 1e-300);
            if (r > tolerance * scale) {
                modes.push_back(v / r);
                c.push_back(r);
                b.leakage_.push_back(0.0);
                b.rank_deficient_.push_back(false);
            } else {
                b.leakage_.push_back(r);
                b.rank_deficient_.push_back(true);
            }
            coeffs.push_back(std::move(c));
        }
        b.modes_.resize(n, static_cast<Eigen::Index>(modes.size()));
        for (std::size_t m = 0; m < modes.size(); ++m) b.modes_.col(static_cast<Eigen::Index>(m)) = modes[m];
        b.coefficients_ = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(modes.size()),
                                                 static_cast<Eigen::Index>(envelopes.size()));
        for (std::size_t j = 0; j < coeffs.size(); ++j)
            for (std::size_t m = 0; m < coeffs[j].size(); ++m)
                b.coefficients_(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(j)) = coeffs[j][m];
        return b;
    }

    std::size_t size() const { return static_cast<std::size_t>(modes_.cols()); }
    const Eigen::MatrixXcd& modes() const { return modes_; }
    const Eigen::VectorXd& weights() const { return weights_; }

    // Column j holds the coefficients <m|e_j> of input envelope j.
    const Eigen::MatrixXcd& overlap_matrix() const { return coefficients_; }
    Eigen::VectorXcd coefficients(std::size_t envelope) const
    {
        return coefficients_.col(static_cast<Eigen::Index>(envelope));
    }
    const std::vector<double>& leakage() const { return leakage_; }
    const std::vector<bool>& rank_deficient() const { return rank_deficient_; }

    // <m|f> for an arbitrary envelope on the same grid.
    Eigen::VectorXcd project(const Eigen::VectorXcd& f) const
    {
        return modes_.adjoint() * (weights_.cast<cplx>().asDiagonal() * f);
    }

    // Matrix of <m| T |n> for a multiplicative spectral response T(w).
    Eigen::MatrixXcd response_matrix(const Eigen::VectorXd& response) const
    {
        const Eigen::VectorXcd wt = (weights_.array() * response.array()).cast<cplx>();
        return modes_.adjoint() * wt.asDiagonal() * modes_;
    }

private:
    Eigen::MatrixXcd modes_;
    Eigen::VectorXd weights_;
    Eigen::MatrixXcd coefficients_;
    std::vector<double> leakage_;
    std::vector<bool> rank_deficient_;
};

// ---------------------------------------------------------------------------
// Truncated Fock spaces
// ---------------------------------------------------------------------------

// PerMode keeps every mode below `cutoff` photons, dim = (cutoff+1)^modes.
// TotalPerArm keeps all occupations with at most `cutoff` photons in the arm,
// which makes every number-conserving operation on the arm exact.
enum class Truncation { PerMode, TotalPerArm };

namespace detail {

inline Eigen::MatrixXcd hermitian_exp_i(const Eigen::MatrixXcd& h)
{
    const Eigen::MatrixXcd sym = 0.5 * (h + h.adjoint());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(sym);
    require(es.info() == Eigen::Success, Errc::SvdFailure, "eigendecomposition failed");
    const Eigen::VectorXcd phases = es.eigenvalues().unaryExpr([](double x) { return std::polar(1.0, x); });
    return es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
}

// Hermitian K with exp(iK) = U for a unitary U.
inline Eigen::MatrixXcd unitary_log(const Eigen::MatrixXcd& u)
{
    Eigen::ComplexSchur<Eigen::MatrixXcd> schur(u);
    const Eigen::MatrixXcd& q = schur.matrixU();
    const Eigen::MatrixXcd& t = schur.matrixT();
    Eigen::VectorXcd angles(t.rows());
    for (Eigen::Index k = 0; k < t.rows(); ++k) angles(k) = std::arg(t(k, k));
    return q * angles.asDiagonal() * q.adjoint();
}

}  // namespace detail

class ArmSpace
{
public:
    ArmSpace() = default;
    ArmSpace(std::size_t modes, std::size_t cutoff, Truncation truncation = Truncation::PerMode)
        : modes_(modes), cutoff_(cutoff), truncation_(truncation)
    {
        require(modes >= 1, Errc::InvalidArgument, "an arm needs at least one mode");
        std::vector<int> occ(modes, 0);
        enumerate(occ, 0, 0);
    }

    std::size_t dim() const { return states_.size(); }
    std::size_t modes() const { return modes_; }
    std::size_t cutoff() const { return cutoff_; }
    Truncation truncation() const { return truncation_; }

    const std::vector<int>& occupation(std::size_t index) const { return states_.at(index); }
    int total(std::size_t index) const { return totals_.at(index); }

    // Index of an occupation pattern, or dim() if it is truncated away.
    std::size_t index_of(const std::vector<int>& occ) const
    {
        for (int n : occ)
            if (n < 0 || n > static_cast<int>(cutoff_)) return dim();
        const auto it = index_.find(key(occ));
        return it == index_.end() ? dim() : it->second;
    }

    void check_mode(std::size_t mode) const
    {
        require(mode < modes_, Errc::IndexOutOfRange, "mode index out of range");
    }

    Eigen::MatrixXcd creation(std::size_t mode) const
    {
        check_mode(mode);
        Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(dim(), dim());
        for (std::size_t s = 0; s < dim(); ++s) {
            auto occ = states_[s];
            const double amp = std::sqrt(static_cast<double>(occ[mode] + 1));
            occ[mode] += 1;
            const std::size_t t = index_of(occ);
            if (t < dim()) a(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(s)) = amp;
        }
        return a;
    }

    Eigen::MatrixXcd annihilation(std::size_t mode) const { return creation(mode).adjoint(); }

    Eigen::MatrixXcd number() const
    {
        Eigen::VectorXcd d(dim());
        for (std::size_t s = 0; s < dim(); ++s) d(static_cast<Eigen::Index>(s)) = totals_[s];
        return d.asDiagonal();
    }

    // psi -> (sum_m c_m a_m^dagger) psi without forming matrices.
    Eigen::VectorXcd apply_creation(const Eigen::VectorXcd& psi, const Eigen::VectorXcd& c) const
    {
        require(static_cast<std::size_t>(c.size()) == modes_, Errc::MismatchedBases, "coefficient count != modes");
        Eigen::VectorXcd out = Eigen::VectorXcd::Zero(psi.size());
        for (std::size_t s = 0; s < dim(); ++s) {
            const cplx v = psi(static_cast<Eigen::Index>(s));
            if (v == cplx{}) continue;
            auto occ = states_[s];
            for (std::size_t m = 0; m < modes_; ++m) {
                if (c(static_cast<Eigen::Index>(m)) == cplx{}) continue;
                occ[m] += 1;
                const std::size_t t = index_of(occ);
                if (t < dim())
                    out(static_cast<Eigen::Index>(t)) += c(static_cast<Eigen::Index>(m)) * std::sqrt(static_cast<double>(occ[m])) * v;
                occ[m] -= 1;
            }
        }
        return out;
    }

    Eigen::VectorXcd vacuum() const
    {
        Eigen::VectorXcd v = Eigen::VectorXcd::Zero(dim());
        v(0) = 1.0;
        return v;
    }

    // Multimode coherent state from Poisson amplitudes (unnormalized by truncation).
    Eigen::VectorXcd coherent_state(const Eigen::VectorXcd& amplitudes) const
    {
        require(static_cast<std::size_t>(amplitudes.size()) == modes_, Errc::MismatchedBases,
                "amplitude count != modes");
        const double mean = amplitudes.squaredNorm();
        Eigen::VectorXcd v(dim());
        for (std::size_t s = 0; s < dim(); ++s) {
            cplx a = std::exp(-0.5 * mean);
            for (std::size_t m = 0; m < modes_; ++m) {
                const int n = states_[s][m];
                a *= std::pow(amplitudes(static_cast<Eigen::Index>(m)), n) / std::sqrt(std::tgamma(n + 1.0));
            }
            v(static_cast<Eigen::Index>(s)) = a;
        }
        return v;
    }

    Eigen::MatrixXcd displacement(std::size_t mode, cplx gamma) const
    {
        check_mode(mode);
        if (gamma == cplx{}) return Eigen::MatrixXcd::Identity(dim(), dim());
        const Eigen::MatrixXcd ad = creation(mode);
        const cplx i{0.0, 1.0};
        return detail::hermitian_exp_i(-i * (gamma * ad - std::conj(gamma) * ad.adjoint()));
    }

    // Passive transformation a_m^dagger -> sum_j U(j, m) a_j^dagger.
    Eigen::MatrixXcd passive(const Eigen::MatrixXcd& mode_unitary) const
    {
        require(static_cast<std::size_t>(mode_unitary.rows()) == modes_ && mode_unitary.cols() == mode_unitary.rows(),
                Errc::MismatchedBases, "mode unitary has the wrong size");
        const Eigen::MatrixXcd k = detail::unitary_log(mode_unitary);
        Eigen::MatrixXcd g = Eigen::MatrixXcd::Zero(dim(), dim());
        std::vector<Eigen::MatrixXcd> ad;
        for (std::size_t m = 0; m < modes_; ++m) ad.push_back(creation(m));
        for (std::size_t j = 0; j < modes_; ++j)
            for (std::size_t m = 0; m < modes_; ++m) {
                const cplx kjm = k(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(m));
                if (std::abs(kjm) > 0.0) g += kjm * ad[j] * ad[m].adjoint();
            }
        return detail::hermitian_exp_i(g);
    }

    // Photon-counting POVM {Pi(0), ..., Pi(cutoff_total)} behind a spectral
    // filter. `filter` is <m|T|n> on this arm's modes; each filter eigenmode
    // passes its photons independently with probability equal to its eigenvalue.
    std::vector<Eigen::MatrixXcd> counting_povm(const Eigen::MatrixXcd& filter) const
    {
        require(static_cast<std::size_t>(filter.rows()) == modes_ && filter.cols() == filter.rows(),
                Errc::MismatchedBases, "filter matrix has the wrong size");
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (filter + filter.adjoint()));
        const Eigen::VectorXd eta = es.eigenvalues().cwiseMax(0.0).cwiseMin(1.0);
        const Eigen::MatrixXcd w = passive(es.eigenvectors());
        const int top = max_total();
        std::vector<Eigen::VectorXd> diag(static_cast<std::size_t>(top) + 1, Eigen::VectorXd::Zero(dim()));
        for (std::size_t s = 0; s < dim(); ++s) {
            // distribution of detected photons: convolution of binomials
            std::vector<double> p{1.0};
            for (std::size_t m = 0; m < modes_; ++m) {
                const int n = states_[s][m];
                const double e = eta(static_cast<Eigen::Index>(m));
                std::vector<double> q(p.size() + static_cast<std::size_t>(n), 0.0);
                for (int k = 0; k <= n; ++k) {
                    const double b = std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0))
                        * std::pow(e, k) * std::pow(1.0 - e, n - k);
                    for (std::size_t j = 0; j < p.size(); ++j) q[j + static_cast<std::size_t>(k)] += p[j] * b;
                }
                p = std::move(q);
            }
            for (std::size_t n = 0; n < p.size(); ++n) diag[n](static_cast<Eigen::Index>(s)) = p[n];
        }
        std::vector<Eigen::MatrixXcd> povm;
        for (const auto& d : diag) povm.push_back(w * d.cast<cplx>().asDiagonal() * w.adjoint());
        return povm;
    }

    // Flat response: projector onto total photon number n.
    Eigen::MatrixXcd number_projector(int n) const
    {
        Eigen::VectorXcd d(dim());
        for (std::size_t s = 0; s < dim(); ++s) d(static_cast<Eigen::Index>(s)) = totals_[s] == n ? 1.0 : 0.0;
        return d.asDiagonal();
    }

    int max_total() const
    {
        return truncation_ == Truncation::TotalPerArm ? static_cast<int>(cutoff_)
                                                      : static_cast<int>(cutoff_ * modes_);
    }

private:
    std::uint64_t key(const std::vector<int>& occ) const
    {
        std::uint64_t k = 0;
        for (std::size_t m = modes_; m-- > 0;) k = k * (cutoff_ + 1) + static_cast<std::uint64_t>(occ[m]);
        return k;
    }

    void enumerate(std::vector<int>& occ, std::size_t mode, int used)
    {
        if (mode == modes_) {
            index_.emplace(key(occ), states_.size());
            states_.push_back(occ);
            totals_.push_back(used);
            return;
        }
        const int limit = truncation_ == Truncation::TotalPerArm ? static_cast<int>(cutoff_) - used
                                                                  : static_cast<int>(cutoff_);
        for (int n = 0; n <= limit; ++n) {
            occ[mode] = n;
            enumerate(occ, mode + 1, used + n);
        }
        occ[mode] = 0;
    }

    std::size_t modes_ = 0;
    std::size_t cutoff_ = 0;
    Truncation truncation_ = Truncation::PerMode;
    std::vector<std::vector<int>> states_;
    std::vector<int> totals_;
    std::unordered_map<std::uint64_t, std::size_t> index_;
};

inline constexpr std::size_t kDefaultDimensionBudget = 20000;

// Tensor product of arms; arm 0 is the most significant index.
class FockSpace
{
public:
    FockSpace() = default;
    FockSpace(std::size_t n_arms, std::size_t modes_per_arm, std::size_t cutoff,
              Truncation truncation = Truncation::PerMode, std::size_t budget = kDefaultDimensionBudget)
    {
        require(n_arms >= 1, Errc::InvalidArgument, "need at least one arm");
        arms_.assign(n_arms, ArmSpace(modes_per_arm, cutoff, truncation));
        finish(budget);
    }

    explicit FockSpace(std::vector<ArmSpace> arms, std::size_t budget = kDefaultDimensionBudget)
        : arms_(std::move(arms))
    {
        require(!arms_.empty(), Errc::InvalidArgument, "need at least one arm");
        finish(budget);
    }

    std::size_t dim() const { return dim_; }
    std::size_t n_arms() const { return arms_.size(); }
    const ArmSpace& arm(std::size_t a) const
    {
        require(a < arms_.size(), Errc::IndexOutOfRange, "arm index out of range");
        return arms_[a];
    }
    std::size_t stride(std::size_t a) const { return strides_.at(a); }

    // Offsets of the local indices of `arms` (first listed most significant)
    // and of the remaining arms, such that global = local + rest.
    std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split(const std::vector<std::size_t>& sel) const
    {
        std::vector<bool> chosen(arms_.size(), false);
        for (std::size_t a : sel) {
            require(a < arms_.size(), Errc::IndexOutOfRange, "arm index out of range");
            require(!chosen[a], Errc::InvalidArgument, "arm listed twice");
            chosen[a] = true;
        }
        std::vector<std::size_t> rest;
        for (std::size_t a = 0; a < arms_.size(); ++a)
            if (!chosen[a]) rest.push_back(a);
        return {offsets(sel), offsets(rest)};
    }

    Eigen::VectorXcd apply(const Eigen::MatrixXcd& op, const std::vector<std::size_t>& sel,
                           const Eigen::VectorXcd& psi) const
    {
        Eigen::MatrixXcd m = psi;
        return apply_columns(op, sel, m);
    }

    // op acting on the selected arms, applied to every column of m.
    Eigen::MatrixXcd apply_columns(const Eigen::MatrixXcd& op, const std::vector<std::size_t>& sel,
                                   const Eigen::MatrixXcd& m) const
    {
        const auto [loc, rest] = split(sel);
        require(static_cast<std::size_t>(op.rows()) == loc.size() && op.cols() == op.rows(), Errc::MismatchedBases,
                "operator does not match the selected arms");
        require(static_cast<std::size_t>(m.rows()) == dim_, Errc::MismatchedBases, "state dimension mismatch");
        Eigen::MatrixXcd out(m.rows(), m.cols());
        Eigen::MatrixXcd block(static_cast<Eigen::Index>(loc.size()), m.cols());
        for (std::size_t r : rest) {
            for (std::size_t l = 0; l < loc.size(); ++l) block.row(static_cast<Eigen::Index>(l)) = m.row(static_cast<Eigen::Index>(loc[l] + r));
            const Eigen::MatrixXcd res = op * block;
            for (std::size_t l = 0; l < loc.size(); ++l) out.row(static_cast<Eigen::Index>(loc[l] + r)) = res.row(static_cast<Eigen::Index>(l));
        }
        return out;
    }

    // U rho U^dagger with U acting on the selected arms.
    Eigen::MatrixXcd conjugate(const Eigen::MatrixXcd& op, const std::vector<std::size_t>& sel,
                               const Eigen::MatrixXcd& rho) const
    {
        const Eigen::MatrixXcd left = apply_columns(op, sel, rho);
        return apply_columns(op, sel, left.adjoint()).adjoint();
    }

    // Dense global operator; only for spaces within the budget.
    Eigen::MatrixXcd embed(const Eigen::MatrixXcd& op, const std::vector<std::size_t>& sel) const
    {
        return apply_columns(op, sel, Eigen::MatrixXcd::Identity(dim_, dim_));
    }

    // Kronecker product of per-arm operators, in the order given.
    static Eigen::MatrixXcd kron(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b)
    {
        Eigen::MatrixXcd k(a.rows() * b.rows(), a.cols() * b.cols());
        for (Eigen::Index i = 0; i < a.rows(); ++i)
            for (Eigen::Index j = 0; j < a.cols(); ++j)
                k.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
        return k;
    }

    FockSpace subspace(const std::vector<std::size_t>& keep) const
    {
        std::vector<ArmSpace> arms;
        for (std::size_t a : keep) arms.push_back(arm(a));
        return FockSpace(std::move(arms), std::numeric_limits<std::size_t>::max());
    }

private:
    void finish(std::size_t budget)
    {
        dim_ = 1;
        for (const auto& a : arms_) dim_ *= a.dim();
        require(dim_ <= budget, Errc::InvalidArgument, "Hilbert dimension exceeds the configured budget");
        strides_.assign(arms_.size(), 1);
        for (std::size_t a = arms_.size(); a-- > 1;) strides_[a - 1] = strides_[a] * arms_[a].dim();
    }

    std::vector<std::size_t> offsets(const std::vector<std::size_t>& sel) const
    {
        std::vector<std::size_t> out{0};
        for (std::size_t a : sel) {
            std::vector<std::size_t> next;
            next.reserve(out.size() * arms_[a].dim());
            for (std::size_t base : out)
                for (std::size_t k = 0; k < arms_[a].dim(); ++k) next.push_back(base + k * strides_[a]);
            out = std::move(next);
        }
        return out;
    }

    std::vector<ArmSpace> arms_;
    std::vector<std::size_t> strides_;
    std::size_t dim_ = 0;
};

// ---------------------------------------------------------------------------
// Operators on a FockSpace
// ---------------------------------------------------------------------------

inline Eigen::MatrixXcd creation(const FockSpace& space, std::size_t arm, std::size_t mode)
{
    return space.embed(space.arm(arm).creation(mode), {arm});
}

inline Eigen::MatrixXcd annihilation(const FockSpace& space, std::size_t arm, std::size_t mode)
{
    return creation(space, arm, mode).adjoint();
}

inline Eigen::MatrixXcd displacement(const FockSpace& space, std::size_t arm, std::size_t mode, cplx gamma)
{
    return space.embed(space.arm(arm).displacement(mode, gamma), {arm});
}

// Mode-wise beamsplitter between two arms on the joint (x, y) space:
// a^dagger -> sqrt(t) a^dagger + i sqrt(1-t) b^dagger,
// b^dagger -> i sqrt(1-t) a^dagger + sqrt(t) b^dagger.
inline Eigen::MatrixXcd beamsplitter_pair(const ArmSpace& x, const ArmSpace& y, double tau)
{
    require(tau >= 0.0 && tau <= 1.0, Errc::InvalidArgument, "transmittance must lie in [0, 1]");
    require(x.modes() == y.modes(), Errc::MismatchedBases, "beamsplitter arms carry different mode bases");
    const double theta = std::acos(std::sqrt(tau));
    const auto ix = Eigen::MatrixXcd::Identity(x.dim(), x.dim());
    const auto iy = Eigen::MatrixXcd::Identity(y.dim(), y.dim());
    Eigen::MatrixXcd g = Eigen::MatrixXcd::Zero(x.dim() * y.dim(), x.dim() * y.dim());
    for (std::size_t m = 0; m < x.modes(); ++m) {
        const Eigen::MatrixXcd ax = x.creation(m);
        const Eigen::MatrixXcd ay = y.creation(m);
        const Eigen::MatrixXcd hop = FockSpace::kron(ax, iy) * FockSpace::kron(ix, ay.adjoint());
        g += hop + hop.adjoint();
    }
    return detail::hermitian_exp_i(theta * g);
}

inline Eigen::MatrixXcd beamsplitter(const FockSpace& space, std::size_t arm_x, std::size_t arm_y, double tau)
{
    return space.embed(beamsplitter_pair(space.arm(arm_x), space.arm(arm_y), tau), {arm_x, arm_y});
}

// Pi(n) on one arm behind a filter given as <m|T|n> on the arm's modes.
inline Eigen::MatrixXcd number_projector(const FockSpace& space, std::size_t arm, int n,
                                         const Eigen::MatrixXcd& filter)
{
    const auto& a = space.arm(arm);
    require(n >= 0 && n <= a.max_total(), Errc::IndexOutOfRange, "photon number exceeds the cutoff");
    return space.embed(a.counting_povm(filter)[static_cast<std::size_t>(n)], {arm});
}

inline Eigen::MatrixXcd number_projector(const FockSpace& space, std::size_t arm, int n)
{
    const auto m = static_cast<Eigen::Index>(space.arm(arm).modes());
    return number_projector(space, arm, n, Eigen::MatrixXcd::Identity(m, m));
}

// ---------------------------------------------------------------------------
// States
// ---------------------------------------------------------------------------

struct TruncatedState
{
    FockSpace space;
    Eigen::MatrixXcd matrix;
    std::vector<cplx> frame_displacements;  // per (arm, mode), arm-major

    static TruncatedState pure(const FockSpace& space, const Eigen::VectorXcd& psi)
    {
        require(static_cast<std::size_t>(psi.size()) == space.dim(), Errc::MismatchedBases, "state dimension mismatch");
        return {space, psi * psi.adjoint(), {}};
    }

    double trace() const { return matrix.trace().real(); }
    double purity() const { return (matrix * matrix).trace().real() / (trace() * trace()); }
    double hermiticity_error() const { return (matrix - matrix.adjoint()).cwiseAbs().maxCoeff(); }
    double min_eigenvalue() const
    {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (matrix + matrix.adjoint()), Eigen::EigenvaluesOnly);
        return es.eigenvalues()(0);
    }

    TruncatedState normalized() const
    {
        const double t = trace();
        require(t > 0.0, Errc::InvalidArgument, "state has zero trace");
        return {space, matrix / t, frame_displacements};
    }
};

inline TruncatedState partial_trace(const TruncatedState& rho, const std::vector<std::size_t>& keep)
{
    require(!keep.empty(), Errc::InvalidArgument, "partial trace must keep at least one arm");
    const auto [loc, rest] = rho.space.split(keep);
    Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(loc.size()),
                                                  static_cast<Eigen::Index>(loc.size()));
    for (std::size_t r : rest)
        for (std::size_t i = 0; i < loc.size(); ++i)
            for (std::size_t j = 0; j < loc.size(); ++j)
                out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))
                    += rho.matrix(static_cast<Eigen::Index>(loc[i] + r), static_cast<Eigen::Index>(loc[j] + r));
    return {rho.space.subspace(keep), out, {}};
}

inline double fidelity(const Eigen::MatrixXcd& rho, const Eigen::VectorXcd& psi)
{
    require(rho.rows() == psi.size(), Errc::MismatchedBases, "state dimension mismatch");
    const double f = psi.dot(rho * psi).real();
    return std::clamp(f, 0.0, 1.0);
}

inline double fidelity(const TruncatedState& rho, const Eigen::VectorXcd& psi) { return fidelity(rho.matrix, psi); }

}  // namespace hersim
