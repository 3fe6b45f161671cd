#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <limits>
#include <optional>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "hersim/dispersion.hpp"
#include "hersim/error.hpp"
#include "hersim/numeric.hpp"
#include "hersim/units.hpp"

namespace hersim {

struct ScanRange
{
    double lo = 0.0;
    double hi = 0.0;
    std::size_t count = 0;
};

struct PhasematchConfig
{
    DispersionModel model;
    double phi_nl = 0.0;                                   // 1/m
    ScanRange pump_wavelength{nm(700.0), nm(800.0), 400};  // m
    ScanRange detuning{-trad_per_s(1600.0), trad_per_s(1600.0), 400};  // rad/s, symmetric about 0
};

inline double delta_k(const PhasematchConfig& cfg, double omega_p, double omega_s, double omega_i)
{
    const double kp = cfg.model.propagation_constant(omega_p);
    const double ks = cfg.model.propagation_constant(omega_s);
    const double ki = cfg.model.propagation_constant(omega_i);
    // ks + ki is commutative, which keeps the map exactly symmetric under s <-> i.
    return 2.0 * kp - (ks + ki) - cfg.phi_nl;
}

struct ContourPoint
{
    double pump_wavelength = 0.0;  // m
    double detuning = 0.0;         // rad/s
    double error_bound = 0.0;      // linear-interpolation error bound of the crossed cell edge, 1/m
};

using Polyline = std::vector<ContourPoint>;

struct PhasematchMap
{
    std::vector<double> pump_wavelength;  // rows
    std::vector<double> pump_omega;
    std::vector<double> detuning;         // columns
    Eigen::MatrixXd delta_k;
    Eigen::MatrixXd theta_si;             // NaN where the orientation is undefined
    std::vector<Polyline> contours;
    bool degenerate_contour = false;      // delta_k vanishes identically
};

namespace detail {

// Detuning axis mirrored exactly about zero: d[n-1-j] == -d[j] bitwise.
inline std::vector<double> mirrored_detuning_axis(const ScanRange& r)
{
    require(r.count >= 2, Errc::EmptyScan, "detuning scan needs at least 2 samples");
    require(r.hi > r.lo, Errc::EmptyScan, "detuning scan interval is empty");
    std::vector<double> d = linspace(r.lo, r.hi, r.count);
    if (std::abs(r.lo + r.hi) <= 1e-12 * std::abs(r.hi)) {
        for (std::size_t j = 0; j < r.count / 2; ++j) d[r.count - 1 - j] = -d[j];
        if (r.count % 2 == 1) d[r.count / 2] = 0.0;
    }
    return d;
}

struct Edge
{
    // (row, col) of the first node, and whether the edge runs along columns (horizontal) or rows.
    std::size_t row = 0;
    std::size_t col = 0;
    bool along_col = true;
    bool operator<(const Edge& o) const
    {
        return std::tie(row, col, along_col) < std::tie(o.row, o.col, o.along_col);
    }
};

// Marching squares with linear interpolation; saddles resolved by the cell mean.
inline std::vector<Polyline> extract_zero_contours(const Eigen::MatrixXd& f, const std::vector<double>& x,
                                                   const std::vector<double>& y)
{
    const std::size_t nr = static_cast<std::size_t>(f.rows());
    const std::size_t nc = static_cast<std::size_t>(f.cols());
    auto crosses = [&](std::size_t r0, std::size_t c0, std::size_t r1, std::size_t c1) {
        return std::signbit(f(r0, c0)) != std::signbit(f(r1, c1));
    };
    auto second_diff = [&](const Edge& e) {
        // Curvature estimate along the edge direction from the neighbouring samples.
        double best = 0.0;
        for (std::size_t k = 0; k < 2; ++k) {
            const std::size_t r = e.row + (e.along_col ? 0 : k);
            const std::size_t c = e.col + (e.along_col ? k : 0);
            if (e.along_col && c >= 1 && c + 1 < nc) best = std::max(best, std::abs(f(r, c - 1) - 2 * f(r, c) + f(r, c + 1)));
            if (!e.along_col && r >= 1 && r + 1 < nr) best = std::max(best, std::abs(f(r - 1, c) - 2 * f(r, c) + f(r + 1, c)));
        }
        return best / 8.0;
    };
    auto point_on = [&](const Edge& e) {
        const std::size_t r1 = e.along_col ? e.row : e.row + 1;
        const std::size_t c1 = e.along_col ? e.col + 1 : e.col;
        const double f0 = f(e.row, e.col);
        const double f1 = f(r1, c1);
        const double t = f0 / (f0 - f1);
        ContourPoint p;
        p.pump_wavelength = x[e.row] + t * (x[r1] - x[e.row]);
        p.detuning = y[e.col] + t * (y[c1] - y[e.col]);
        p.error_bound = second_diff(e);
        return p;
    };

    std::map<Edge, std::vector<Edge>> links;
    for (std::size_t r = 0; r + 1 < nr; ++r) {
        for (std::size_t c = 0; c + 1 < nc; ++c) {
            // Edges in cyclic order: bottom, right, top, left.
            const std::array<Edge, 4> edges{Edge{r, c, true}, Edge{r, c + 1, false}, Edge{r + 1, c, true},
                                            Edge{r, c, false}};
            const std::array<bool, 4> hit{crosses(r, c, r, c + 1), crosses(r, c + 1, r + 1, c + 1),
                                          crosses(r + 1, c, r + 1, c + 1), crosses(r, c, r + 1, c)};
            std::vector<int> active;
            for (int k = 0; k < 4; ++k)
                if (hit[static_cast<std::size_t>(k)]) active.push_back(k);
            if (active.size() == 2) {
                links[edges[static_cast<std::size_t>(active[0])]].push_back(edges[static_cast<std::size_t>(active[1])]);
                links[edges[static_cast<std::size_t>(active[1])]].push_back(edges[static_cast<std::size_t>(active[0])]);
            } else if (active.size() == 4) {
                const double mean = 0.25 * (f(r, c) + f(r, c + 1) + f(r + 1, c) + f(r + 1, c + 1));
                const bool corner_sign = std::signbit(f(r, c));
                // Pair each edge with the neighbour that separates the corner sharing the mean's sign.
                const bool pair_br = std::signbit(mean) == corner_sign;
                const std::array<std::pair<int, int>, 2> pairs = pair_br
                    ? std::array<std::pair<int, int>, 2>{{{0, 1}, {2, 3}}}
                    : std::array<std::pair<int, int>, 2>{{{0, 3}, {1, 2}}};
                for (auto [a, b] : pairs) {
                    links[edges[static_cast<std::size_t>(a)]].push_back(edges[static_cast<std::size_t>(b)]);
                    links[edges[static_cast<std::size_t>(b)]].push_back(edges[static_cast<std::size_t>(a)]);
                }
            }
        }
    }

    std::vector<Polyline> out;
    std::map<Edge, bool> used;
    auto walk = [&](Edge start) {
        std::vector<Edge> chain{start};
        used[start] = true;
        Edge cur = start;
        for (;;) {
            bool advanced = false;
            for (const Edge& nb : links[cur]) {
                if (!used[nb]) {
                    used[nb] = true;
                    chain.push_back(nb);
                    cur = nb;
                    advanced = true;
                    break;
                }
            }
            if (!advanced) break;
        }
        return chain;
    };
    // Open chains first (endpoints have a single link), then closed loops.
    for (int pass = 0; pass < 2; ++pass) {
        for (const auto& [edge, nbs] : links) {
            if (used[edge]) continue;
            if (pass == 0 && nbs.size() != 1) continue;
            Polyline line;
            for (const Edge& e : walk(edge)) line.push_back(point_on(e));
            out.push_back(std::move(line));
        }
    }
    return out;
}

}  // namespace detail

inline PhasematchMap build_map(const PhasematchConfig& cfg, double length, unsigned workers = default_worker_count())
{
    require(length > 0.0, Errc::NonPositiveLength, "fibre length must be positive");
    require(cfg.phi_nl >= 0.0, Errc::InvalidArgument, "phi_nl must be non-negative");
    require(cfg.pump_wavelength.count >= 2 && cfg.pump_wavelength.hi > cfg.pump_wavelength.lo, Errc::EmptyScan,
            "pump scan is empty");
    PhasematchMap m;
    m.pump_wavelength = linspace(cfg.pump_wavelength.lo, cfg.pump_wavelength.hi, cfg.pump_wavelength.count);
    m.detuning = detail::mirrored_detuning_axis(cfg.detuning);
    for (double wl : m.pump_wavelength) m.pump_omega.push_back(wavelength_to_omega(wl));

    const auto& range = cfg.model.valid_range();
    for (double wp : m.pump_omega) {
        for (double d : {m.detuning.front(), m.detuning.back()}) {
            if (!range.contains(wp + d) || !range.contains(wp - d))
                fail(Errc::OutOfRange, "scan reaches outside the dispersion model's valid range");
        }
    }

    const auto nr = static_cast<Eigen::Index>(m.pump_omega.size());
    const auto nc = static_cast<Eigen::Index>(m.detuning.size());
    m.delta_k.resize(nr, nc);
    m.theta_si.resize(nr, nc);
    parallel_for(
        m.pump_omega.size(),
        [&](std::size_t r) {
            const double wp = m.pump_omega[r];
            for (Eigen::Index c = 0; c < nc; ++c) {
                const double ws = wp + m.detuning[static_cast<std::size_t>(c)];
                const double wi = wp - m.detuning[static_cast<std::size_t>(c)];
                m.delta_k(static_cast<Eigen::Index>(r), c) = delta_k(cfg, wp, ws, wi);
                double theta = std::numeric_limits<double>::quiet_NaN();
                try {
                    theta = gvm(cfg.model, length, wp, ws, wi).theta_si;
                } catch (const Error& e) {
                    if (e.code() != Errc::DegenerateGvm) throw;
                }
                m.theta_si(static_cast<Eigen::Index>(r), c) = theta;
            }
        },
        workers);

    const double scale = cfg.model.propagation_constant(m.pump_omega[m.pump_omega.size() / 2]);
    if (m.delta_k.cwiseAbs().maxCoeff() <= 1e-9 * scale) {
        m.degenerate_contour = true;
        return m;
    }
    m.contours = detail::extract_zero_contours(m.delta_k, m.pump_wavelength, m.detuning);
    return m;
}

struct FrequencyTriple
{
    double pump = 0.0;
    double signal = 0.0;
    double idler = 0.0;
};

namespace detail {

// Orientation angles are defined modulo 180 deg; map a difference to (-90, 90].
inline double wrapped_angle_difference(double a, double b)
{
    double d = std::fmod(a - b, 180.0);
    if (d > 90.0) d -= 180.0;
    if (d <= -90.0) d += 180.0;
    return d;
}

// Moves (omega_p, detuning) onto delta_k = 0 along the detuning axis.
inline std::optional<double> project_detuning(const PhasematchConfig& cfg, double wp, double detuning, double step)
{
    auto f = [&](double d) { return delta_k(cfg, wp, wp + d, wp - d); };
    const auto& range = cfg.model.valid_range();
    for (double h = step; h <= 16.0 * step; h *= 2.0) {
        double lo = detuning - h, hi = detuning + h;
        if (std::signbit(lo) != std::signbit(detuning)) lo = detuning * 0.5;
        if (!range.contains(wp + hi) || !range.contains(wp - hi) || !range.contains(wp + lo) || !range.contains(wp - lo))
            continue;
        const double flo = f(lo), fhi = f(hi);
        if (std::signbit(flo) != std::signbit(fhi)) return find_root(f, lo, hi);
    }
    return std::nullopt;
}

}  // namespace detail

// Intersections of the delta_k = 0 contour with the theta_si = target contour,
// ordered by pump frequency.
inline std::vector<FrequencyTriple> find_operating_point(const PhasematchConfig& cfg, const PhasematchMap& map,
                                                         double target_angle)
{
    require(target_angle >= 0.0 && target_angle <= 90.0, Errc::InvalidArgument, "target angle must lie in [0, 90] deg");
    require(!map.degenerate_contour, Errc::NoIntersection, "phasematching contour is degenerate");
    const double step = std::abs(map.detuning[1] - map.detuning[0]);

    struct Sample
    {
        FrequencyTriple w;
        double g = 0.0;
        bool ok = false;
    };
    auto sample = [&](double wavelength, double detuning) {
        Sample s;
        const double wp = wavelength_to_omega(wavelength);
        const auto d = detail::project_detuning(cfg, wp, detuning, step);
        if (!d) return s;
        s.w = {wp, wp + *d, wp - *d};
        try {
            s.g = detail::wrapped_angle_difference(gvm(cfg.model, 1.0, s.w.pump, s.w.signal, s.w.idler).theta_si,
                                                   target_angle);
            s.ok = true;
        } catch (const Error& e) {
            if (e.code() != Errc::DegenerateGvm && e.code() != Errc::OutOfRange) throw;
        }
        return s;
    };

    std::vector<FrequencyTriple> found;
    for (const auto& line : map.contours) {
        std::vector<Sample> samples;
        samples.reserve(line.size());
        for (const auto& p : line) samples.push_back(sample(p.pump_wavelength, p.detuning));
        for (std::size_t k = 0; k + 1 < line.size(); ++k) {
            const Sample& a = samples[k];
            const Sample& b = samples[k + 1];
            if (!a.ok || !b.ok) continue;
            if (a.g == 0.0) {
                found.push_back(a.w);
                continue;
            }
            if (std::signbit(a.g) == std::signbit(b.g) || std::abs(a.g - b.g) > 90.0) continue;
            double t0 = 0.0, t1 = 1.0, g0 = a.g;
            Sample mid = a;
            for (int it = 0; it < 60; ++it) {
                const double t = 0.5 * (t0 + t1);
                mid = sample(line[k].pump_wavelength + t * (line[k + 1].pump_wavelength - line[k].pump_wavelength),
                             line[k].detuning + t * (line[k + 1].detuning - line[k].detuning));
                if (!mid.ok) break;
                if (std::signbit(mid.g) == std::signbit(g0)) {
                    t0 = t;
                    g0 = mid.g;
                } else {
                    t1 = t;
                }
                if (t1 - t0 < 1e-12) break;
            }
            if (mid.ok) found.push_back(mid.w);
        }
    }
    require(!found.empty(), Errc::NoIntersection, "no delta_k = 0 point reaches the requested orientation");
    std::sort(found.begin(), found.end(), [](const auto& x, const auto& y) { return x.pump < y.pump; });
    // Neighbouring polylines can report the same crossing twice.
    std::vector<FrequencyTriple> unique;
    for (const auto& w : found) {
        if (unique.empty() || std::abs(w.pump - unique.back().pump) > 1e-9 * w.pump
            || std::abs(w.signal - unique.back().signal) > 1e-9 * w.signal)
            unique.push_back(w);
    }
    return unique;
}

inline std::vector<FrequencyTriple> find_operating_point(const PhasematchConfig& cfg, double target_angle)
{
    return find_operating_point(cfg, build_map(cfg, 1.0), target_angle);
}

}  // namespace hersim
