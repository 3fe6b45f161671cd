#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <exception>
#include <limits>
#include <mutex>
#include <optional>
#include <thread>
#include <utility>
#include <vector>

#include <boost/math/tools/toms748_solve.hpp>

#include "hersim/error.hpp"

namespace hersim {

// Bracketed root of f on [lo, hi]; f(lo) and f(hi) must differ in sign.
template <typename F>
double find_root(F&& f, double lo, double hi, int max_iter = 200)
{
    double flo = f(lo);
    double fhi = f(hi);
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    require(std::signbit(flo) != std::signbit(fhi), Errc::InvalidArgument, "root not bracketed");
    std::uintmax_t iters = static_cast<std::uintmax_t>(max_iter);
    auto tol = [](double a, double b) {
        return std::abs(b - a) <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(a), std::abs(b));
    };
    auto [a, b] = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi, tol, iters);
    return 0.5 * (a + b);
}

// Uniformly sampled axis [start, start + (count-1) step].
struct UniformAxis
{
    double start = 0.0;
    double step = 1.0;
    std::size_t count = 0;

    static UniformAxis spanning(double lo, double hi, std::size_t count)
    {
        require(count >= 2 && hi > lo, Errc::InvalidArgument, "axis needs count >= 2 and hi > lo");
        return {lo, (hi - lo) / static_cast<double>(count - 1), count};
    }

    static UniformAxis centered(double center, double half_width, std::size_t count)
    {
        return spanning(center - half_width, center + half_width, count);
    }

    double operator[](std::size_t i) const { return start + step * static_cast<double>(i); }
    double front() const { return start; }
    double back() const { return (*this)[count - 1]; }

    std::vector<double> values() const
    {
        std::vector<double> v(count);
        for (std::size_t i = 0; i < count; ++i) v[i] = (*this)[i];
        return v;
    }

    // Trapezoid quadrature weights.
    std::vector<double> weights() const
    {
        std::vector<double> w(count, step);
        if (count >= 2) {
            w.front() *= 0.5;
            w.back() *= 0.5;
        }
        return w;
    }
};

inline std::vector<double> linspace(double lo, double hi, std::size_t n)
{
    std::vector<double> v(n);
    if (n == 1) {
        v[0] = lo;
        return v;
    }
    for (std::size_t i = 0; i < n; ++i) v[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    return v;
}

inline std::vector<double> logspace(double lo, double hi, std::size_t n)
{
    auto v = linspace(std::log(lo), std::log(hi), n);
    for (auto& x : v) x = std::exp(x);
    if (n >= 1) v.front() = lo;
    if (n >= 2) v.back() = hi;
    return v;
}

inline unsigned default_worker_count()
{
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1u : hw;
}

// Runs body(i) for i in [0, n) on up to `workers` threads. Each index is
// processed exactly once; the caller writes results into index-addressed
// storage so output order never depends on scheduling.
template <typename Body>
void parallel_for(std::size_t n, Body&& body, unsigned workers = default_worker_count())
{
    if (n == 0) return;
    workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(n)));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::atomic<std::size_t> next{0};
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace hersim
