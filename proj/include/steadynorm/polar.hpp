#pragma once

// Polar factor U Vᵀ of a matrix by composition of odd quintic polynomials.
//
// The input is divided by its Frobenius norm, so every singular value lies in
// (0, 1]. Each step applies p(X) = aX + b(XXᵀ)X + c(XXᵀ)²X, which maps every
// singular value σ to p(σ) and leaves the singular vectors alone. The
// coefficients are the greedy minimax schedule: step k uses the odd quintic
// that best approximates 1 on the interval [l_k, u_k] known to contain the
// singular values, and the image of that interval becomes [l_{k+1}, u_{k+1}].
// Once the interval is within 1e-4 of 1 the classical Newton-Schulz quintic
// (15x - 10x³ + 3x⁵)/8, which converges cubically, takes over.

#include "steadynorm/errors.hpp"
#include "steadynorm/linalg.hpp"

#include <array>
#include <cmath>
#include <vector>

namespace steadynorm::linalg {

struct OddQuintic {
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;

    [[nodiscard]] double operator()(double x) const {
        const double x2 = x * x;
        return x * (a + x2 * (b + x2 * c));
    }
};

inline constexpr OddQuintic kNewtonSchulzQuintic{15.0 / 8.0, -10.0 / 8.0, 3.0 / 8.0};

struct PolarSchedule {
    double lower_bound = 0.0;
    std::vector<OddQuintic> steps;
    /// Interval [lower[k], upper[k]] holding the singular values after step k.
    std::vector<double> lower;
    std::vector<double> upper;
};

namespace detail {

// Solve the 4x4 system M x = rhs with partial pivoting.
inline std::array<double, 4> solve4(std::array<std::array<double, 5>, 4> m) {
    for (int col = 0; col < 4; ++col) {
        int piv = col;
        for (int r = col + 1; r < 4; ++r) {
            if (std::abs(m[r][col]) > std::abs(m[piv][col])) {
                piv = r;
            }
        }
        std::swap(m[col], m[piv]);
        for (int r = col + 1; r < 4; ++r) {
            const double f = m[r][col] / m[col][col];
            for (int k = col; k < 5; ++k) {
                m[r][k] -= f * m[col][k];
            }
        }
    }
    std::array<double, 4> x{};
    for (int r = 3; r >= 0; --r) {
        double s = m[r][4];
        for (int k = r + 1; k < 4; ++k) {
            s -= m[r][k] * x[k];
        }
        x[r] = s / m[r][r];
    }
    return x;
}

// Interior critical points of an odd quintic inside (lo, hi), ascending.
inline std::vector<double> quintic_critical_points(const OddQuintic& p, double lo, double hi) {
    // p'(x) = a + 3b x² + 5c x⁴, a quadratic in y = x².
    std::vector<double> out;
    const double qa = 5.0 * p.c;
    const double qb = 3.0 * p.b;
    const double qc = p.a;
    std::vector<double> ys;
    if (qa == 0.0) {
        if (qb != 0.0) {
            ys.push_back(-qc / qb);
        }
    } else {
        const double disc = qb * qb - 4.0 * qa * qc;
        if (disc >= 0.0) {
            const double sq = std::sqrt(disc);
            const double q = -0.5 * (qb + (qb >= 0.0 ? sq : -sq));
            if (q != 0.0) {
                ys.push_back(q / qa);
                ys.push_back(qc / q);
            }
        }
    }
    for (double y : ys) {
        if (y > 0.0) {
            const double x = std::sqrt(y);
            if (x > lo && x < hi) {
                out.push_back(x);
            }
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace detail

/// Odd quintic minimizing max |1 - p(x)| over [lo, hi], found by Remez exchange.
/// `error` receives the equioscillation level.
inline OddQuintic minimax_odd_quintic(double lo, double hi, double& error) {
    std::array<double, 4> x{lo, lo + 0.15 * (hi - lo), lo + 0.6 * (hi - lo), hi};
    OddQuintic p{};
    double e = 0.0;
    for (int iter = 0; iter < 200; ++iter) {
        std::array<std::array<double, 5>, 4> m{};
        for (int i = 0; i < 4; ++i) {
            const double xi = x[i];
            m[i] = {xi, xi * xi * xi, xi * xi * xi * xi * xi, (i % 2 == 0) ? 1.0 : -1.0, 1.0};
        }
        const auto sol = detail::solve4(m);
        p = {sol[0], sol[1], sol[2]};
        e = std::abs(sol[3]);
        const auto crit = detail::quintic_critical_points(p, lo, hi);
        if (crit.size() != 2) {
            break;
        }
        const double shift = std::abs(crit[0] - x[1]) + std::abs(crit[1] - x[2]);
        x[1] = crit[0];
        x[2] = crit[1];
        if (shift <= 1e-15 * hi) {
            break;
        }
    }
    // Report the true maximum deviation, which bounds the next interval.
    double worst = std::max(std::abs(1.0 - p(lo)), std::abs(1.0 - p(hi)));
    for (double c : detail::quintic_critical_points(p, lo, hi)) {
        worst = std::max(worst, std::abs(1.0 - p(c)));
    }
    error = std::max(e, worst);
    return p;
}

/// Greedy minimax schedule for singular values known to lie in [lower_bound, 1].
inline PolarSchedule make_polar_schedule(double lower_bound, double tolerance = 1e-14,
                                         int max_steps = 40) {
    if (!(lower_bound > 0.0 && lower_bound < 1.0)) {
        throw DomainError("make_polar_schedule: lower bound must lie in (0, 1)");
    }
    PolarSchedule sched;
    sched.lower_bound = lower_bound;
    double lo = lower_bound;
    double hi = 1.0;
    for (int k = 0; k < max_steps; ++k) {
        if (std::max(1.0 - lo, hi - 1.0) <= tolerance) {
            break;
        }
        OddQuintic p;
        if (hi - lo < 1e-4) {
            p = kNewtonSchulzQuintic;
            // Monotone on [0, ∞), so the image of [lo, hi] is [p(lo), p(hi)].
            const double nlo = p(lo);
            hi = p(hi);
            lo = nlo;
        } else {
            double err = 0.0;
            p = minimax_odd_quintic(lo, hi, err);
            lo = 1.0 - err;
            hi = 1.0 + err;
        }
        sched.steps.push_back(p);
        sched.lower.push_back(lo);
        sched.upper.push_back(hi);
    }
    return sched;
}

/// Lower bound on σ/‖A‖_F covered by the default schedule. It spans condition
/// numbers up to about 1e4 for matrices of rank up to several thousand.
inline constexpr double kPolarLowerBound = 1e-6;

inline const PolarSchedule& default_polar_schedule() {
    static const PolarSchedule sched = make_polar_schedule(kPolarLowerBound);
    return sched;
}

/// Number of iterations the default schedule needs to converge to 1e-14.
inline int default_polar_iters() {
    return static_cast<int>(default_polar_schedule().steps.size());
}

/// Polar factor U Vᵀ of `a` using `iters` steps of the default schedule; steps
/// beyond the schedule reuse the Newton-Schulz quintic. Singular values far
/// below 1e-6·‖A‖_F converge more slowly; exact zeros stay zero.
inline Matrix polar_factor(const Matrix& a, int iters) {
    if (iters < 1) {
        throw DomainError("polar_factor: iters must be >= 1");
    }
    if (!all_finite(a.values())) {
        throw NonFiniteError("polar_factor: non-finite entries");
    }
    const double fro = frobenius_norm(a);
    if (fro == 0.0) {
        throw DegenerateError("polar_factor: degenerate input (zero matrix)");
    }
    const bool tall = a.rows() > a.cols();
    Matrix x = tall ? a.transposed() : a;  // rows <= cols
    scale(x.values(), 1.0 / fro);

    const auto& sched = default_polar_schedule().steps;
    const std::size_t m = x.rows();
    for (int k = 0; k < iters; ++k) {
        const OddQuintic& p =
            static_cast<std::size_t>(k) < sched.size() ? sched[k] : kNewtonSchulzQuintic;
        const Matrix g = gram_rows(x);
        Matrix h = matmul(g, g);
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < m; ++j) {
                h(i, j) = p.b * g(i, j) + p.c * h(i, j);
            }
        }
        Matrix next = matmul(h, x);
        auto nv = next.values();
        auto xv = x.values();
        for (std::size_t i = 0; i < nv.size(); ++i) {
            nv[i] += p.a * xv[i];
        }
        x = std::move(next);
    }
    return tall ? x.transposed() : x;
}

inline Matrix polar_factor(const Matrix& a) { return polar_factor(a, default_polar_iters()); }

}  // namespace steadynorm::linalg
