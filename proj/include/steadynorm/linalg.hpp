#pragma once

// Dense real matrices and vectors, the layer norms used by the optimizers,
// power iteration with persisted singular vectors, and an eigendecomposition
// based SVD used as a test-scale reference.

#include "steadynorm/errors.hpp"
#include "steadynorm/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace steadynorm::linalg {

class Vector {
public:
    Vector() = default;
    explicit Vector(std::size_t n, double value = 0.0) : data_(n, value) {}
    Vector(std::initializer_list<double> values) : data_(values) {}
    explicit Vector(std::vector<double> values) : data_(std::move(values)) {}

    [[nodiscard]] std::size_t size() const { return data_.size(); }
    [[nodiscard]] bool empty() const { return data_.empty(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::span<double> values() { return data_; }
    [[nodiscard]] std::span<const double> values() const { return data_; }

    auto begin() { return data_.begin(); }
    auto end() { return data_.end(); }
    [[nodiscard]] auto begin() const { return data_.begin(); }
    [[nodiscard]] auto end() const { return data_.end(); }

    friend bool operator==(const Vector&, const Vector&) = default;

private:
    std::vector<double> data_;
};

/// Row-major dense matrix with rows = d_out and cols = d_in.
class Matrix {
public:
    Matrix() = default;

    Matrix(std::size_t rows, std::size_t cols, double value = 0.0)
        : rows_(rows), cols_(cols), data_(checked_size(rows, cols), value) {}

    Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
        : rows_(rows), cols_(cols), data_(std::move(values)) {
        if (data_.size() != checked_size(rows, cols)) {
            throw DomainError("Matrix: value count does not match shape");
        }
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) {
            m(i, i) = 1.0;
        }
        return m;
    }

    static Matrix diagonal(std::span<const double> diag) {
        Matrix m(diag.size(), diag.size());
        for (std::size_t i = 0; i < diag.size(); ++i) {
            m(i, i) = diag[i];
        }
        return m;
    }

    [[nodiscard]] std::size_t rows() const { return rows_; }
    [[nodiscard]] std::size_t cols() const { return cols_; }
    [[nodiscard]] std::size_t size() const { return data_.size(); }
    [[nodiscard]] bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> values() { return data_; }
    [[nodiscard]] std::span<const double> values() const { return data_; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    [[nodiscard]] std::span<const double> row(std::size_t r) const {
        return {data_.data() + r * cols_, cols_};
    }

    [[nodiscard]] Matrix transposed() const {
        Matrix t(cols_, rows_);
        for (std::size_t r = 0; r < rows_; ++r) {
            for (std::size_t c = 0; c < cols_; ++c) {
                t(c, r) = (*this)(r, c);
            }
        }
        return t;
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    static std::size_t checked_size(std::size_t rows, std::size_t cols) {
        if (rows == 0 || cols == 0) {
            throw DomainError("Matrix: rows and cols must be >= 1");
        }
        return rows * cols;
    }

    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// span kernels

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline bool all_finite(std::span<const double> a) {
    return std::all_of(a.begin(), a.end(), [](double x) { return std::isfinite(x); });
}

inline bool all_zero(std::span<const double> a) {
    return std::all_of(a.begin(), a.end(), [](double x) { return x == 0.0; });
}

inline void scale(std::span<double> a, double s) {
    for (double& x : a) {
        x *= s;
    }
}

/// Frobenius (elementwise L2) distance.
inline double distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

// ---------------------------------------------------------------------------
// matrix products

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw DomainError("matmul: inner dimensions differ");
    }
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto out = c.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) {
                continue;
            }
            auto brow = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) {
                out[j] += aik * brow[j];
            }
        }
    }
    return c;
}

/// A * Aᵀ.
inline Matrix gram_rows(const Matrix& a) {
    Matrix g(a.rows(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = i; j < a.rows(); ++j) {
            const double v = dot(a.row(i), a.row(j));
            g(i, j) = v;
            g(j, i) = v;
        }
    }
    return g;
}

inline Vector matvec(const Matrix& a, std::span<const double> x) {
    Vector y(a.rows());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        y[r] = dot(a.row(r), x);
    }
    return y;
}

/// Aᵀ y.
inline Vector matvec_t(const Matrix& a, std::span<const double> y) {
    Vector x(a.cols());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        const double yr = y[r];
        auto row = a.row(r);
        for (std::size_t c = 0; c < a.cols(); ++c) {
            x[c] += yr * row[c];
        }
    }
    return x;
}

// ---------------------------------------------------------------------------
// norms

inline double frobenius_norm(const Matrix& a) { return norm2(a.values()); }

/// d_in * max |A_ij|.
inline double sign_norm(const Matrix& a) {
    double m = 0.0;
    for (double x : a.values()) {
        m = std::max(m, std::abs(x));
    }
    return static_cast<double>(a.cols()) * m;
}

/// ‖b‖₂ / √len.
inline double rms_norm(std::span<const double> b) {
    return norm2(b) / std::sqrt(static_cast<double>(b.size()));
}

inline double rms_norm(const Vector& b) { return rms_norm(b.values()); }

/// Dominant singular vectors persisted between calls to spectral_norm.
struct PowerIterState {
    Vector u;  // left, length d_out
    Vector v;  // right, length d_in
    double last_estimate = 0.0;

    [[nodiscard]] bool matches(const Matrix& a) const {
        return u.size() == a.rows() && v.size() == a.cols();
    }
};

inline constexpr std::uint64_t kPowerIterSeed = 0x5eedc0ffeeULL;

inline Vector random_unit_vector(std::size_t n, std::uint64_t seed) {
    NormalSampler normal(seed);
    Vector x(n);
    normal.fill(x.values());
    scale(x.values(), 1.0 / norm2(x.values()));
    return x;
}

/// Scaled spectral norm √(d_in/d_out)·σ_max estimated by power iteration.
///
/// Each iteration refreshes both vectors with one A v / Aᵀ u pair; the estimate
/// ‖Aᵀu‖ is non-decreasing across iterations and calls on a fixed matrix. A
/// state that does not match the shape of `a` is cold-started from a fixed-seed
/// random unit vector.
inline double spectral_norm(const Matrix& a, PowerIterState& state, int iters) {
    if (iters < 1) {
        throw DomainError("spectral_norm: iters must be >= 1");
    }
    if (all_zero(a.values())) {
        state.last_estimate = 0.0;
        return 0.0;
    }
    if (!state.matches(a)) {
        state.v = random_unit_vector(a.cols(), kPowerIterSeed);
        state.u = Vector(a.rows());
    }
    double sigma = 0.0;
    for (int k = 0; k < iters; ++k) {
        Vector w = matvec(a, state.v.values());
        double wn = norm2(w.values());
        if (wn == 0.0) {
            // v fell into the null space; restart from the largest row of A.
            std::size_t best = 0;
            double best_norm = -1.0;
            for (std::size_t r = 0; r < a.rows(); ++r) {
                const double n = norm2(a.row(r));
                if (n > best_norm) {
                    best_norm = n;
                    best = r;
                }
            }
            state.v = Vector(std::vector<double>(a.row(best).begin(), a.row(best).end()));
            scale(state.v.values(), 1.0 / best_norm);
            w = matvec(a, state.v.values());
            wn = norm2(w.values());
        }
        scale(w.values(), 1.0 / wn);
        state.u = std::move(w);
        Vector z = matvec_t(a, state.u.values());
        const double zn = norm2(z.values());
        scale(z.values(), 1.0 / zn);
        state.v = std::move(z);
        sigma = zn;
    }
    const double s = std::sqrt(static_cast<double>(a.cols()) / static_cast<double>(a.rows()));
    state.last_estimate = s * sigma;
    return state.last_estimate;
}

// ---------------------------------------------------------------------------
// symmetric eigendecomposition and SVD reference

struct SymmetricEigen {
    Vector values;   // descending
    Matrix vectors;  // column k is the eigenvector of values[k]
};

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
inline SymmetricEigen symmetric_eigen(Matrix s) {
    const std::size_t n = s.rows();
    if (s.cols() != n) {
        throw DomainError("symmetric_eigen: matrix must be square");
    }
    Matrix q = Matrix::identity(n);
    const double total = frobenius_norm(s);
    for (int sweep = 0; sweep < 100 && total > 0.0; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t r = p + 1; r < n; ++r) {
                off += s(p, r) * s(p, r);
            }
        }
        if (std::sqrt(off) <= 1e-17 * total) {
            break;
        }
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t r = p + 1; r < n; ++r) {
                const double apq = s(p, r);
                if (apq == 0.0) {
                    continue;
                }
                const double theta = (s(r, r) - s(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double sn = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double skp = s(k, p);
                    const double skq = s(k, r);
                    s(k, p) = c * skp - sn * skq;
                    s(k, r) = sn * skp + c * skq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double spk = s(p, k);
                    const double sqk = s(r, k);
                    s(p, k) = c * spk - sn * sqk;
                    s(r, k) = sn * spk + c * sqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double qkp = q(k, p);
                    const double qkq = q(k, r);
                    q(k, p) = c * qkp - sn * qkq;
                    q(k, r) = sn * qkp + c * qkq;
                }
            }
        }
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t i, std::size_t j) { return s(i, i) > s(j, j); });
    SymmetricEigen out{Vector(n), Matrix(n, n)};
    for (std::size_t k = 0; k < n; ++k) {
        out.values[k] = s(order[k], order[k]);
        for (std::size_t i = 0; i < n; ++i) {
            out.vectors(i, k) = q(i, order[k]);
        }
    }
    return out;
}

/// Reduced SVD A = U diag(σ) Vᵀ; U is d_out×r, V is d_in×r, r = min(d_out, d_in).
struct Svd {
    Matrix u;
    Vector sigma;
    Matrix v;
};

inline constexpr std::size_t kSvdOracleMaxRank = 128;

namespace detail {

// Fill columns of `basis` (n×r) whose norm is zero with unit vectors orthogonal
// to the others (Gram-Schmidt against the canonical basis).
inline void complete_orthonormal(Matrix& basis, const std::vector<bool>& missing) {
    const std::size_t n = basis.rows();
    const std::size_t r = basis.cols();
    std::size_t candidate = 0;
    for (std::size_t k = 0; k < r; ++k) {
        if (!missing[k]) {
            continue;
        }
        while (candidate < n) {
            Vector e(n);
            e[candidate++] = 1.0;
            for (std::size_t j = 0; j < r; ++j) {
                if (j == k || (missing[j] && j > k)) {
                    continue;
                }
                double proj = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    proj += basis(i, j) * e[i];
                }
                for (std::size_t i = 0; i < n; ++i) {
                    e[i] -= proj * basis(i, j);
                }
            }
            const double en = norm2(e.values());
            if (en > 1e-8) {
                for (std::size_t i = 0; i < n; ++i) {
                    basis(i, k) = e[i] / en;
                }
                break;
            }
        }
    }
}

}  // namespace detail

/// Full-accuracy reduced SVD through the eigendecomposition of AᵀA or AAᵀ
/// (whichever is smaller). Test-scale only: min(d_out, d_in) <= 128.
inline Svd svd_oracle(const Matrix& a) {
    const bool tall = a.rows() >= a.cols();
    const std::size_t r = std::min(a.rows(), a.cols());
    if (r > kSvdOracleMaxRank) {
        throw DomainError("svd_oracle: matrix exceeds the test-scale cap of rank 128");
    }
    // Eigenvectors of the small Gram matrix give one side; the other side is A·x/σ.
    const Matrix small_side = tall ? a.transposed() : a;  // r × max
    const SymmetricEigen eig = symmetric_eigen(gram_rows(small_side));
    const std::size_t big = tall ? a.rows() : a.cols();

    Svd out{Matrix(a.rows(), r), Vector(r), Matrix(a.cols(), r)};
    Matrix& known = tall ? out.v : out.u;
    Matrix& derived = tall ? out.u : out.v;
    for (std::size_t k = 0; k < r; ++k) {
        out.sigma[k] = std::sqrt(std::max(eig.values[k], 0.0));
        for (std::size_t i = 0; i < r; ++i) {
            known(i, k) = eig.vectors(i, k);
        }
    }
    const double cutoff = out.sigma[0] * 1e-13 * static_cast<double>(big);
    std::vector<bool> missing(r, false);
    for (std::size_t k = 0; k < r; ++k) {
        if (out.sigma[k] <= cutoff || out.sigma[k] == 0.0) {
            missing[k] = true;
            continue;
        }
        for (std::size_t i = 0; i < big; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < r; ++j) {
                s += (tall ? a(i, j) : a(j, i)) * known(j, k);
            }
            derived(i, k) = s / out.sigma[k];
        }
    }
    if (std::find(missing.begin(), missing.end(), true) != missing.end()) {
        detail::complete_orthonormal(derived, missing);
    }
    return out;
}

/// Exact scaled spectral norm √(d_in/d_out)·σ_max via the Gram eigendecomposition,
/// falling back to converged power iteration above the oracle cap.
inline double spectral_norm_exact(const Matrix& a) {
    if (all_zero(a.values())) {
        return 0.0;
    }
    const double s = std::sqrt(static_cast<double>(a.cols()) / static_cast<double>(a.rows()));
    if (std::min(a.rows(), a.cols()) <= kSvdOracleMaxRank) {
        const Matrix small_side = a.rows() >= a.cols() ? a.transposed() : a;
        const SymmetricEigen eig = symmetric_eigen(gram_rows(small_side));
        return s * std::sqrt(std::max(eig.values[0], 0.0));
    }
    PowerIterState state;
    double prev = spectral_norm(a, state, 1);
    for (int k = 0; k < 10000; ++k) {
        const double next = spectral_norm(a, state, 1);
        if (next - prev <= 1e-15 * next) {
            return next;
        }
        prev = next;
    }
    return prev;
}

/// U Vᵀ reconstructed from an SVD (the polar factor of the decomposed matrix).
inline Matrix polar_from_svd(const Svd& svd) { return matmul(svd.u, svd.v.transposed()); }

}  // namespace steadynorm::linalg
