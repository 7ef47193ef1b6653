#pragma once

// Linear minimization oracles and their norms, one per norm family:
//   Sign      ‖A‖ = d_in·max|A_ij|          lmo(A) = −sign(A)/d_in
//   Spectral  ‖A‖ = √(d_in/d_out)·σ_max     lmo(A) = −√(d_out/d_in)·U Vᵀ
//   Bias      ‖b‖ = ‖b‖₂/√d_out             lmo(b) = −b/‖b‖_RMS

#include "steadynorm/errors.hpp"
#include "steadynorm/linalg.hpp"
#include "steadynorm/polar.hpp"
#include "steadynorm/tensor.hpp"

#include <cmath>
#include <optional>
#include <string>
#include <string_view>

namespace steadynorm {

enum class NormFamily { Sign, Spectral, Bias };

inline std::string_view to_string(NormFamily f) {
    switch (f) {
        case NormFamily::Sign: return "sign";
        case NormFamily::Spectral: return "spectral";
        case NormFamily::Bias: return "bias";
    }
    return "?";
}

inline std::optional<NormFamily> parse_norm_family(std::string_view s) {
    if (s == "sign") return NormFamily::Sign;
    if (s == "spectral") return NormFamily::Spectral;
    if (s == "bias") return NormFamily::Bias;
    return std::nullopt;
}

struct LmoOutput {
    Tensor update;
    NormFamily family;
};

inline LmoOutput lmo_sign(const linalg::Matrix& m) {
    linalg::Matrix out(m.rows(), m.cols());
    const double inv = 1.0 / static_cast<double>(m.cols());
    auto src = m.values();
    auto dst = out.values();
    for (std::size_t i = 0; i < src.size(); ++i) {
        dst[i] = src[i] > 0.0 ? -inv : (src[i] < 0.0 ? inv : 0.0);
    }
    return {std::move(out), NormFamily::Sign};
}

inline LmoOutput lmo_spectral(const linalg::Matrix& m, int iters) {
    if (linalg::all_zero(m.values())) {
        throw DegenerateError("lmo_spectral: degenerate momentum (zero matrix)");
    }
    linalg::Matrix out = linalg::polar_factor(m, iters);
    linalg::scale(out.values(),
                  -std::sqrt(static_cast<double>(m.rows()) / static_cast<double>(m.cols())));
    return {std::move(out), NormFamily::Spectral};
}

inline LmoOutput lmo_spectral(const linalg::Matrix& m) {
    return lmo_spectral(m, linalg::default_polar_iters());
}

inline LmoOutput lmo_bias(const linalg::Vector& m) {
    const double r = linalg::rms_norm(m);
    if (r == 0.0) {
        throw DegenerateError("lmo_bias: degenerate momentum (zero vector)");
    }
    linalg::Vector out = m;
    linalg::scale(out.values(), -1.0 / r);
    return {std::move(out), NormFamily::Bias};
}

namespace detail {

inline const linalg::Matrix& expect_matrix(const Tensor& t, NormFamily f) {
    const auto* m = std::get_if<linalg::Matrix>(&t);
    if (m == nullptr) {
        throw DomainError("norm family " + std::string(to_string(f)) + " requires a matrix");
    }
    return *m;
}

inline const linalg::Vector& expect_vector(const Tensor& t) {
    const auto* v = std::get_if<linalg::Vector>(&t);
    if (v == nullptr) {
        throw DomainError("norm family bias requires a vector");
    }
    return *v;
}

}  // namespace detail

/// LMO dispatched by family. `polar_iters` applies to Spectral only.
inline LmoOutput lmo(const Tensor& m, NormFamily family,
                     int polar_iters = linalg::default_polar_iters()) {
    switch (family) {
        case NormFamily::Sign: return lmo_sign(detail::expect_matrix(m, family));
        case NormFamily::Spectral:
            return lmo_spectral(detail::expect_matrix(m, family), polar_iters);
        case NormFamily::Bias: return lmo_bias(detail::expect_vector(m));
    }
    throw DomainError("lmo: unknown norm family");
}

/// Family norm of a weight or update. Spectral uses the full-accuracy value.
inline double family_norm(const Tensor& w, NormFamily family) {
    switch (family) {
        case NormFamily::Sign: return linalg::sign_norm(detail::expect_matrix(w, family));
        case NormFamily::Spectral:
            return linalg::spectral_norm_exact(detail::expect_matrix(w, family));
        case NormFamily::Bias: return linalg::rms_norm(detail::expect_vector(w));
    }
    throw DomainError("family_norm: unknown norm family");
}

}  // namespace steadynorm
