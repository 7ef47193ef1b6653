#pragma once

// Update engines: AdamW, AdamC, renormalized AdamW, and constrained Scion /
// ScionC in the (γ_l, λ_l) parameterization
//     m ← (1 − α) m + α g
//     θ ← θ + γ_l (−λ_l θ + lmo(m)).

#include "steadynorm/errors.hpp"
#include "steadynorm/linalg.hpp"
#include "steadynorm/lmo.hpp"
#include "steadynorm/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace steadynorm {

struct HyperParams {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double alpha = 0.1;
    double lambda = 0.0;
    /// Norm guard of the renormalized AdamW rescale.
    double eps_norm = 1e-8;
    /// Polar iterations for Spectral LMOs; 0 selects the converged default.
    int polar_iters = 0;

    void validate() const {
        if (!(beta1 >= 0.0 && beta1 < 1.0)) throw DomainError("beta1 must lie in [0, 1)");
        if (!(beta2 >= 0.0 && beta2 < 1.0)) throw DomainError("beta2 must lie in [0, 1)");
        if (!(eps > 0.0)) throw DomainError("eps must be > 0");
        if (!(alpha > 0.0 && alpha <= 1.0)) throw DomainError("alpha must lie in (0, 1]");
        if (!(lambda >= 0.0)) throw DomainError("lambda must be >= 0");
        if (!(eps_norm > 0.0)) throw DomainError("eps_norm must be > 0");
        if (polar_iters < 0) throw DomainError("polar_iters must be >= 0");
    }

    [[nodiscard]] int resolved_polar_iters() const {
        return polar_iters > 0 ? polar_iters : linalg::default_polar_iters();
    }
};

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::int64_t t = 0;
};

struct ScionState {
    Tensor m;
    std::int64_t t = 0;
};

enum class DecayMode { Fixed, Corrected };

struct LayerSpec {
    std::string name;
    NormFamily family = NormFamily::Spectral;
    /// Peak layer-wise learning rate γ_l.
    double gamma_scale = 1.0;
    DecayMode decay_mode = DecayMode::Fixed;
    /// λ_l for fixed decay, and the fallback for exempt layers under ScionC.
    double lambda = 0.0;
    /// Name of the C² schedule used when decay_mode is Corrected.
    std::string c_sq_schedule;
    bool correction_exempt = false;

    void validate() const {
        if (!(gamma_scale > 0.0)) throw DomainError("layer " + name + ": gamma_scale must be > 0");
        if (!(lambda >= 0.0)) throw DomainError("layer " + name + ": lambda must be >= 0");
        if (decay_mode == DecayMode::Corrected && c_sq_schedule.empty()) {
            throw DomainError("layer " + name + ": corrected decay needs a C² schedule");
        }
    }
};

/// Per-step diagnostics returned by every engine.
struct StepReport {
    /// ⟨θ_{t−1}, u_t⟩, with u the raw update direction (before decay and γ).
    double theta_dot_u = 0.0;
    double lambda = 0.0;
    /// ‖u_t‖².
    double update_sq = 0.0;
    /// Weight update skipped because the LMO input was zero.
    bool skipped = false;
    // Renormalized AdamW only.
    bool renormalized = false;
    double pre_norm = 0.0;
    double target_norm = 0.0;
};

namespace detail {

inline void check_finite_grad(std::span<const double> grad) {
    if (!linalg::all_finite(grad)) {
        throw NonFiniteError("non-finite gradient");
    }
}

inline void check_gamma(double gamma) {
    if (!(gamma >= 0.0)) throw DomainError("learning rate must be >= 0");
}

inline void init_adam(AdamState& s, std::size_t n) {
    if (s.m.empty() && s.v.empty()) {
        s.m.assign(n, 0.0);
        s.v.assign(n, 0.0);
    }
    if (s.m.size() != n || s.v.size() != n) {
        throw DomainError("Adam state shape does not match the parameter");
    }
}

// Advance the moments and write the bias-corrected update m̂/(√v̂ + ε) into u.
inline void adam_direction(std::span<const double> grad, AdamState& s, const HyperParams& hp,
                           std::vector<double>& u) {
    s.t += 1;
    const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(s.t));
    const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(s.t));
    u.resize(grad.size());
    for (std::size_t i = 0; i < grad.size(); ++i) {
        const double g = grad[i];
        s.m[i] = hp.beta1 * s.m[i] + (1.0 - hp.beta1) * g;
        s.v[i] = hp.beta2 * s.v[i] + (1.0 - hp.beta2) * g * g;
        u[i] = (s.m[i] / bc1) / (std::sqrt(s.v[i] / bc2) + hp.eps);
    }
}

}  // namespace detail

/// θ ← θ − γ(λθ + u) with u = m̂/(√v̂ + ε).
inline StepReport adamw_step(std::span<double> theta, std::span<const double> grad,
                             AdamState& state, double gamma_t, double lambda,
                             const HyperParams& hp) {
    detail::check_gamma(gamma_t);
    if (theta.size() != grad.size()) throw DomainError("adamw_step: gradient shape mismatch");
    detail::check_finite_grad(grad);
    detail::init_adam(state, theta.size());
    std::vector<double> u;
    detail::adam_direction(grad, state, hp, u);
    StepReport r;
    r.lambda = lambda;
    r.theta_dot_u = linalg::dot(theta, u);
    r.update_sq = linalg::dot(u, u);
    for (std::size_t i = 0; i < theta.size(); ++i) {
        theta[i] -= gamma_t * (lambda * theta[i] + u[i]);
    }
    return r;
}

inline StepReport adamw_step(ParamTensor& theta, const Tensor& grad, AdamState& state,
                             double gamma_t, double lambda, const HyperParams& hp) {
    return adamw_step(values(theta.value), values(grad), state, gamma_t, lambda, hp);
}

/// AdamC decay: λ scaled with the scheduled learning rate unless exempt.
inline double adamc_lambda(double gamma_t, double gamma_max, double lambda_base, bool exempt) {
    if (!(gamma_max > 0.0)) throw DomainError("adamc_lambda: gamma_max must be > 0");
    return exempt ? lambda_base : lambda_base * gamma_t / gamma_max;
}

/// Renormalized AdamW: decay first, then the Adam update, then rescale so the
/// norm changes only through the component of u parallel to θ.
inline StepReport renorm_adamw_step(std::span<double> theta, std::span<const double> grad,
                                    AdamState& state, double gamma_t, double lambda,
                                    const HyperParams& hp) {
    detail::check_gamma(gamma_t);
    if (theta.size() != grad.size()) throw DomainError("renorm_adamw_step: gradient shape mismatch");
    detail::check_finite_grad(grad);
    detail::init_adam(state, theta.size());
    std::vector<double> u;
    detail::adam_direction(grad, state, hp, u);

    StepReport r;
    r.lambda = lambda;
    r.theta_dot_u = linalg::dot(theta, u);
    r.update_sq = linalg::dot(u, u);
    linalg::scale(theta, 1.0 - gamma_t * lambda);
    const double pre = linalg::norm2(theta);
    const double u_par = pre > 0.0 ? linalg::dot(theta, u) / pre : 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        theta[i] -= gamma_t * u[i];
    }
    r.pre_norm = pre;
    if (pre >= hp.eps_norm) {
        const double target = std::abs(pre - gamma_t * u_par);
        const double post = linalg::norm2(theta);
        linalg::scale(theta, target / (post + hp.eps_norm));
        r.renormalized = true;
        r.target_norm = target;
    }
    return r;
}

inline StepReport renorm_adamw_step(ParamTensor& theta, const Tensor& grad, AdamState& state,
                                    double gamma_t, double lambda, const HyperParams& hp) {
    return renorm_adamw_step(values(theta.value), values(grad), state, gamma_t, lambda, hp);
}

namespace detail {

inline StepReport scion_update(ParamTensor& theta, const Tensor& grad, ScionState& state,
                               double gamma_l, double lambda_l, double alpha, NormFamily family,
                               int polar_iters) {
    check_gamma(gamma_l);
    if (!(lambda_l >= 0.0)) throw DomainError("scion: lambda must be >= 0");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw DomainError("scion: alpha must lie in (0, 1]");
    if (!same_shape(theta.value, grad)) throw DomainError("scion: gradient shape mismatch");
    check_finite_grad(values(grad));
    if (!same_shape(state.m, theta.value) || values(state.m).empty()) {
        if (state.t == 0) {
            state.m = zeros_like(theta.value);
        } else {
            throw DomainError("scion: momentum shape does not match the parameter");
        }
    }
    auto m = values(state.m);
    auto g = values(grad);
    for (std::size_t i = 0; i < m.size(); ++i) {
        m[i] = (1.0 - alpha) * m[i] + alpha * g[i];
    }
    state.t += 1;

    StepReport r;
    r.lambda = lambda_l;
    LmoOutput dir{linalg::Vector{}, family};
    try {
        dir = lmo(state.m, family, polar_iters);
    } catch (const DegenerateError&) {
        r.skipped = true;
        return r;
    }
    auto th = values(theta.value);
    auto u = values(dir.update);
    r.theta_dot_u = linalg::dot(th, u);
    r.update_sq = linalg::dot(u, u);
    for (std::size_t i = 0; i < th.size(); ++i) {
        th[i] += gamma_l * (-lambda_l * th[i] + u[i]);
    }
    return r;
}

}  // namespace detail

/// Constrained Scion with layer-wise learning rate γ_l and decay λ_l. A zero
/// momentum leaves the weight untouched for this step.
inline StepReport scion_step(ParamTensor& theta, const Tensor& grad, ScionState& state,
                             double gamma_l, double lambda_l, const HyperParams& hp,
                             const LayerSpec& layer) {
    return detail::scion_update(theta, grad, state, gamma_l, lambda_l, hp.alpha, layer.family,
                                hp.resolved_polar_iters());
}

/// ScionC decay λ = (2 − α)/(2αC²)·γ, or λ_fixed on exempt layers.
inline double scionc_lambda(double gamma_tl, double alpha_t, double c_sq, const LayerSpec& layer,
                            double lambda_fixed) {
    if (layer.correction_exempt) {
        return lambda_fixed;
    }
    if (!(alpha_t > 0.0 && alpha_t <= 1.0)) throw DomainError("scionc_lambda: alpha must lie in (0, 1]");
    if (!(c_sq > 0.0)) throw DomainError("scionc_lambda: c_sq must be > 0");
    // Grouped so that the reference values (e.g. 0.01, 0.1, 2.375 -> 0.04) are exact.
    return (2.0 / alpha_t - 1.0) / (2.0 * c_sq) * gamma_tl;
}

inline StepReport scionc_step(ParamTensor& theta, const Tensor& grad, ScionState& state,
                              double gamma_tl, double alpha_t, double c_sq_tl,
                              const LayerSpec& layer, double lambda_fixed, const HyperParams& hp) {
    const double lambda = scionc_lambda(gamma_tl, alpha_t, c_sq_tl, layer, lambda_fixed);
    return detail::scion_update(theta, grad, state, gamma_tl, lambda, alpha_t, layer.family,
                                hp.resolved_polar_iters());
}

}  // namespace steadynorm
