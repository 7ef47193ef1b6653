#pragma once

// Closed-form steady-state weight norms.
//
// Squared quantities throughout: c_sq is E‖u‖² for the iid predictor and the
// (constant) ‖u‖² of a normalized update for the momentum predictor. With
// η = γλ the independent decay per step:
//   iid                E‖θ‖² = γ·c_sq/(λ(2 − γλ))                  ≈ γ·c_sq/(2λ)
//   normalized moment. E‖θ‖² = γ²C²/(2η − η²)·(2−η−α+αη)/(η+α−αη) ≈ γ²C²(2 − α)/(2αη)

#include "steadynorm/errors.hpp"
#include "steadynorm/schedule.hpp"

#include <cmath>
#include <cstdint>
#include <string_view>

namespace steadynorm {

enum class Regime { Iid, MomentumNormalizedExact, MomentumNormalizedApprox };

inline std::string_view to_string(Regime r) {
    switch (r) {
        case Regime::Iid: return "iid";
        case Regime::MomentumNormalizedExact: return "momentum_normalized_exact";
        case Regime::MomentumNormalizedApprox: return "momentum_normalized_approx";
    }
    return "?";
}

struct SteadyPrediction {
    /// The selected form (exact unless the approximation was requested).
    double norm_sq = 0.0;
    double exact = 0.0;
    double approx = 0.0;
    Regime regime = Regime::Iid;
    /// |exact − approx| / exact, or 0 when both vanish.
    double gap = 0.0;
};

namespace detail {

inline double relative_gap(double exact, double approx) {
    return exact == 0.0 ? 0.0 : std::abs(exact - approx) / exact;
}

}  // namespace detail

inline SteadyPrediction predict_iid(double gamma, double lambda, double c_sq) {
    if (gamma < 0.0 || lambda < 0.0 || c_sq < 0.0) {
        throw DomainError("predict_iid: gamma, lambda and c_sq must be >= 0");
    }
    SteadyPrediction p;
    p.regime = Regime::Iid;
    if (gamma == 0.0 || c_sq == 0.0) {
        return p;
    }
    const double gl = gamma * lambda;
    if (gl >= 1.0) throw DomainError("predict_iid: unstable decay (gamma*lambda >= 1)");
    if (gl <= 0.0) throw DomainError("predict_iid: no decay, the norm grows without bound");
    p.exact = gamma * c_sq / (lambda * (2.0 - gl));
    p.approx = gamma * c_sq / (2.0 * lambda);
    p.norm_sq = p.exact;
    p.gap = detail::relative_gap(p.exact, p.approx);
    return p;
}

inline SteadyPrediction predict_momentum_normalized(double gamma, double eta, double alpha,
                                                    double c_sq, bool exact) {
    if (!(eta > 0.0 && eta < 1.0)) throw DomainError("predict_momentum_normalized: eta must lie in (0, 1)");
    if (!(alpha > 0.0 && alpha <= 1.0)) {
        throw DomainError("predict_momentum_normalized: alpha must lie in (0, 1]");
    }
    if (gamma < 0.0 || c_sq < 0.0) throw DomainError("predict_momentum_normalized: gamma and c_sq must be >= 0");
    SteadyPrediction p;
    const double g2c2 = gamma * gamma * c_sq;
    p.exact = g2c2 / (2.0 * eta - eta * eta) * (2.0 - eta - alpha + alpha * eta) /
              (eta + alpha - alpha * eta);
    p.approx = g2c2 * (2.0 - alpha) / (2.0 * alpha * eta);
    p.norm_sq = exact ? p.exact : p.approx;
    p.regime = exact ? Regime::MomentumNormalizedExact : Regime::MomentumNormalizedApprox;
    p.gap = detail::relative_gap(p.exact, p.approx);
    return p;
}

/// Steps for the decay factor (1 − η)^t to reach 1/2.
inline double half_life(double eta) {
    if (!(eta > 0.0 && eta < 1.0)) throw DomainError("half_life: eta must lie in (0, 1)");
    return -std::log(2.0) / std::log1p(-eta);
}

/// Half-life protocol schedule: ceil(10·t½) steps with round(0.5·t½)
/// warmup steps, followed by cosine decay or a constant rate.
inline ScheduleSet half_life_protocol(double gamma, double lambda, GammaShape shape,
                                      double half_lives = 10.0, double warmup_half_lives = 0.5) {
    const double th = half_life(gamma * lambda);
    ScheduleSet s;
    s.total_steps = static_cast<std::int64_t>(std::ceil(half_lives * th));
    s.warmup_steps = static_cast<std::int64_t>(std::llround(warmup_half_lives * th));
    s.gamma_peak = gamma;
    s.gamma_shape = shape;
    s.validate();
    return s;
}

}  // namespace steadynorm
