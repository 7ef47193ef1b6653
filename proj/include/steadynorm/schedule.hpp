#pragma once

// Learning-rate, momentum and C² schedules as pure functions of the step
// t ∈ [1, total_steps], plus the effective-learning-rate algebra
//     γ_eff = γ √((2 − α)/α).

#include "steadynorm/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>

namespace steadynorm {

inline double effective_lr(double gamma, double alpha) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw DomainError("effective_lr: alpha must lie in (0, 1]");
    return gamma * std::sqrt((2.0 - alpha) / alpha);
}

/// α with effective_lr(γ, α) = target, clamped to alpha_max.
inline double alpha_for_effective_lr(double gamma, double gamma_eff_target, double alpha_max) {
    if (!(alpha_max > 0.0 && alpha_max <= 1.0)) {
        throw DomainError("alpha_for_effective_lr: alpha_max must lie in (0, 1]");
    }
    if (gamma_eff_target < 0.0 || gamma < 0.0) {
        throw DomainError("alpha_for_effective_lr: rates must be >= 0");
    }
    if (gamma == 0.0) {
        if (gamma_eff_target > 0.0) {
            throw DomainError("alpha_for_effective_lr: gamma = 0 cannot reach a positive target");
        }
        return alpha_max;
    }
    const double r = gamma_eff_target / gamma;
    return std::min(2.0 / (r * r + 1.0), alpha_max);
}

/// The mismatched quantity γ(2 − α)/α, kept as a negative control.
inline double erroneous_effective_lr(double gamma, double alpha) {
    if (!(alpha > 0.0 && alpha <= 1.0)) {
        throw DomainError("erroneous_effective_lr: alpha must lie in (0, 1]");
    }
    return gamma * (2.0 - alpha) / alpha;
}

enum class GammaShape { Constant, Cosine };

enum class AlphaKind { Constant, Linear, Synthesized };

/// What γ does once a synthesized α reaches alpha_max.
enum class PostClamp { Freeze, Resume };

/// Which quantity a synthesized schedule matches against the baseline.
enum class Matching { EffectiveLr, Erroneous };

struct AlphaSchedule {
    AlphaKind kind = AlphaKind::Constant;
    /// Constant value, start of a linear ramp, or the baseline α when synthesized.
    double alpha0 = 0.1;
    /// End of a linear ramp.
    double alpha1 = 0.1;
    double alpha_max = 1.0;
    PostClamp post_clamp = PostClamp::Freeze;
    Matching matching = Matching::EffectiveLr;
};

enum class CSqShape { Constant, Cosine };

struct CSqSchedule {
    CSqShape shape = CSqShape::Constant;
    double c_sq0 = 1.0;
    double c_sq_final = 1.0;

    void validate() const {
        if (!(c_sq0 > 0.0)) throw DomainError("C² schedule: initial value must be > 0");
        if (shape == CSqShape::Cosine && !(c_sq_final > 0.0)) {
            throw DomainError("C² schedule: final value must be > 0");
        }
    }
};

struct ScheduleSet {
    std::int64_t total_steps = 1;
    std::int64_t warmup_steps = 0;
    double gamma_peak = 1e-3;
    GammaShape gamma_shape = GammaShape::Cosine;
    AlphaSchedule alpha;
    CSqSchedule c_sq;

    void validate() const {
        if (total_steps < 1) throw DomainError("schedule: total_steps must be >= 1");
        if (warmup_steps < 0 || warmup_steps > total_steps) {
            throw DomainError("schedule: warmup_steps must lie in [0, total_steps]");
        }
        if (!(gamma_peak > 0.0) || !std::isfinite(gamma_peak)) {
            throw DomainError("schedule: gamma_peak must be > 0");
        }
        auto in_unit = [](double a) { return a > 0.0 && a <= 1.0; };
        if (!in_unit(alpha.alpha0) || !in_unit(alpha.alpha_max)) {
            throw DomainError("schedule: alpha values must lie in (0, 1]");
        }
        if (alpha.kind == AlphaKind::Linear && !in_unit(alpha.alpha1)) {
            throw DomainError("schedule: alpha values must lie in (0, 1]");
        }
        if (alpha.kind == AlphaKind::Synthesized && alpha.alpha_max < alpha.alpha0) {
            throw DomainError("schedule: alpha_max must be >= the baseline alpha");
        }
        c_sq.validate();
    }
};

namespace detail {

inline void check_step(const ScheduleSet& s, std::int64_t t) {
    if (t < 1 || t > s.total_steps) {
        throw DomainError("schedule: step " + std::to_string(t) + " outside [1, " +
                          std::to_string(s.total_steps) + "]");
    }
}

// The γ shape alone: linear warmup from 0, then constant or cosine to 0.
inline double base_gamma(const ScheduleSet& s, std::int64_t t) {
    if (t <= s.warmup_steps) {
        return s.gamma_peak * static_cast<double>(t) / static_cast<double>(s.warmup_steps);
    }
    if (s.gamma_shape == GammaShape::Constant) {
        return s.gamma_peak;
    }
    const double span = static_cast<double>(s.total_steps - s.warmup_steps);
    const double p = static_cast<double>(t - s.warmup_steps) / span;
    return s.gamma_peak * 0.5 * (1.0 + std::cos(std::numbers::pi * p));
}

// Quantity the synthesized schedule matches: the baseline's γ_eff (or γ′).
inline double baseline_target(const ScheduleSet& s, std::int64_t t) {
    const double g = base_gamma(s, t);
    return s.alpha.matching == Matching::EffectiveLr ? effective_lr(g, s.alpha.alpha0)
                                                     : erroneous_effective_lr(g, s.alpha.alpha0);
}

// Unclamped α that makes the held peak γ reach the baseline target.
inline double synthesized_alpha_raw(const ScheduleSet& s, std::int64_t t) {
    const double r = baseline_target(s, t) / s.gamma_peak;
    return s.alpha.matching == Matching::EffectiveLr ? 2.0 / (r * r + 1.0) : 2.0 / (r + 1.0);
}

}  // namespace detail

/// First step after warmup at which a synthesized α reaches alpha_max, if any.
inline std::optional<std::int64_t> synthesized_clamp_step(const ScheduleSet& s) {
    if (s.alpha.kind != AlphaKind::Synthesized) {
        return std::nullopt;
    }
    for (std::int64_t t = s.warmup_steps + 1; t <= s.total_steps; ++t) {
        if (detail::synthesized_alpha_raw(s, t) >= s.alpha.alpha_max) {
            return t;
        }
    }
    return std::nullopt;
}

/// Momentum α_t.
inline double alpha_at(const ScheduleSet& s, std::int64_t t) {
    detail::check_step(s, t);
    const AlphaSchedule& a = s.alpha;
    switch (a.kind) {
        case AlphaKind::Constant: return a.alpha0;
        case AlphaKind::Linear: {
            if (s.total_steps == 1) return a.alpha0;
            const double p = static_cast<double>(t - 1) / static_cast<double>(s.total_steps - 1);
            return a.alpha0 + (a.alpha1 - a.alpha0) * p;
        }
        case AlphaKind::Synthesized:
            if (t <= s.warmup_steps) return a.alpha0;
            return std::clamp(detail::synthesized_alpha_raw(s, t), a.alpha0, a.alpha_max);
    }
    throw DomainError("alpha_at: unknown schedule kind");
}

/// Learning rate γ_t. A synthesized α schedule holds γ at its peak after
/// warmup; after the α clamp γ either stays frozen or resumes decaying so the
/// matched quantity keeps tracking the baseline.
inline double gamma_at(const ScheduleSet& s, std::int64_t t) {
    detail::check_step(s, t);
    if (s.alpha.kind != AlphaKind::Synthesized || t <= s.warmup_steps) {
        return detail::base_gamma(s, t);
    }
    const double raw = detail::synthesized_alpha_raw(s, t);
    if (raw < s.alpha.alpha_max || s.alpha.post_clamp == PostClamp::Freeze) {
        return s.gamma_peak;
    }
    const double amax = s.alpha.alpha_max;
    const double target = detail::baseline_target(s, t);
    const double factor = s.alpha.matching == Matching::EffectiveLr ? effective_lr(1.0, amax)
                                                                    : erroneous_effective_lr(1.0, amax);
    return std::min(s.gamma_peak, target / factor);
}

inline double c_sq_at(const CSqSchedule& c, std::int64_t t, std::int64_t total_steps) {
    if (t < 1 || t > total_steps) throw DomainError("c_sq_at: step out of range");
    if (c.shape == CSqShape::Constant || total_steps == 1) {
        return c.c_sq0;
    }
    const double p = static_cast<double>(t - 1) / static_cast<double>(total_steps - 1);
    return c.c_sq_final + (c.c_sq0 - c.c_sq_final) * 0.5 * (1.0 + std::cos(std::numbers::pi * p));
}

inline double c_sq_at(const ScheduleSet& s, std::int64_t t) {
    detail::check_step(s, t);
    return c_sq_at(s.c_sq, t, s.total_steps);
}

/// γ_eff of the cosine-γ, constant-α baseline a synthesized schedule tracks.
inline double baseline_effective_lr(const ScheduleSet& s, std::int64_t t) {
    detail::check_step(s, t);
    return effective_lr(detail::base_gamma(s, t), s.alpha.alpha0);
}

}  // namespace steadynorm
