#pragma once

// Parameters are either matrices (d_out × d_in) or vectors (d_out).

#include "steadynorm/linalg.hpp"

#include <span>
#include <string>
#include <variant>

namespace steadynorm {

using Tensor = std::variant<linalg::Matrix, linalg::Vector>;

inline std::span<double> values(Tensor& t) {
    return std::visit([](auto& x) { return x.values(); }, t);
}

inline std::span<const double> values(const Tensor& t) {
    return std::visit([](const auto& x) { return x.values(); }, t);
}

inline bool is_matrix(const Tensor& t) { return std::holds_alternative<linalg::Matrix>(t); }

/// Tensor of zeros with the same shape as `t`.
inline Tensor zeros_like(const Tensor& t) {
    if (const auto* m = std::get_if<linalg::Matrix>(&t)) {
        return linalg::Matrix(m->rows(), m->cols());
    }
    return linalg::Vector(std::get<linalg::Vector>(t).size());
}

inline bool same_shape(const Tensor& a, const Tensor& b) {
    if (a.index() != b.index()) {
        return false;
    }
    if (const auto* m = std::get_if<linalg::Matrix>(&a)) {
        const auto& n = std::get<linalg::Matrix>(b);
        return m->rows() == n.rows() && m->cols() == n.cols();
    }
    return std::get<linalg::Vector>(a).size() == std::get<linalg::Vector>(b).size();
}

struct ParamTensor {
    std::string name;
    Tensor value;
};

}  // namespace steadynorm
