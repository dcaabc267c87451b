#include "neusim/fields/encoding.hpp"

#include <cmath>

namespace neusim::fields {

using ad::Tape;
using ad::Tensor;
using ad::Var;

MatX FrequencyEncoding::encode(const MatX& P) const {
    const Eigen::Index n = P.rows();
    MatX out(n, dim());
    out.block(0, 0, n, 3) = P;
    Eigen::Index col = 3;
    double f = 1.0;
    for (int b = 0; b < bands; ++b, f *= 2.0) {
        out.block(0, col, n, 3) = (f * P.array()).sin();
        out.block(0, col + 3, n, 3) = (f * P.array()).cos();
        col += 6;
    }
    return out;
}

Var FrequencyEncoding::encode(Tape& t, Var P) const {
    std::vector<Var> parts;
    parts.push_back(P);
    double f = 1.0;
    for (int b = 0; b < bands; ++b, f *= 2.0) {
        Var s = t.scale(P, f);
        parts.push_back(t.vsin(s));
        parts.push_back(t.vcos(s));
    }
    return t.concat_cols(parts);
}

MatX FrequencyEncoding::encode_tangent(const MatX& P, const Vec3& d) const {
    const Eigen::Index n = P.rows();
    MatX out(n, dim());
    out.block(0, 0, n, 3) = d.transpose().replicate(n, 1);
    Eigen::Index col = 3;
    double f = 1.0;
    for (int b = 0; b < bands; ++b, f *= 2.0) {
        // d/dp sin(f p) . d = f cos(f p) ∘ d, componentwise.
        MatX c = (f * P.array()).cos().matrix();
        MatX s = (f * P.array()).sin().matrix();
        for (int k = 0; k < 3; ++k) {
            out.col(col + k) = f * d[k] * c.col(k);
            out.col(col + 3 + k) = -f * d[k] * s.col(k);
        }
        col += 6;
    }
    return out;
}

Var FrequencyEncoding::encode_tangent(Tape& t, Var P, const Vec3& d) const {
    const std::size_t n = t.value(P).rows();
    Tensor drep({n, 3});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < 3; ++k) drep.data()[i * 3 + k] = d[static_cast<int>(k)];
    Var D = t.constant(std::move(drep));
    std::vector<Var> parts;
    parts.push_back(D);
    double f = 1.0;
    for (int b = 0; b < bands; ++b, f *= 2.0) {
        Var s = t.scale(P, f);
        parts.push_back(t.scale(t.mul(t.vcos(s), D), f));
        parts.push_back(t.scale(t.mul(t.vsin(s), D), -f));
    }
    return t.concat_cols(parts);
}

} // namespace neusim::fields
