#include "neusim/fields/mlp.hpp"

#include <cmath>
#include <numbers>

namespace neusim::fields {

using ad::ParamStore;
using ad::Tape;
using ad::Tensor;
using ad::Var;

namespace {

constexpr double kSoftplusBeta = 100.0;

std::string wname(const std::string& prefix, int l) { return prefix + ".w" + std::to_string(l); }
std::string bname(const std::string& prefix, int l) { return prefix + ".b" + std::to_string(l); }

void layer_dims(const MlpSpec& spec, int in_dim, int out_dim, int l, int& rows, int& cols) {
    rows = l == 0 ? in_dim : spec.hidden;
    cols = l == spec.layers - 1 ? out_dim : spec.hidden;
}

double softplus100(double x) {
    double z = kSoftplusBeta * x;
    return z > 30.0 ? x : std::log1p(std::exp(z)) / kSoftplusBeta;
}

double softplus100_d(double x) {
    double z = kSoftplusBeta * x;
    return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

} // namespace

void init_mlp(ParamStore& ps, const std::string& prefix, const MlpSpec& spec, int in_dim,
              int out_dim, Rng& rng, double out_scale, const GeometricInit* geo) {
    require(spec.layers >= 1, "mlp: layer count must be >= 1");
    require(spec.hidden > 0 && in_dim > 0 && out_dim > 0, "mlp: widths must be positive");
    for (int l = 0; l < spec.layers; ++l) {
        int rows, cols;
        layer_dims(spec, in_dim, out_dim, l, rows, cols);
        Tensor W({static_cast<std::size_t>(rows), static_cast<std::size_t>(cols)});
        Tensor b({static_cast<std::size_t>(cols)});
        const bool last = l == spec.layers - 1;
        if (geo && last) {
            double w = std::sqrt(std::numbers::pi / rows);
            for (std::size_t k = 0; k < W.numel(); ++k) W.data()[k] = w;
            for (std::size_t k = 0; k < b.numel(); ++k) b.data()[k] = -geo->radius;
        } else if (geo && l == 0) {
            // Variance-preserving on the raw-point rows, zero on the rest, so
            // the net starts as a function of p alone.
            double std0 = std::sqrt(2.0 / geo->identity_cols);
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < cols; ++c)
                    W.data()[static_cast<std::size_t>(r) * cols + c] =
                        r < geo->identity_cols ? std0 * rng.normal() : 0.0;
        } else {
            double std0 = last ? out_scale * std::sqrt(1.0 / rows) : std::sqrt(2.0 / rows);
            for (std::size_t k = 0; k < W.numel(); ++k) W.data()[k] = std0 * rng.normal();
        }
        ps.create(wname(prefix, l), std::move(W));
        ps.create(bname(prefix, l), std::move(b));
    }
}

MatX mlp_forward(const ParamStore& ps, const std::string& prefix, const MlpSpec& spec,
                 const MatX& X) {
    MatX h = X;
    for (int l = 0; l < spec.layers; ++l) {
        const Tensor& W = ps.get(wname(prefix, l));
        const Tensor& b = ps.get(bname(prefix, l));
        MatX z = h * W.map();
        z.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.data(), b.numel());
        const bool last = l == spec.layers - 1;
        if (!last) {
            if (spec.act == Act::softplus100)
                h = z.unaryExpr([](double v) { return softplus100(v); });
            else
                h = z.cwiseMax(0.0);
        } else if (spec.out == OutAct::sigmoid) {
            h = z.unaryExpr([](double v) {
                return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
            });
        } else {
            h = std::move(z);
        }
    }
    return h;
}

Var mlp_forward(Tape& t, const ParamStore& ps, const std::string& prefix, const MlpSpec& spec, Var X) {
    Var h = X;
    for (int l = 0; l < spec.layers; ++l) {
        Var W = t.param(ps, wname(prefix, l));
        Var b = t.param(ps, bname(prefix, l));
        Var z = t.add_rowvec(t.matmul(h, W), b);
        const bool last = l == spec.layers - 1;
        if (!last)
            h = spec.act == Act::softplus100 ? t.softplus(z, kSoftplusBeta) : t.relu(z);
        else if (spec.out == OutAct::sigmoid)
            h = t.sigmoid(z);
        else
            h = z;
    }
    return h;
}

MlpTangentsPlain mlp_forward_tangent(const ParamStore& ps, const std::string& prefix,
                                     const MlpSpec& spec, const MatX& X,
                                     const std::vector<MatX>& Xt) {
    MlpTangentsPlain r;
    r.y = X;
    r.yt = Xt;
    for (int l = 0; l < spec.layers; ++l) {
        const Tensor& W = ps.get(wname(prefix, l));
        const Tensor& b = ps.get(bname(prefix, l));
        MatX z = r.y * W.map();
        z.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.data(), b.numel());
        for (auto& zt : r.yt) zt = (zt * W.map()).eval();
        const bool last = l == spec.layers - 1;
        if (!last) {
            MatX d;  // activation slope at z
            if (spec.act == Act::softplus100) {
                d = z.unaryExpr([](double v) { return softplus100_d(v); });
                r.y = z.unaryExpr([](double v) { return softplus100(v); });
            } else {
                d = z.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; });
                r.y = z.cwiseMax(0.0);
            }
            for (auto& zt : r.yt) zt = zt.cwiseProduct(d);
        } else if (spec.out == OutAct::sigmoid) {
            r.y = z.unaryExpr([](double v) {
                return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
            });
            MatX d = r.y.cwiseProduct((1.0 - r.y.array()).matrix());
            for (auto& zt : r.yt) zt = zt.cwiseProduct(d);
        } else {
            r.y = std::move(z);
        }
    }
    return r;
}

MlpTangentsTape mlp_forward_tangent(Tape& t, const ParamStore& ps, const std::string& prefix,
                                    const MlpSpec& spec, Var X, const std::vector<Var>& Xt) {
    MlpTangentsTape r;
    r.y = X;
    r.yt = Xt;
    for (int l = 0; l < spec.layers; ++l) {
        Var W = t.param(ps, wname(prefix, l));
        Var b = t.param(ps, bname(prefix, l));
        Var z = t.add_rowvec(t.matmul(r.y, W), b);
        for (auto& zt : r.yt) zt = t.matmul(zt, W);
        const bool last = l == spec.layers - 1;
        if (!last) {
            Var d = spec.act == Act::softplus100 ? t.sigmoid(t.scale(z, kSoftplusBeta))
                                                 : t.heaviside(z);
            r.y = spec.act == Act::softplus100 ? t.softplus(z, kSoftplusBeta) : t.relu(z);
            for (auto& zt : r.yt) zt = t.mul(zt, d);
        } else if (spec.out == OutAct::sigmoid) {
            r.y = t.sigmoid(z);
            Var d = t.mul(r.y, t.offset(t.neg(r.y), 1.0));
            for (auto& zt : r.yt) zt = t.mul(zt, d);
        } else {
            r.y = z;
        }
    }
    return r;
}

} // namespace neusim::fields
