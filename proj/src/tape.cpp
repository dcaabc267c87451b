#include "neusim/ad/tape.hpp"

#include <cmath>
#include <stdexcept>

namespace neusim::ad {

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

} // namespace

Tensor& Tape::slot(Var v) {
    int i = check(v);
    if (!has_[i]) {
        grads_[i] = Tensor(nodes_[i].value.shape());
        has_[i] = 1;
    }
    touched_.push_back(i);
    return grads_[i];
}

void Tape::accum(Var v, const Tensor& delta) {
    Tensor& g = slot(v);
    if (!g.same_shape(delta)) throw std::invalid_argument("accum: gradient shape mismatch");
    for (std::size_t k = 0; k < g.numel(); ++k) g.data()[k] += delta.data()[k];
}

Gradients Tape::backward(Var seed) {
    int s = check(seed);
    if (nodes_[s].value.numel() != 1)
        throw std::invalid_argument("backward: seed must be scalar-valued");
    grads_.assign(nodes_.size(), Tensor());
    has_.assign(nodes_.size(), 0);
    grads_[s] = Tensor(nodes_[s].value.shape());
    grads_[s].data()[0] = 1.0;
    has_[s] = 1;

    for (int i = s; i >= 0; --i) {
        if (!has_[i] || !nodes_[i].back) continue;
        touched_.clear();
        nodes_[i].back(grads_[i], *this);
        // Blame the node whose backward produced the bad values, not the
        // leaf that eventually receives them.
        for (int v : touched_)
            if (!grads_[v].all_finite())
                throw std::runtime_error(std::string("backward: non-finite gradient from node '") +
                                         nodes_[i].op + "' #" + std::to_string(i));
    }

    Gradients out;
    out.grads_ = std::move(grads_);
    out.has_ = std::move(has_);
    for (const auto& [name, var] : param_vars_)
        if (out.has_[var.id]) out.by_param_.emplace(name, out.grads_[var.id]);
    grads_.clear();
    has_.clear();
    return out;
}

// ---- elementwise ----

Var Tape::add(Var a, Var b) {
    const Tensor &av = value(a), &bv = value(b);
    check_same_shape(av, bv, "add");
    Tensor out(av.shape());
    for (std::size_t k = 0; k < out.numel(); ++k) out.data()[k] = av.data()[k] + bv.data()[k];
    return push(std::move(out), "add", [a, b](const Tensor& g, Tape& t) {
        t.accum(a, g);
        t.accum(b, g);
    });
}

Var Tape::sub(Var a, Var b) {
    const Tensor &av = value(a), &bv = value(b);
    check_same_shape(av, bv, "sub");
    Tensor out(av.shape());
    for (std::size_t k = 0; k < out.numel(); ++k) out.data()[k] = av.data()[k] - bv.data()[k];
    return push(std::move(out), "sub", [a, b](const Tensor& g, Tape& t) {
        t.accum(a, g);
        Tensor& gb = t.slot(b);
        for (std::size_t k = 0; k < g.numel(); ++k) gb.data()[k] -= g.data()[k];
    });
}

Var Tape::mul(Var a, Var b) {
    const Tensor &av = value(a), &bv = value(b);
    check_same_shape(av, bv, "mul");
    Tensor out(av.shape());
    for (std::size_t k = 0; k < out.numel(); ++k) out.data()[k] = av.data()[k] * bv.data()[k];
    return push(std::move(out), "mul", [a, b](const Tensor& g, Tape& t) {
        const Tensor &av = t.value(a), &bv = t.value(b);
        Tensor& ga = t.slot(a);
        Tensor& gb = t.slot(b);
        for (std::size_t k = 0; k < g.numel(); ++k) {
            ga.data()[k] += g.data()[k] * bv.data()[k];
            gb.data()[k] += g.data()[k] * av.data()[k];
        }
    });
}

Var Tape::div(Var a, Var b) {
    const Tensor &av = value(a), &bv = value(b);
    check_same_shape(av, bv, "div");
    Tensor out(av.shape());
    for (std::size_t k = 0; k < out.numel(); ++k) out.data()[k] = av.data()[k] / bv.data()[k];
    return push(std::move(out), "div", [a, b](const Tensor& g, Tape& t) {
        const Tensor &av = t.value(a), &bv = t.value(b);
        Tensor& ga = t.slot(a);
        Tensor& gb = t.slot(b);
        for (std::size_t k = 0; k < g.numel(); ++k) {
            double inv = 1.0 / bv.data()[k];
            ga.data()[k] += g.data()[k] * inv;
            gb.data()[k] -= g.data()[k] * av.data()[k] * inv * inv;
        }
    });
}

Var Tape::scale(Var a, double c) {
    const Tensor& av = value(a);
    Tensor out(av.shape());
    for (std::size_t k = 0; k < out.numel(); ++k) out.data()[k] = av.data()[k] * c;
    return push(std::move(out), "scale", [a, c](const Tensor& g, Tape& t) {
        Tensor& ga = t.slot(a);
        for (std::size_t k = 0; k < g.numel(); ++k) ga.data()[k] += g.data()[k] * c;
    });
}

Var Tape::offset(Var a, double c) {
    const Tensor& av = value(a);
    Tensor out(av.shape());
    for (std::size_t k = 0; k < out.numel(); ++k) out.data()[k] = av.data()[k] + c;
    return push(std::move(out), "offset",
                [a](const Tensor& g, Tape& t) { t.accum(a, g); });
}

// ---- linear algebra / broadcasts ----

Var Tape::matmul(Var a, Var b) {
    const Tensor &av = value(a), &bv = value(b);
    if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows())
        throw std::invalid_argument("matmul: incompatible shapes");
    Tensor out({av.rows(), bv.cols()});
    out.map() = av.map() * bv.map();
    return push(std::move(out), "matmul", [a, b](const Tensor& g, Tape& t) {
        const Tensor &av = t.value(a), &bv = t.value(b);
        t.slot(a).map() += g.map() * bv.map().transpose();
        t.slot(b).map() += av.map().transpose() * g.map();
    });
}

Var Tape::add_rowvec(Var a, Var b) {
    const Tensor &av = value(a), &bv = value(b);
    if (av.rank() != 2 || bv.numel() != av.cols())
        throw std::invalid_argument("add_rowvec: incompatible shapes");
    Tensor out(av.shape());
    std::size_t m = av.rows(), n = av.cols();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            out.data()[i * n + j] = av.data()[i * n + j] + bv.data()[j];
    return push(std::move(out), "add_rowvec", [a, b, m, n](const Tensor& g, Tape& t) {
        t.accum(a, g);
        Tensor& gb = t.slot(b);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) gb.data()[j] += g.data()[i * n + j];
    });
}

Var Tape::mul_colvec(Var a, Var c) {
    const Tensor &av = value(a), &cv = value(c);
    if (av.rank() != 2 || cv.numel() != av.rows())
        throw std::invalid_argument("mul_colvec: incompatible shapes");
    Tensor out(av.shape());
    std::size_t m = av.rows(), n = av.cols();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            out.data()[i * n + j] = av.data()[i * n + j] * cv.data()[i];
    return push(std::move(out), "mul_colvec", [a, c, m, n](const Tensor& g, Tape& t) {
        const Tensor &av = t.value(a), &cv = t.value(c);
        Tensor& ga = t.slot(a);
        Tensor& gc = t.slot(c);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                ga.data()[i * n + j] += g.data()[i * n + j] * cv.data()[i];
                gc.data()[i] += g.data()[i * n + j] * av.data()[i * n + j];
            }
    });
}

Var Tape::scale_by(Var a, Var s) {
    const Tensor &av = value(a), &sv = value(s);
    if (sv.numel() != 1) throw std::invalid_argument("scale_by: s must be scalar");
    Tensor out(av.shape());
    double c = sv.data()[0];
    for (std::size_t k = 0; k < out.numel(); ++k) out.data()[k] = av.data()[k] * c;
    return push(std::move(out), "scale_by", [a, s](const Tensor& g, Tape& t) {
        const Tensor &av = t.value(a), &sv = t.value(s);
        Tensor& ga = t.slot(a);
        Tensor& gs = t.slot(s);
        double c = sv.data()[0];
        double acc = 0.0;
        for (std::size_t k = 0; k < g.numel(); ++k) {
            ga.data()[k] += g.data()[k] * c;
            acc += g.data()[k] * av.data()[k];
        }
        gs.data()[0] += acc;
    });
}

// ---- nonlinearities ----

Var Tape::sigmoid(Var a) {
    const Tensor& av = value(a);
    Tensor out(av.shape());
    for (std::size_t k = 0; k < out.numel(); ++k) {
        double x = av.data()[k];
        // Split by sign for numerical stability at large |x|.
        out.data()[k] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                                 : std::exp(x) / (1.0 + std::exp(x));
    }
    Var v = push(std::move(out), "sigmoid", nullptr);
    nodes_[v.id].back = [a, v](const Tensor& g, Tape& t) {
        const Tensor& yv = t.value(v);
        Tensor& ga = t.slot(a);
        for (std::size_t k = 0; k < g.numel(); ++k) {
            double y = yv.data()[k];
            ga.data()[k] += g.data()[k] * y * (1.0 - y);
        }
    };
    return v;
}

Var Tape::softplus(Var a, double beta) {
    const Tensor& av = value(a);
    Tensor out(av.shape());
    for (std::size_t k = 0; k < out.numel(); ++k) {
        double z = beta * av.data()[k];
        // log1p(exp(z))/beta, linear for large z to avoid overflow.
        out.data()[k] = z > 30.0 ? av.data()[k] : std::log1p(std::exp(z)) / beta;
    }
    return push(std::move(out), "softplus", [a, beta](const Tensor& g, Tape& t) {
        const Tensor& av = t.value(a);
        Tensor& ga = t.slot(a);
        for (std::size_t k = 0; k < g.numel(); ++k) {
            double z = beta * av.data()[k];
            double s = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
            ga.data()[k] += g.data()[k] * s;
        }
    });
}

Var Tape::relu(Var a) {
    const Tensor& av = value(a);
    Tensor out(av.shape());
    for (std::size_t k = 0; k < out.numel(); ++k) out.data()[k] = std::max(av.data()[k], 0.0);
    return push(std::move(out), "relu", [a](const Tensor& g, Tape& t) {
        const Tensor& av = t.value(a);
        Tensor& ga = t.slot(a);
        for (std::size_t k = 0; k < g.numel(); ++k)
            if (av.data()[k] > 0.0) ga.data()[k] += g.data()[k];
    });
}

Var Tape::vsin(Var a) {
    const Tensor& av = value(a);
    Tensor out(av.shape());
    for (std::size_t k = 0; k < out.numel(); ++k) out.data()[k] = std::sin(av.data()[k]);
    return push(std::move(out), "sin", [a](const Tensor& g, Tape& t) {
        const Tensor& av = t.value(a);
        Tensor& ga = t.slot(a);
        for (std::size_t k = 0; k < g.numel(); ++k)
            ga.data()[k] += g.data()[k] * std::cos(av.data()[k]);
    });
}

Var Tape::vcos(Var a) {
    const Tensor& av = value(a);
    Tensor out(av.shape());
    for (std::size_t k = 0; k < out.numel(); ++k) out.data()[k] = std::cos(av.data()[k]);
    return push(std::move(out), "cos", [a](const Tensor& g, Tape& t) {
        const Tensor& av = t.value(a);
        Tensor& ga = t.slot(a);
        for (std::size_t k = 0; k < g.numel(); ++k)
            ga.data()[k] -= g.data()[k] * std::sin(av.data()[k]);
    });
}

Var Tape::vexp(Var a) {
    const Tensor& av = value(a);
    Tensor out(av.shape());
    for (std::size_t k = 0; k < out.numel(); ++k) out.data()[k] = std::exp(av.data()[k]);
    Var v = push(std::move(out), "exp", nullptr);
    nodes_[v.id].back = [a, v](const Tensor& g, Tape& t) {
        const Tensor& yv = t.value(v);
        Tensor& ga = t.slot(a);
        for (std::size_t k = 0; k < g.numel(); ++k) ga.data()[k] += g.data()[k] * yv.data()[k];
    };
    return v;
}

Var Tape::sqrt_safe(Var a) {
    const Tensor& av = value(a);
    Tensor out(av.shape());
    for (std::size_t k = 0; k < out.numel(); ++k)
        out.data()[k] = std::sqrt(std::max(av.data()[k], 0.0));
    Var v = push(std::move(out), "sqrt", nullptr);
    nodes_[v.id].back = [a, v](const Tensor& g, Tape& t) {
        const Tensor& yv = t.value(v);
        Tensor& ga = t.slot(a);
        for (std::size_t k = 0; k < g.numel(); ++k)
            ga.data()[k] += g.data()[k] * 0.5 / std::max(yv.data()[k], 1e-12);
    };
    return v;
}

Var Tape::square(Var a) {
    const Tensor& av = value(a);
    Tensor out(av.shape());
    for (std::size_t k = 0; k < out.numel(); ++k) out.data()[k] = av.data()[k] * av.data()[k];
    return push(std::move(out), "square", [a](const Tensor& g, Tape& t) {
        const Tensor& av = t.value(a);
        Tensor& ga = t.slot(a);
        for (std::size_t k = 0; k < g.numel(); ++k)
            ga.data()[k] += g.data()[k] * 2.0 * av.data()[k];
    });
}

Var Tape::vabs(Var a) {
    const Tensor& av = value(a);
    Tensor out(av.shape());
    for (std::size_t k = 0; k < out.numel(); ++k) out.data()[k] = std::abs(av.data()[k]);
    return push(std::move(out), "abs", [a](const Tensor& g, Tape& t) {
        const Tensor& av = t.value(a);
        Tensor& ga = t.slot(a);
        // Subgradient 0 at the kink.
        for (std::size_t k = 0; k < g.numel(); ++k) {
            double x = av.data()[k];
            if (x > 0.0)
                ga.data()[k] += g.data()[k];
            else if (x < 0.0)
                ga.data()[k] -= g.data()[k];
        }
    });
}

Var Tape::clamp(Var a, double lo, double hi) {
    const Tensor& av = value(a);
    Tensor out(av.shape());
    for (std::size_t k = 0; k < out.numel(); ++k)
        out.data()[k] = std::min(std::max(av.data()[k], lo), hi);
    return push(std::move(out), "clamp", [a, lo, hi](const Tensor& g, Tape& t) {
        const Tensor& av = t.value(a);
        Tensor& ga = t.slot(a);
        for (std::size_t k = 0; k < g.numel(); ++k) {
            double x = av.data()[k];
            if (x > lo && x < hi) ga.data()[k] += g.data()[k];
        }
    });
}

Var Tape::heaviside(Var a) {
    const Tensor& av = value(a);
    Tensor out(av.shape());
    for (std::size_t k = 0; k < out.numel(); ++k) out.data()[k] = av.data()[k] > 0.0 ? 1.0 : 0.0;
    return push(std::move(out), "heaviside", nullptr);
}

// ---- shape ops ----

Var Tape::slice_cols(Var a, std::size_t j0, std::size_t n) {
    const Tensor& av = value(a);
    if (av.rank() != 2 || j0 + n > av.cols())
        throw std::invalid_argument("slice_cols: out of range");
    std::size_t m = av.rows(), nc = av.cols();
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out.data()[i * n + j] = av.data()[i * nc + j0 + j];
    return push(std::move(out), "slice_cols", [a, j0, n, m, nc](const Tensor& g, Tape& t) {
        Tensor& ga = t.slot(a);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) ga.data()[i * nc + j0 + j] += g.data()[i * n + j];
    });
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
    std::size_t m = value(parts[0]).rows(), n = 0;
    for (Var p : parts) {
        const Tensor& pv = value(p);
        if (pv.rank() != 2 || pv.rows() != m)
            throw std::invalid_argument("concat_cols: row mismatch");
        n += pv.cols();
    }
    Tensor out({m, n});
    std::size_t off = 0;
    for (Var p : parts) {
        const Tensor& pv = value(p);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < pv.cols(); ++j)
                out.data()[i * n + off + j] = pv.data()[i * pv.cols() + j];
        off += pv.cols();
    }
    auto ps = parts;
    return push(std::move(out), "concat_cols", [ps, m, n](const Tensor& g, Tape& t) {
        std::size_t off = 0;
        for (Var p : ps) {
            Tensor& gp = t.slot(p);
            std::size_t pc = t.value(p).cols();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < pc; ++j)
                    gp.data()[i * pc + j] += g.data()[i * n + off + j];
            off += pc;
        }
    });
}

Var Tape::slice_rows(Var a, std::size_t i0, std::size_t n) {
    const Tensor& av = value(a);
    if (av.rank() != 2 || i0 + n > av.rows())
        throw std::invalid_argument("slice_rows: out of range");
    std::size_t nc = av.cols();
    Tensor out({n, nc});
    for (std::size_t k = 0; k < n * nc; ++k) out.data()[k] = av.data()[i0 * nc + k];
    return push(std::move(out), "slice_rows", [a, i0, n, nc](const Tensor& g, Tape& t) {
        Tensor& ga = t.slot(a);
        for (std::size_t k = 0; k < n * nc; ++k) ga.data()[i0 * nc + k] += g.data()[k];
    });
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
    std::size_t nc = value(parts[0]).cols(), m = 0;
    for (Var p : parts) {
        const Tensor& pv = value(p);
        if (pv.rank() != 2 || pv.cols() != nc)
            throw std::invalid_argument("concat_rows: col mismatch");
        m += pv.rows();
    }
    Tensor out({m, nc});
    std::size_t off = 0;
    for (Var p : parts) {
        const Tensor& pv = value(p);
        for (std::size_t k = 0; k < pv.numel(); ++k) out.data()[off + k] = pv.data()[k];
        off += pv.numel();
    }
    auto ps = parts;
    return push(std::move(out), "concat_rows", [ps](const Tensor& g, Tape& t) {
        std::size_t off = 0;
        for (Var p : ps) {
            Tensor& gp = t.slot(p);
            for (std::size_t k = 0; k < gp.numel(); ++k) gp.data()[k] += g.data()[off + k];
            off += gp.numel();
        }
    });
}

Var Tape::reshape(Var a, std::vector<std::size_t> shape) {
    const Tensor& av = value(a);
    if (Tensor::count(shape) != av.numel()) throw std::invalid_argument("reshape: numel mismatch");
    Tensor out(shape);
    for (std::size_t k = 0; k < out.numel(); ++k) out.data()[k] = av.data()[k];
    return push(std::move(out), "reshape", [a](const Tensor& g, Tape& t) {
        Tensor& ga = t.slot(a);
        for (std::size_t k = 0; k < g.numel(); ++k) ga.data()[k] += g.data()[k];
    });
}

Var Tape::gather_rows(Var a, std::vector<std::size_t> idx) {
    const Tensor& av = value(a);
    if (av.rank() != 2) throw std::invalid_argument("gather_rows: rank-2 input required");
    std::size_t nc = av.cols();
    for (std::size_t i : idx)
        if (i >= av.rows()) throw std::invalid_argument("gather_rows: index out of range");
    Tensor out({idx.size(), nc});
    for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t j = 0; j < nc; ++j) out.data()[r * nc + j] = av.data()[idx[r] * nc + j];
    return push(std::move(out), "gather_rows", [a, idx, nc](const Tensor& g, Tape& t) {
        Tensor& ga = t.slot(a);
        for (std::size_t r = 0; r < idx.size(); ++r)
            for (std::size_t j = 0; j < nc; ++j) ga.data()[idx[r] * nc + j] += g.data()[r * nc + j];
    });
}

// ---- reductions / scans ----

Var Tape::sum_all(Var a) {
    const Tensor& av = value(a);
    double s = 0.0;
    for (std::size_t k = 0; k < av.numel(); ++k) s += av.data()[k];
    return push(Tensor::scalar(s), "sum_all", [a](const Tensor& g, Tape& t) {
        Tensor& ga = t.slot(a);
        for (std::size_t k = 0; k < ga.numel(); ++k) ga.data()[k] += g.data()[0];
    });
}

Var Tape::mean_all(Var a) {
    const Tensor& av = value(a);
    double s = 0.0;
    for (std::size_t k = 0; k < av.numel(); ++k) s += av.data()[k];
    double inv = 1.0 / static_cast<double>(av.numel());
    return push(Tensor::scalar(s * inv), "mean_all", [a, inv](const Tensor& g, Tape& t) {
        Tensor& ga = t.slot(a);
        for (std::size_t k = 0; k < ga.numel(); ++k) ga.data()[k] += g.data()[0] * inv;
    });
}

Var Tape::sum_rows(Var a) {
    const Tensor& av = value(a);
    if (av.rank() != 2) throw std::invalid_argument("sum_rows: rank-2 input required");
    std::size_t m = av.rows(), n = av.cols();
    Tensor out({m, 1});
    for (std::size_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += av.data()[i * n + j];
        out.data()[i] = s;
    }
    return push(std::move(out), "sum_rows", [a, m, n](const Tensor& g, Tape& t) {
        Tensor& ga = t.slot(a);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) ga.data()[i * n + j] += g.data()[i];
    });
}

Var Tape::segment_sum_rows(Var a, std::size_t group) {
    const Tensor& av = value(a);
    if (av.rank() != 2 || group == 0 || av.rows() % group != 0)
        throw std::invalid_argument("segment_sum_rows: rows must be a multiple of group");
    std::size_t m = av.rows() / group, n = av.cols();
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t r = 0; r < group; ++r)
            for (std::size_t j = 0; j < n; ++j)
                out.data()[i * n + j] += av.data()[(i * group + r) * n + j];
    return push(std::move(out), "segment_sum_rows", [a, group, m, n](const Tensor& g, Tape& t) {
        Tensor& ga = t.slot(a);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t r = 0; r < group; ++r)
                for (std::size_t j = 0; j < n; ++j)
                    ga.data()[(i * group + r) * n + j] += g.data()[i * n + j];
    });
}

Var Tape::cumsum_exclusive(Var a) {
    const Tensor& av = value(a);
    if (av.rank() != 2) throw std::invalid_argument("cumsum_exclusive: rank-2 input required");
    std::size_t m = av.rows(), n = av.cols();
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        double run = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            out.data()[i * n + j] = run;
            run += av.data()[i * n + j];
        }
    }
    return push(std::move(out), "cumsum_exclusive", [a, m, n](const Tensor& g, Tape& t) {
        // d out[i,j] / d in[i,k] = [k < j]  =>  g_in[i,k] = sum_{j>k} g[i,j].
        Tensor& ga = t.slot(a);
        for (std::size_t i = 0; i < m; ++i) {
            double run = 0.0;
            for (std::size_t j = n; j-- > 0;) {
                ga.data()[i * n + j] += run;
                run += g.data()[i * n + j];
            }
        }
    });
}

} // namespace neusim::ad
