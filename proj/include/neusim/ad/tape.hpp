#pragma once

#include "neusim/ad/param_store.hpp"
#include "neusim/ad/tensor.hpp"

#include <functional>
#include <map>
#include <string>
#include <vector>

namespace neusim::ad {

class Tape;

// Handle to a node on a tape. Valid only for the tape that produced it.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Gradients keyed by node id, with a name view for bound parameters.
class Gradients {
public:
    Tensor get(Var v) const {
        if (v.id >= 0 && v.id < static_cast<int>(grads_.size()) && has_[v.id]) return grads_[v.id];
        return Tensor::scalar(0.0);
    }
    bool present(Var v) const {
        return v.id >= 0 && v.id < static_cast<int>(grads_.size()) && has_[v.id];
    }
    const std::map<std::string, Tensor>& by_param() const { return by_param_; }

private:
    friend class Tape;
    std::vector<Tensor> grads_;
    std::vector<char> has_;
    std::map<std::string, Tensor> by_param_;
};

// Append-only record of primitive tensor operations. Nodes are created in
// topological order; backward replays them once, in reverse, single-threaded,
// so identical tapes give bitwise-identical gradients.
class Tape {
public:
    using BackFn = std::function<void(const Tensor& g, Tape& t)>;

    // Leaves. constant() is a node whose gradient is never consumed; leaf()
    // marks an input whose gradient the caller intends to read.
    Var constant(Tensor v) { return push(std::move(v), "constant", nullptr); }
    Var leaf(Tensor v) { return push(std::move(v), "leaf", nullptr); }
    Var scalar(double v) { return constant(Tensor::scalar(v)); }

    // Binds a named parameter as a leaf; repeated binds return the same node.
    // The value is copied onto the tape at bind time.
    Var param(const ParamStore& store, const std::string& name) {
        auto it = param_vars_.find(name);
        if (it != param_vars_.end()) return it->second;
        Var v = push(store.get(name), "param", nullptr);
        param_vars_.emplace(name, v);
        return v;
    }

    const Tensor& value(Var v) const { return nodes_[check(v)].value; }
    std::size_t size() const { return nodes_.size(); }

    // ---- elementwise, same shape ----
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var div(Var a, Var b);

    // ---- scalar constants ----
    Var neg(Var a) { return scale(a, -1.0); }
    Var scale(Var a, double c);
    Var offset(Var a, double c);

    // ---- linear algebra / broadcasts ----
    Var matmul(Var a, Var b);
    Var add_rowvec(Var a, Var b);  // [m,n] + [n]
    Var mul_colvec(Var a, Var c);  // [m,n] * [m] per-row scalar
    Var scale_by(Var a, Var s);    // tensor * scalar var

    // ---- nonlinearities ----
    Var sigmoid(Var a);
    Var softplus(Var a, double beta);
    Var relu(Var a);
    Var vsin(Var a);
    Var vcos(Var a);
    Var vexp(Var a);
    Var sqrt_safe(Var a);  // d/dx guarded near 0
    Var square(Var a);
    Var vabs(Var a);
    Var clamp(Var a, double lo, double hi);
    Var heaviside(Var a);  // 1 for x>0 else 0; zero derivative (a.e. exact)

    // ---- shape ops ----
    Var slice_cols(Var a, std::size_t j0, std::size_t n);
    Var concat_cols(const std::vector<Var>& parts);
    Var slice_rows(Var a, std::size_t i0, std::size_t n);
    Var concat_rows(const std::vector<Var>& parts);
    Var reshape(Var a, std::vector<std::size_t> shape);
    Var gather_rows(Var a, std::vector<std::size_t> idx);

    // ---- reductions / scans ----
    Var sum_all(Var a);
    Var mean_all(Var a);
    Var sum_rows(Var a);           // [m,n] -> [m,1]
    Var segment_sum_rows(Var a, std::size_t group);  // [g*k,n] -> [k,n]
    Var cumsum_exclusive(Var a);   // along axis 1

    // Custom differentiable primitive (e.g. a simulation step): the caller
    // supplies the forward value and a backward that routes the output
    // gradient to the input nodes via Tape::accum.
    Var custom(Tensor value, const char* op, BackFn back) {
        return push(std::move(value), op, std::move(back));
    }

    // Accumulate into a node's gradient slot (for custom backward fns).
    void accum(Var v, const Tensor& delta);

    // Reverse pass from a scalar-valued seed node.
    Gradients backward(Var seed);

private:
    struct Node {
        Tensor value;
        const char* op;
        BackFn back;
    };

    int check(Var v) const {
        if (v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
            throw std::logic_error("tape: var does not belong to this tape");
        return v.id;
    }
    Var push(Tensor v, const char* op, BackFn back) {
        nodes_.push_back(Node{std::move(v), op, std::move(back)});
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    Tensor& slot(Var v);

    std::vector<Node> nodes_;
    std::map<std::string, Var> param_vars_;

    // Scratch for the active backward pass.
    std::vector<Tensor> grads_;
    std::vector<char> has_;
    std::vector<int> touched_;
};

} // namespace neusim::ad
