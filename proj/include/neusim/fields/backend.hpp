#pragma once

#include "neusim/core/types.hpp"
#include "neusim/fields/scene_model.hpp"

#include <functional>
#include <memory>

namespace neusim::fields {

// Uniform query surface over a learned SceneModel or closed-form fields, so
// renderer/extractor code and oracle tests share one code path. Batched
// queries take one point per row. Frames are 1-based.
class FieldBackend {
public:
    virtual ~FieldBackend() = default;
    virtual int frame_count() const = 0;
    virtual double sharpness() const = 0;  // rendering sigmoid sharpness h
    virtual VecX sdf(const MatX& P) const = 0;
    virtual MatX color(const MatX& P) const = 0;
    virtual VecX rigidity(const MatX& P) const = 0;
    virtual MatX raw_offset(int frame, const MatX& P) const = 0;

    MatX gated_offset(int frame, const MatX& P) const {
        return rigidity(P).asDiagonal() * raw_offset(frame, P);
    }
    MatX bend_point(int frame, const MatX& P) const { return P + gated_offset(frame, P); }

    double sdf_at(const Vec3& p) const { return sdf(MatX(p.transpose()))(0); }
    Vec3 color_at(const Vec3& p) const { return color(MatX(p.transpose())).row(0); }
    double rigidity_at(const Vec3& p) const { return rigidity(MatX(p.transpose()))(0); }
    Vec3 raw_offset_at(int frame, const Vec3& p) const {
        return raw_offset(frame, MatX(p.transpose())).row(0);
    }
    Vec3 gated_offset_at(int frame, const Vec3& p) const {
        return gated_offset(frame, MatX(p.transpose())).row(0);
    }
    Vec3 bend_point_at(int frame, const Vec3& p) const {
        return bend_point(frame, MatX(p.transpose())).row(0);
    }

protected:
    void check_frame(int frame) const {
        if (frame < 1 || frame > frame_count())
            throw std::invalid_argument("backend: frame " + std::to_string(frame) +
                                        " out of range [1, " + std::to_string(frame_count()) + "]");
    }
};

class LearnedBackend final : public FieldBackend {
public:
    explicit LearnedBackend(const SceneModel& model) : model_(model) {}
    int frame_count() const override { return model_.frame_count(); }
    double sharpness() const override { return model_.sharpness(); }
    VecX sdf(const MatX& P) const override { return model_.sdf(P); }
    MatX color(const MatX& P) const override { return model_.color(P); }
    VecX rigidity(const MatX& P) const override { return model_.rigidity(P); }
    MatX raw_offset(int frame, const MatX& P) const override {
        return model_.raw_offset(frame, P);
    }
    const SceneModel& model() const { return model_; }

private:
    const SceneModel& model_;
};

// Closed-form fields for oracle tests and synthetic ground truth.
struct AnalyticFields {
    int n_frames = 1;
    double sharpness = 200.0;
    std::function<double(const Vec3&)> sdf;
    std::function<Vec3(const Vec3&)> color;
    std::function<double(const Vec3&)> rigidity;
    std::function<Vec3(int, const Vec3&)> offset;  // raw (ungated) offset
};

class AnalyticBackend final : public FieldBackend {
public:
    explicit AnalyticBackend(AnalyticFields f) : f_(std::move(f)) {
        require(static_cast<bool>(f_.sdf) && static_cast<bool>(f_.color) &&
                    static_cast<bool>(f_.rigidity) && static_cast<bool>(f_.offset),
                "analytic backend: all four fields must be given");
    }
    int frame_count() const override { return f_.n_frames; }
    double sharpness() const override { return f_.sharpness; }
    VecX sdf(const MatX& P) const override {
        VecX out(P.rows());
        for (Eigen::Index i = 0; i < P.rows(); ++i) out(i) = f_.sdf(P.row(i));
        return out;
    }
    MatX color(const MatX& P) const override {
        MatX out(P.rows(), 3);
        for (Eigen::Index i = 0; i < P.rows(); ++i) out.row(i) = f_.color(P.row(i)).transpose();
        return out;
    }
    VecX rigidity(const MatX& P) const override {
        VecX out(P.rows());
        for (Eigen::Index i = 0; i < P.rows(); ++i) out(i) = f_.rigidity(P.row(i));
        return out;
    }
    MatX raw_offset(int frame, const MatX& P) const override {
        check_frame(frame);
        MatX out(P.rows(), 3);
        for (Eigen::Index i = 0; i < P.rows(); ++i)
            out.row(i) = f_.offset(frame, P.row(i)).transpose();
        return out;
    }

private:
    AnalyticFields f_;
};

// ---- closed-form building blocks ----
namespace analytic {

inline double sphere_sdf(const Vec3& p, const Vec3& center, double radius) {
    return (p - center).norm() - radius;
}

// Exact SDF of an axis-aligned box with half-extents `half` around `center`.
inline double box_sdf(const Vec3& p, const Vec3& center, const Vec3& half) {
    Vec3 q = (p - center).cwiseAbs() - half;
    double outside = q.cwiseMax(0.0).norm();
    double inside = std::min(q.maxCoeff(), 0.0);
    return outside + inside;
}

inline Vec3 checkerboard(const Vec3& p, double cell, const Vec3& a, const Vec3& b) {
    auto idx = [cell](double x) { return static_cast<long long>(std::floor(x / cell)); };
    bool odd = ((idx(p.x()) + idx(p.y()) + idx(p.z())) & 1) != 0;
    return odd ? b : a;
}

} // namespace analytic

} // namespace neusim::fields
