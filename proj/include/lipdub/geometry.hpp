#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "lipdub/affine.hpp"
#include "lipdub/error.hpp"
#include "lipdub/image.hpp"
#include "lipdub/landmarks.hpp"

namespace lipdub {

// Fixed crop-space coordinates for the four alignment landmarks. Eyes sit
// symmetric about the center column; the face gets room below for the mouth.
struct FaceTemplate {
    Vec2 left_eye{96.0, 128.0};
    Vec2 right_eye{160.0, 128.0};
    Vec2 eye_midpoint{128.0, 128.0};
    Vec2 nose_bridge_mid{128.0, 160.0};

    std::array<std::pair<std::string, Vec2>, 4> points() const {
        return {{{"left_eye", left_eye},
                 {"right_eye", right_eye},
                 {"eye_midpoint", eye_midpoint},
                 {"nose_bridge_mid", nose_bridge_mid}}};
    }
};

// Least-squares affine sending frame_pts onto template_pts.
inline AffineTransform estimate_affine(const std::vector<Vec2>& frame_pts,
                                       const std::vector<Vec2>& template_pts) {
    const size_t n = frame_pts.size();
    if (n != template_pts.size())
        throw ValidationError("estimate_affine: point lists differ in length");
    if (n < 3) throw DegenerateInput("estimate_affine: need at least 3 point pairs");

    double scale = 0.0;
    for (size_t i = 1; i < n; ++i)
        scale = std::max(scale, norm(frame_pts[i] - frame_pts[0]));
    double max_cross = 0.0;
    for (size_t i = 1; i < n; ++i)
        for (size_t j = i + 1; j < n; ++j)
            max_cross = std::max(
                max_cross, std::abs(cross(frame_pts[i] - frame_pts[0], frame_pts[j] - frame_pts[0])));
    if (scale == 0.0 || max_cross <= 1e-9 * scale * scale)
        throw DegenerateInput("estimate_affine: collinear point configuration");

    Eigen::MatrixXd A(n, 3);
    Eigen::VectorXd bx(n), by(n);
    for (size_t i = 0; i < n; ++i) {
        A(i, 0) = frame_pts[i].x;
        A(i, 1) = frame_pts[i].y;
        A(i, 2) = 1.0;
        bx(i) = template_pts[i].x;
        by(i) = template_pts[i].y;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    Eigen::Vector3d rx = qr.solve(bx);
    Eigen::Vector3d ry = qr.solve(by);

    AffineTransform t;
    t.m = {rx(0), rx(1), rx(2), ry(0), ry(1), ry(2)};
    t.validate();
    return t;
}

// Nearest scale-rotation: R = U V^T with det correction, s = mean singular value.
inline AffineTransform orthogonalize_procrustes(const AffineTransform& t) {
    t.validate();
    Eigen::Matrix2d M;
    M << t.a(), t.b(), t.c(), t.d();
    Eigen::JacobiSVD<Eigen::Matrix2d> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix2d U = svd.matrixU();
    Eigen::Matrix2d V = svd.matrixV();
    double s = 0.5 * (svd.singularValues()(0) + svd.singularValues()(1));
    Eigen::Matrix2d D = Eigen::Matrix2d::Identity();
    if ((U * V.transpose()).determinant() < 0.0) D(1, 1) = -1.0;
    Eigen::Matrix2d R = U * D * V.transpose();
    Eigen::Matrix2d SR = s * R;

    AffineTransform out;
    out.m = {SR(0, 0), SR(0, 1), t.tx(), SR(1, 0), SR(1, 1), t.ty()};
    out.validate();
    return out;
}

inline AffineTransform invert_affine(const AffineTransform& t) {
    t.validate();
    const double det = t.det();
    AffineTransform inv;
    inv.m = {t.d() / det,  -t.b() / det, (t.b() * t.ty() - t.d() * t.tx()) / det,
             -t.c() / det, t.a() / det,  (t.c() * t.tx() - t.a() * t.ty()) / det};
    return inv;
}

inline AffineTransform compose_affine(const AffineTransform& outer, const AffineTransform& inner) {
    AffineTransform r;
    r.m = {outer.a() * inner.a() + outer.b() * inner.c(),
           outer.a() * inner.b() + outer.b() * inner.d(),
           outer.a() * inner.tx() + outer.b() * inner.ty() + outer.tx(),
           outer.c() * inner.a() + outer.d() * inner.c(),
           outer.c() * inner.b() + outer.d() * inner.d(),
           outer.c() * inner.tx() + outer.d() * inner.ty() + outer.ty()};
    return r;
}

namespace detail {

// Catmull-Rom weights (bicubic, a = -0.5).
inline std::array<double, 4> catmull_rom_weights(double f) {
    constexpr double a = -0.5;
    std::array<double, 4> w;
    const double t0 = 1.0 + f, t1 = f, t2 = 1.0 - f, t3 = 2.0 - f;
    w[0] = a * t0 * t0 * t0 - 5.0 * a * t0 * t0 + 8.0 * a * t0 - 4.0 * a;
    w[1] = (a + 2.0) * t1 * t1 * t1 - (a + 3.0) * t1 * t1 + 1.0;
    w[2] = (a + 2.0) * t2 * t2 * t2 - (a + 3.0) * t2 * t2 + 1.0;
    w[3] = a * t3 * t3 * t3 - 5.0 * a * t3 * t3 + 8.0 * a * t3 - 4.0 * a;
    return w;
}

inline int clamp_index(int v, int n) { return v < 0 ? 0 : (v >= n ? n - 1 : v); }

inline double sample_bicubic(const ImageBuf& src, double x, double y, int c) {
    const int ix = static_cast<int>(std::floor(x));
    const int iy = static_cast<int>(std::floor(y));
    const auto wx = catmull_rom_weights(x - ix);
    const auto wy = catmull_rom_weights(y - iy);
    double acc = 0.0;
    for (int j = 0; j < 4; ++j) {
        const int yy = clamp_index(iy - 1 + j, src.height);
        double row = 0.0;
        for (int i = 0; i < 4; ++i) {
            const int xx = clamp_index(ix - 1 + i, src.width);
            row += wx[i] * src.at(yy, xx, c);
        }
        acc += wy[j] * row;
    }
    return acc;
}

}  // namespace detail

// Resample src so that out(x, y) = src(t^-1 (x, y)), edge-clamped, Catmull-Rom.
inline ImageBuf warp_bicubic(const ImageBuf& src, const AffineTransform& t, int out_h, int out_w) {
    if (src.empty()) throw ValidationError("warp_bicubic: empty source image");
    t.validate();
    const AffineTransform inv = invert_affine(t);
    ImageBuf out = ImageBuf::make(out_h, out_w, src.channels);
    for (int y = 0; y < out_h; ++y) {
        for (int x = 0; x < out_w; ++x) {
            const Vec2 p = inv.apply({static_cast<double>(x), static_cast<double>(y)});
            for (int c = 0; c < src.channels; ++c)
                out.at(y, x, c) = clamp01(detail::sample_bicubic(src, p.x, p.y, c));
        }
    }
    return out;
}

// Per-coordinate temporal convolution with a truncated normalized Gaussian.
inline std::vector<LandmarkSet> smooth_landmarks(const std::vector<LandmarkSet>& tracks,
                                                 double sigma) {
    if (tracks.empty()) throw ValidationError("smooth_landmarks: empty sequence");
    if (!(sigma > 0.0)) throw ValidationError("smooth_landmarks: sigma must be positive");
    for (const auto& lm : tracks)
        if (lm.points.size() != tracks[0].points.size())
            throw ValidationError("smooth_landmarks: frames disagree on landmark names");

    const int n = static_cast<int>(tracks.size());
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(2 * radius + 1);
    for (int k = -radius; k <= radius; ++k)
        kernel[k + radius] = std::exp(-0.5 * (k * k) / (sigma * sigma));

    std::vector<LandmarkSet> out(tracks.begin(), tracks.end());
    for (const auto& [name, unused] : tracks[0].points) {
        for (int i = 0; i < n; ++i) {
            double wsum = 0.0;
            Vec2 acc{0.0, 0.0};
            for (int k = -radius; k <= radius; ++k) {
                const int j = i + k;
                if (j < 0 || j >= n) continue;  // renormalize at boundaries
                const double w = kernel[k + radius];
                acc = acc + w * tracks[j].get(name);
                wsum += w;
            }
            out[i].set(name, (1.0 / wsum) * acc);
        }
    }
    return out;
}

// Canonical crop: transform computed from the four alignment landmarks only,
// orthogonalized to scale-rotation, then a bicubic warp to 256x256. Every
// landmark (not just the alignment four) is mapped into crop space.
inline std::tuple<ImageBuf, AffineTransform, LandmarkSet> canonicalize_crop(
    const ImageBuf& frame, const LandmarkSet& lm, int crop_size = 256,
    const FaceTemplate& tmpl = FaceTemplate{}) {
    std::vector<Vec2> frame_pts, template_pts;
    for (const auto& [name, tpos] : tmpl.points()) {
        if (!lm.has(name))
            throw ValidationError("canonicalize_crop: missing alignment landmark '" + name + "'");
        frame_pts.push_back(lm.get(name));
        template_pts.push_back(tpos);
    }
    AffineTransform t = orthogonalize_procrustes(estimate_affine(frame_pts, template_pts));
    ImageBuf crop = warp_bicubic(frame, t, crop_size, crop_size);
    LandmarkSet crop_lm;
    crop_lm.coordinate_space = CoordSpace::crop;
    for (const auto& [name, p] : lm.points) crop_lm.set(name, t.apply(p));
    return {std::move(crop), t, std::move(crop_lm)};
}

}  // namespace lipdub
