#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "lipdub/error.hpp"
#include "lipdub/image.hpp"
#include "lipdub/landmarks.hpp"

namespace lipdub {

// Axis-aligned mask in normalized crop coordinates.
struct RectMask {
    double x1 = 0.08;
    double y1 = 0.28;
    double x2 = 0.92;
    double y2 = 0.95;

    void validate() const {
        for (double v : {x1, y1, x2, y2})
            if (!std::isfinite(v) || v < 0.0 || v > 1.0)
                throw ValidationError("RectMask: coordinates must lie in [0,1]");
        if (!(x1 < x2) || !(y1 < y2)) throw ValidationError("RectMask: requires x1 < x2, y1 < y2");
    }
};

struct RectPixelBounds {
    int x0, x1, y0, y1;  // half-open pixel ranges

    bool contains(Vec2 p) const { return p.x >= x0 && p.x < x1 && p.y >= y0 && p.y < y1; }
    long long area() const { return static_cast<long long>(x1 - x0) * (y1 - y0); }
};

// Floor on the min edges, ceil on the max edges: the pixel region never
// undershoots the stated normalized rectangle.
inline RectPixelBounds rect_pixel_bounds(const RectMask& m, int height, int width) {
    m.validate();
    RectPixelBounds b;
    b.x0 = static_cast<int>(std::floor(m.x1 * width));
    b.x1 = std::min(width, static_cast<int>(std::ceil(m.x2 * width)));
    b.y0 = static_cast<int>(std::floor(m.y1 * height));
    b.y1 = std::min(height, static_cast<int>(std::ceil(m.y2 * height)));
    return b;
}

// Zero inside the rectangle, untouched elsewhere.
inline ImageBuf apply_rect_mask(const ImageBuf& frame, const RectMask& m) {
    const RectPixelBounds b = rect_pixel_bounds(m, frame.height, frame.width);
    ImageBuf out = frame;
    for (int y = b.y0; y < b.y1; ++y)
        for (int x = b.x0; x < b.x1; ++x)
            for (int c = 0; c < out.channels; ++c) out.at(y, x, c) = 0.0;
    return out;
}

// Complement: keep the rectangle, zero everything else.
inline ImageBuf apply_reference_mask(const ImageBuf& frame, const RectMask& m) {
    const RectPixelBounds b = rect_pixel_bounds(m, frame.height, frame.width);
    ImageBuf out = ImageBuf::make(frame.height, frame.width, frame.channels);
    for (int y = b.y0; y < b.y1; ++y)
        for (int x = b.x0; x < b.x1; ++x)
            for (int c = 0; c < frame.channels; ++c) out.at(y, x, c) = frame.at(y, x, c);
    return out;
}

struct PolyMask {
    std::vector<Vec2> vertices;  // convex, counter-clockwise in image coordinates
    double chin_shift = 0.0;

    void validate() const {
        if (vertices.size() < 3) throw ValidationError("PolyMask: fewer than 3 vertices");
        const size_t n = vertices.size();
        for (size_t i = 0; i < n; ++i) {
            const Vec2 a = vertices[i], b = vertices[(i + 1) % n], c = vertices[(i + 2) % n];
            if (cross(b - a, c - b) < 0.0)
                throw ValidationError("PolyMask: vertices are not convex counter-clockwise");
        }
    }
};

namespace detail {

// Monotone-chain convex hull; counter-clockwise with y pointing down means
// we keep right turns of the standard orientation test.
inline std::vector<Vec2> convex_hull(std::vector<Vec2> pts) {
    std::sort(pts.begin(), pts.end(), [](Vec2 a, Vec2 b) {
        return a.x < b.x || (a.x == b.x && a.y < b.y);
    });
    pts.erase(std::unique(pts.begin(), pts.end(),
                          [](Vec2 a, Vec2 b) { return a.x == b.x && a.y == b.y; }),
              pts.end());
    const size_t n = pts.size();
    if (n < 3) throw DegenerateInput("degenerate_polygon: fewer than 3 distinct points");
    std::vector<Vec2> hull(2 * n);
    size_t k = 0;
    for (size_t i = 0; i < n; ++i) {
        while (k >= 2 && cross(hull[k - 1] - hull[k - 2], pts[i] - hull[k - 2]) <= 0.0) --k;
        hull[k++] = pts[i];
    }
    const size_t lower = k + 1;
    for (size_t i = n - 1; i-- > 0;) {
        while (k >= lower && cross(hull[k - 1] - hull[k - 2], pts[i] - hull[k - 2]) <= 0.0) --k;
        hull[k++] = pts[i];
    }
    hull.resize(k - 1);
    if (hull.size() < 3) throw DegenerateInput("degenerate_polygon: points are collinear");
    return hull;
}

inline bool point_in_convex(const std::vector<Vec2>& poly, Vec2 p) {
    const size_t n = poly.size();
    for (size_t i = 0; i < n; ++i) {
        const Vec2 a = poly[i], b = poly[(i + 1) % n];
        if (cross(b - a, p - a) < 0.0) return false;  // boundary counts as inside
    }
    return true;
}

// Gaussian mass per pixel cell, truncated at 3*sigma. Integrated (not point
// sampled) taps make a blurred straight edge reproduce the Gaussian CDF to
// well under 1e-3, and the finite support keeps feathered pastes from
// touching anything beyond ceil(3*sigma).
inline std::vector<double> gaussian_kernel(double sigma) {
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    const auto cdf = [sigma](double z) { return 0.5 * std::erfc(-z / (sigma * std::sqrt(2.0))); };
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = cdf(i + 0.5) - cdf(i - 0.5);
        sum += k[i + radius];
    }
    for (double& v : k) v /= sum;
    return k;
}

// Separable Gaussian blur with zero padding outside the image.
inline ImageBuf gaussian_blur_zero_pad(const ImageBuf& img, double sigma) {
    if (sigma <= 0.0) return img;
    const auto k = gaussian_kernel(sigma);
    const int radius = (static_cast<int>(k.size()) - 1) / 2;
    ImageBuf tmp = ImageBuf::make(img.height, img.width, img.channels);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i) {
                    const int xx = x + i;
                    if (xx < 0 || xx >= img.width) continue;
                    acc += k[i + radius] * img.at(y, xx, c);
                }
                tmp.at(y, x, c) = acc;
            }
    ImageBuf out = ImageBuf::make(img.height, img.width, img.channels);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i) {
                    const int yy = y + i;
                    if (yy < 0 || yy >= img.height) continue;
                    acc += k[i + radius] * img.at(yy, x, c);
                }
                out.at(y, x, c) = acc;
            }
    return out;
}

}  // namespace detail

// Convex hull of ears, the point halfway up the nose, the nose tip, and the
// three chin points shifted downward so the mouth can open wider.
inline PolyMask build_face_polygon(const LandmarkSet& lm, double chin_shift) {
    for (const char* name : {"left_ear", "right_ear", "nose_tip", "nose_bridge_mid", "chin_left",
                             "chin_center", "chin_right"})
        if (!lm.has(name)) throw ValidationError(std::string("build_face_polygon: missing '") + name + "'");
    const Vec2 mid_nose = 0.5 * (lm.get("nose_bridge_mid") + lm.get("nose_tip"));
    const Vec2 shift{0.0, chin_shift};
    std::vector<Vec2> pts = {lm.get("left_ear"),
                             lm.get("right_ear"),
                             mid_nose,
                             lm.get("nose_tip"),
                             lm.get("chin_left") + shift,
                             lm.get("chin_center") + shift,
                             lm.get("chin_right") + shift};
    PolyMask poly;
    poly.vertices = detail::convex_hull(std::move(pts));
    poly.chin_shift = chin_shift;
    poly.validate();
    return poly;
}

// Binary fill of the polygon blurred by a normalized Gaussian; sigma 0 keeps
// the hard edge. Zero padding lets the mask fade at image borders.
inline ImageBuf rasterize_feathered(const PolyMask& poly, int height, int width,
                                    double blur_sigma) {
    poly.validate();
    if (blur_sigma < 0.0) throw ValidationError("rasterize_feathered: sigma must be >= 0");
    ImageBuf fill = ImageBuf::make(height, width, 1);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            fill.at(y, x) = detail::point_in_convex(poly.vertices,
                                                    {static_cast<double>(x), static_cast<double>(y)})
                                ? 1.0
                                : 0.0;
    if (blur_sigma == 0.0) return fill;
    return detail::gaussian_blur_zero_pad(fill, blur_sigma);
}

// m*a + (1-m)*b with a single-channel weight mask; the differentiable
// composite fed to the reconstruction loss.
inline ImageBuf composite(const ImageBuf& a, const ImageBuf& b, const ImageBuf& m) {
    if (!a.same_shape(b)) throw ValidationError("composite: image shapes differ");
    if (m.channels != 1 || m.height != a.height || m.width != a.width)
        throw ValidationError("composite: mask must be single-channel with matching dims");
    ImageBuf out = ImageBuf::make(a.height, a.width, a.channels);
    for (int y = 0; y < a.height; ++y)
        for (int x = 0; x < a.width; ++x) {
            const double w = m.at(y, x);
            for (int c = 0; c < a.channels; ++c)
                out.at(y, x, c) = clamp01(w * a.at(y, x, c) + (1.0 - w) * b.at(y, x, c));
        }
    return out;
}

// Channel-2 helper for the leak audit: the rectangle must cover every
// mouth/jaw landmark and a minimum fraction of the crop.
inline bool rect_mask_covers(const RectMask& m, const LandmarkSet& lm, int height, int width,
                             double min_area_fraction) {
    const RectPixelBounds b = rect_pixel_bounds(m, height, width);
    const double fraction =
        static_cast<double>(b.area()) / (static_cast<double>(height) * width);
    if (fraction < min_area_fraction) return false;
    for (const auto& name : landmark_names::mouth_jaw())
        if (!b.contains(lm.get(name))) return false;
    return true;
}

}  // namespace lipdub
