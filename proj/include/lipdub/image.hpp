#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "lipdub/error.hpp"

namespace lipdub {

inline double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

// H x W x C raster, components in [0,1], row-major: data[(y*W + x)*C + c].
struct ImageBuf {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<double> data;

    static ImageBuf make(int h, int w, int c, double fill = 0.0) {
        if (h <= 0 || w <= 0 || (c != 1 && c != 3))
            throw ValidationError("ImageBuf: dimensions must be positive and channels 1 or 3");
        ImageBuf img;
        img.height = h;
        img.width = w;
        img.channels = c;
        img.data.assign(static_cast<size_t>(h) * w * c, fill);
        return img;
    }

    bool empty() const { return data.empty(); }
    size_t size() const { return data.size(); }

    double& at(int y, int x, int c = 0) {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    double at(int y, int x, int c = 0) const {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }

    bool same_shape(const ImageBuf& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }

    // Throws ValidationError naming the violated invariant.
    void validate() const {
        if (channels != 1 && channels != 3)
            throw ValidationError("ImageBuf: channels must be 1 or 3");
        if (height <= 0 || width <= 0)
            throw ValidationError("ImageBuf: height and width must be positive");
        if (data.size() != static_cast<size_t>(height) * width * channels)
            throw ValidationError("ImageBuf: data length != height*width*channels");
        for (double v : data) {
            if (!std::isfinite(v)) throw ValidationError("ImageBuf: component is not finite");
            if (v < 0.0 || v > 1.0) throw ValidationError("ImageBuf: component outside [0,1]");
        }
    }
};

// Channel mean per pixel. Single-channel images pass through unchanged.
inline ImageBuf to_gray(const ImageBuf& img) {
    if (img.channels == 1) return img;
    ImageBuf out = ImageBuf::make(img.height, img.width, 1);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            double s = 0.0;
            for (int c = 0; c < img.channels; ++c) s += img.at(y, x, c);
            out.at(y, x) = s / img.channels;
        }
    return out;
}

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::sqrt(a.x * a.x + a.y * a.y); }

}  // namespace lipdub
