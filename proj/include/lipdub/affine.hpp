#pragma once

#include <array>
#include <cmath>

#include "lipdub/error.hpp"
#include "lipdub/image.hpp"

namespace lipdub {

// 2x3 affine map, row major: (x,y) -> (a*x + b*y + tx, c*x + d*y + ty).
// Stored as {a, b, tx, c, d, ty}.
struct AffineTransform {
    std::array<double, 6> m{1, 0, 0, 0, 1, 0};

    static AffineTransform identity() { return {}; }

    double a() const { return m[0]; }
    double b() const { return m[1]; }
    double tx() const { return m[2]; }
    double c() const { return m[3]; }
    double d() const { return m[4]; }
    double ty() const { return m[5]; }

    double det() const { return m[0] * m[4] - m[1] * m[3]; }

    Vec2 apply(Vec2 p) const {
        return {m[0] * p.x + m[1] * p.y + m[2], m[3] * p.x + m[4] * p.y + m[5]};
    }

    void validate() const {
        for (double v : m)
            if (!std::isfinite(v)) throw ValidationError("AffineTransform: non-finite entry");
        if (det() == 0.0) throw ValidationError("AffineTransform: linear part is singular");
    }

    // True when the linear part is scale*rotation within `tol`
    // (M^T M = s^2 I and positive determinant).
    bool is_procrustes(double tol = 1e-6) const {
        const double g00 = m[0] * m[0] + m[3] * m[3];
        const double g11 = m[1] * m[1] + m[4] * m[4];
        const double g01 = m[0] * m[1] + m[3] * m[4];
        return std::abs(g00 - g11) <= tol && std::abs(g01) <= tol && det() > 0.0;
    }
};

inline bool operator==(const AffineTransform& a, const AffineTransform& b) { return a.m == b.m; }

}  // namespace lipdub
