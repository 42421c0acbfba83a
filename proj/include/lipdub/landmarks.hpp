#pragma once

#include <array>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "lipdub/error.hpp"
#include "lipdub/image.hpp"

namespace lipdub {

enum class CoordSpace { frame, crop };

inline const char* to_string(CoordSpace s) { return s == CoordSpace::frame ? "frame" : "crop"; }

namespace landmark_names {

// The four landmarks the crop transform is allowed to read.
inline const std::array<std::string, 4>& alignment() {
    static const std::array<std::string, 4> names = {
        "left_eye", "right_eye", "eye_midpoint", "nose_bridge_mid"};
    return names;
}

// The 13 mouth/jaw points, in canonical order. These are exactly the
// regression targets of the landmark loss and the features used for
// reference selection.
inline const std::array<std::string, 13>& mouth_jaw() {
    static const std::array<std::string, 13> names = {
        "mouth_left",         "mouth_right",         "upper_lip_left",
        "upper_lip_mid",      "upper_lip_right",     "lower_lip_left",
        "lower_lip_mid",      "lower_lip_right",     "inner_upper_lip_mid",
        "inner_lower_lip_mid", "jaw_left",           "jaw_mid",
        "jaw_right"};
    return names;
}

// Every name a full landmark set carries: alignment + face outline + mouth/jaw.
inline const std::vector<std::string>& all() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> v(alignment().begin(), alignment().end());
        v.insert(v.end(), {"nose_tip", "left_ear", "right_ear",
                           "chin_left", "chin_center", "chin_right"});
        v.insert(v.end(), mouth_jaw().begin(), mouth_jaw().end());
        return v;
    }();
    return names;
}

}  // namespace landmark_names

// Named 2D facial landmarks. std::map keeps serialization order stable.
struct LandmarkSet {
    std::map<std::string, Vec2> points;
    CoordSpace coordinate_space = CoordSpace::frame;

    bool has(const std::string& name) const { return points.count(name) != 0; }

    Vec2 get(const std::string& name) const {
        auto it = points.find(name);
        if (it == points.end()) throw ValidationError("LandmarkSet: missing landmark '" + name + "'");
        return it->second;
    }

    void set(const std::string& name, Vec2 p) { points[name] = p; }

    void validate() const {
        for (const auto& [name, p] : points)
            if (!std::isfinite(p.x) || !std::isfinite(p.y))
                throw ValidationError("LandmarkSet: landmark '" + name + "' has non-finite coordinates");
    }
};

// The 13 mouth/jaw coordinates in canonical order; throws if any is missing.
inline std::array<Vec2, 13> mouth_jaw_coords(const LandmarkSet& lm) {
    std::array<Vec2, 13> out;
    size_t i = 0;
    for (const auto& name : landmark_names::mouth_jaw()) out[i++] = lm.get(name);
    return out;
}

inline double eye_distance(const LandmarkSet& lm) {
    return norm(lm.get("right_eye") - lm.get("left_eye"));
}

}  // namespace lipdub
