#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "lipdub/error.hpp"
#include "lipdub/image.hpp"
#include "lipdub/io/bundle.hpp"
#include "lipdub/landmarks.hpp"

namespace lipdub {

// Procedural talking-head fixture: an ellipse face with exact ground-truth
// landmarks, rigid per-frame motion, and a mouth whose opening drives the
// audio RMS envelope. Everything is band-limited so warp round trips stay
// clean.
namespace fixture {

constexpr int kFrameSize = 320;
constexpr double kSoftEdgePx = 3.0;

struct MotionParams {
    double env_freq, env_phase;
    double drift_fx, drift_fy, drift_px, drift_py;
    double rot_freq, rot_phase;
    double scale_freq, scale_phase;
    double carrier_p1, carrier_p2;
};

inline MotionParams motion_params(uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * M_PI);
    MotionParams p;
    p.env_freq = 0.5 + 0.4 * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    p.env_phase = phase(rng);
    p.drift_fx = 0.23;
    p.drift_fy = 0.31;
    p.drift_px = phase(rng);
    p.drift_py = phase(rng);
    p.rot_freq = 0.17;
    p.rot_phase = phase(rng);
    p.scale_freq = 0.13;
    p.scale_phase = phase(rng);
    p.carrier_p1 = phase(rng);
    p.carrier_p2 = phase(rng);
    return p;
}

// Mouth-opening envelope in [0.2, 1].
inline double envelope(const MotionParams& p, double t) {
    return 0.2 + 0.8 * (0.5 + 0.5 * std::sin(2.0 * M_PI * p.env_freq * t + p.env_phase));
}

struct FramePose {
    Vec2 center;
    double scale;
    double angle;

    Vec2 to_frame(Vec2 local) const {
        const double c = std::cos(angle), s = std::sin(angle);
        return {center.x + scale * (c * local.x - s * local.y),
                center.y + scale * (s * local.x + c * local.y)};
    }

    Vec2 to_local(Vec2 frame) const {
        const double c = std::cos(angle), s = std::sin(angle);
        const Vec2 d = {(frame.x - center.x) / scale, (frame.y - center.y) / scale};
        return {c * d.x + s * d.y, -s * d.x + c * d.y};
    }
};

inline FramePose pose_at(const MotionParams& p, double t) {
    FramePose pose;
    pose.center = {160.0 + 6.0 * std::sin(2.0 * M_PI * p.drift_fx * t + p.drift_px),
                   150.0 + 5.0 * std::sin(2.0 * M_PI * p.drift_fy * t + p.drift_py)};
    pose.angle = 0.07 * std::sin(2.0 * M_PI * p.rot_freq * t + p.rot_phase);
    pose.scale = 1.0 + 0.05 * std::sin(2.0 * M_PI * p.scale_freq * t + p.scale_phase);
    return pose;
}

// Face-local landmark layout; the mouth gap g spreads the lip points.
inline LandmarkSet local_landmarks(double g) {
    LandmarkSet lm;
    lm.coordinate_space = CoordSpace::frame;  // caller maps to frame space
    lm.set("left_eye", {-45.0, -20.0});
    lm.set("right_eye", {45.0, -20.0});
    lm.set("eye_midpoint", {0.0, -20.0});
    lm.set("nose_bridge_mid", {0.0, 25.0});
    lm.set("nose_tip", {0.0, 52.0});
    lm.set("left_ear", {-78.0, 5.0});
    lm.set("right_ear", {78.0, 5.0});
    lm.set("chin_left", {-40.0, 112.0});
    lm.set("chin_center", {0.0, 125.0});
    lm.set("chin_right", {40.0, 112.0});
    lm.set("mouth_left", {-30.0, 85.0});
    lm.set("mouth_right", {30.0, 85.0});
    lm.set("upper_lip_left", {-15.0, 80.0 - 0.5 * g});
    lm.set("upper_lip_mid", {0.0, 78.0 - 0.5 * g});
    lm.set("upper_lip_right", {15.0, 80.0 - 0.5 * g});
    lm.set("lower_lip_left", {-15.0, 90.0 + 0.5 * g});
    lm.set("lower_lip_mid", {0.0, 92.0 + 0.5 * g});
    lm.set("lower_lip_right", {15.0, 90.0 + 0.5 * g});
    lm.set("inner_upper_lip_mid", {0.0, 85.0 - 0.5 * g});
    lm.set("inner_lower_lip_mid", {0.0, 85.0 + 0.5 * g});
    lm.set("jaw_left", {-55.0, 95.0});
    lm.set("jaw_mid", {0.0, 115.0 + 0.5 * g});
    lm.set("jaw_right", {55.0, 95.0});
    return lm;
}

namespace detail {

inline double smoothstep(double e0, double e1, double x) {
    const double t = clamp01((x - e0) / (e1 - e0));
    return t * t * (3.0 - 2.0 * t);
}

// Soft coverage of an axis-aligned ellipse in face-local coordinates.
inline double ellipse_alpha(Vec2 p, Vec2 center, double a, double b, double soft = kSoftEdgePx) {
    const double nx = (p.x - center.x) / a;
    const double ny = (p.y - center.y) / b;
    const double rho = std::sqrt(nx * nx + ny * ny);
    const double r_mean = 0.5 * (a + b);
    return 1.0 - smoothstep(-soft, soft, (rho - 1.0) * r_mean);
}

struct Rgb {
    double r, g, b;
};

inline Rgb mix(Rgb base, Rgb over, double alpha) {
    return {base.r + (over.r - base.r) * alpha, base.g + (over.g - base.g) * alpha,
            base.b + (over.b - base.b) * alpha};
}

}  // namespace detail

inline ImageBuf render_frame(const FramePose& pose, double g) {
    using detail::ellipse_alpha;
    using detail::mix;
    using detail::Rgb;
    ImageBuf img = ImageBuf::make(kFrameSize, kFrameSize, 3);
    for (int y = 0; y < kFrameSize; ++y) {
        for (int x = 0; x < kFrameSize; ++x) {
            const Vec2 p = pose.to_local({static_cast<double>(x), static_cast<double>(y)});
            // background gradient
            Rgb col{0.18 + 0.10 * y / kFrameSize, 0.22 + 0.08 * y / kFrameSize, 0.35};
            // head with gentle low-frequency texture
            const double skin_tex = 0.02 * std::sin(0.11 * p.x) * std::sin(0.09 * p.y);
            col = mix(col, {0.85 + skin_tex, 0.70 + skin_tex, 0.60 + skin_tex},
                      ellipse_alpha(p, {0.0, 40.0}, 85.0, 112.0));
            // nose
            col = mix(col, {0.78, 0.62, 0.52}, ellipse_alpha(p, {0.0, 45.0}, 10.0, 16.0));
            // eyes and pupils
            col = mix(col, {0.95, 0.95, 0.95}, ellipse_alpha(p, {-45.0, -20.0}, 13.0, 8.0));
            col = mix(col, {0.95, 0.95, 0.95}, ellipse_alpha(p, {45.0, -20.0}, 13.0, 8.0));
            col = mix(col, {0.25, 0.18, 0.12}, ellipse_alpha(p, {-45.0, -20.0}, 5.0, 5.0));
            col = mix(col, {0.25, 0.18, 0.12}, ellipse_alpha(p, {45.0, -20.0}, 5.0, 5.0));
            // lips around the mouth opening
            col = mix(col, {0.62, 0.30, 0.28}, ellipse_alpha(p, {0.0, 85.0}, 32.0, 0.5 * g + 7.0));
            // mouth interior follows the gap
            col = mix(col, {0.22, 0.07, 0.07}, ellipse_alpha(p, {0.0, 85.0}, 26.0, 0.5 * g + 2.0));
            img.at(y, x, 0) = clamp01(col.r);
            img.at(y, x, 1) = clamp01(col.g);
            img.at(y, x, 2) = clamp01(col.b);
        }
    }
    return img;
}

}  // namespace fixture

inline TrackBundle generate_fixture(uint64_t seed, int n_frames, double fps = 25.0) {
    if (n_frames < 15) throw ValidationError("generate_fixture: need at least 15 frames");
    if (!(fps >= 23.0 && fps <= 30.0))
        throw ValidationError("generate_fixture: fps must lie in [23, 30]");
    const fixture::MotionParams mp = fixture::motion_params(seed);

    TrackBundle tb;
    tb.fps = fps;
    tb.language = "synthetic";
    tb.frames.reserve(n_frames);
    tb.landmarks.reserve(n_frames);
    for (int i = 0; i < n_frames; ++i) {
        const double t = (i + 0.5) / fps;
        const double g = 2.0 + 24.0 * fixture::envelope(mp, t);
        const fixture::FramePose pose = fixture::pose_at(mp, t);
        tb.frames.push_back(fixture::render_frame(pose, g));
        LandmarkSet lm = fixture::local_landmarks(g);
        LandmarkSet mapped;
        mapped.coordinate_space = CoordSpace::frame;
        for (const auto& [name, p] : lm.points) mapped.set(name, pose.to_frame(p));
        tb.landmarks.push_back(std::move(mapped));
    }

    tb.audio.sample_rate = kAudioSampleRate;
    const long long n_samples = std::llround(n_frames / fps * kAudioSampleRate);
    tb.audio.samples.resize(n_samples);
    for (long long s = 0; s < n_samples; ++s) {
        const double t = static_cast<double>(s) / kAudioSampleRate;
        const double carrier = 0.55 * std::sin(2.0 * M_PI * 180.0 * t + mp.carrier_p1) +
                               0.35 * std::sin(2.0 * M_PI * 317.0 * t + mp.carrier_p2);
        tb.audio.samples[s] = 0.95 * fixture::envelope(mp, t) * carrier;
    }
    tb.validate();
    return tb;
}

}  // namespace lipdub
