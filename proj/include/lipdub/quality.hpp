#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "lipdub/audio.hpp"
#include "lipdub/error.hpp"
#include "lipdub/image.hpp"
#include "lipdub/landmarks.hpp"

namespace lipdub {

constexpr double kMinEyeDistancePx = 80.0;

struct TrackQualityReport {
    double vlap = 0.0;
    double min_eye_distance = 0.0;
    double fps_in = 0.0;
    double fps_out = 0.0;
    double sync_score = 0.5;
    bool accepted = false;
    std::string reject_reason;  // machine-readable code, set iff rejected
};

// Population variance of the 4-neighbor Laplacian over interior pixels.
inline double variance_of_laplacian(const ImageBuf& img) {
    if (img.channels != 1)
        throw ValidationError("variance_of_laplacian: expects a single-channel image");
    if (img.height < 3 || img.width < 3)
        throw ValidationError("variance_of_laplacian: image smaller than 3x3");
    double sum = 0.0, sumsq = 0.0;
    const long long n = static_cast<long long>(img.height - 2) * (img.width - 2);
    for (int y = 1; y + 1 < img.height; ++y)
        for (int x = 1; x + 1 < img.width; ++x) {
            const double lap = img.at(y - 1, x) + img.at(y + 1, x) + img.at(y, x - 1) +
                               img.at(y, x + 1) - 4.0 * img.at(y, x);
            sum += lap;
            sumsq += lap * lap;
        }
    const double mean = sum / n;
    return std::max(0.0, sumsq / n - mean * mean);
}

inline double stddev_of_laplacian(const ImageBuf& img) {
    return std::sqrt(variance_of_laplacian(img));
}

// Reject iff the eye-to-eye distance is strictly below 80 px.
inline bool filter_eye_distance(const LandmarkSet& lm, double min_px = kMinEyeDistancePx) {
    if (!lm.has("left_eye") || !lm.has("right_eye"))
        throw ValidationError("filter_eye_distance: eye landmarks missing");
    return eye_distance(lm) >= min_px;
}

struct FpsDecision {
    bool accepted = false;
    std::string reject_reason;
    double fps_out = 0.0;
    std::vector<int> kept_indices;  // into the original frame sequence
};

// Below 23 fps rejects; above 30 fps drops every second frame (applied once).
inline FpsDecision normalize_fps(int n_frames, double fps) {
    if (!(fps > 0.0)) throw ValidationError("normalize_fps: fps must be positive");
    FpsDecision d;
    if (fps < 23.0) {
        d.reject_reason = "fps_too_low";
        d.fps_out = fps;
        return d;
    }
    d.accepted = true;
    if (fps <= 30.0) {
        d.fps_out = fps;
        d.kept_indices.resize(n_frames);
        for (int i = 0; i < n_frames; ++i) d.kept_indices[i] = i;
        return d;
    }
    d.fps_out = fps / 2.0;
    for (int i = 0; i < n_frames; i += 2) d.kept_indices.push_back(i);
    return d;
}

namespace detail {

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const size_t n = a.size();
    double ma = 0.0, mb = 0.0;
    for (size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double saa = 0.0, sbb = 0.0, sab = 0.0;
    for (size_t i = 0; i < n; ++i) {
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
        sab += (a[i] - ma) * (b[i] - mb);
    }
    if (saa <= 0.0 || sbb <= 0.0) return std::nan("");
    return sab / std::sqrt(saa * sbb);
}

}  // namespace detail

// Mouth opening per frame: vertical inner-lip gap normalized by eye distance.
inline double mouth_opening(const LandmarkSet& lm) {
    const double gap = std::abs(lm.get("inner_lower_lip_mid").y - lm.get("inner_upper_lip_mid").y);
    const double ed = eye_distance(lm);
    if (!(ed > 0.0)) throw ValidationError("mouth_opening: degenerate eye distance");
    return gap / ed;
}

// Correlation between mouth opening and the per-frame audio RMS envelope,
// mapped to [0,1]; 0.5 means uninformative (zero variance on either side).
inline double sync_score(const std::vector<LandmarkSet>& frames_landmarks, const AudioClip& audio,
                         double fps) {
    const int n = static_cast<int>(frames_landmarks.size());
    if (n < 15) throw ValidationError("sync_score: need at least 15 frames");
    if (!(fps > 0.0)) throw ValidationError("sync_score: fps must be positive");
    const double span = static_cast<double>(n) / fps;
    if (audio.duration() + 1e-9 < span - 1.0 / fps)
        throw ValidationError("sync_score: audio does not cover the frame span");

    std::vector<double> opening(n), rms(n);
    for (int i = 0; i < n; ++i) {
        opening[i] = mouth_opening(frames_landmarks[i]);
        const long long s0 = std::llround(i * audio.sample_rate / fps);
        long long s1 = std::llround((i + 1) * audio.sample_rate / fps);
        s1 = std::min<long long>(s1, static_cast<long long>(audio.samples.size()));
        double acc = 0.0;
        long long cnt = 0;
        for (long long s = s0; s < s1; ++s, ++cnt) acc += audio.samples[s] * audio.samples[s];
        rms[i] = cnt > 0 ? std::sqrt(acc / cnt) : 0.0;
    }
    // A constant series has no variance to correlate; report uninformative
    // before accumulated rounding can turn the correlation into noise.
    const auto constant = [](const std::vector<double>& v) {
        const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
        return *lo == *hi;
    };
    if (constant(opening) || constant(rms)) return 0.5;
    const double r = detail::pearson(opening, rms);
    if (std::isnan(r)) return 0.5;
    return (r + 1.0) / 2.0;
}

// Argmax of sync score; ties break toward the lowest index.
inline size_t select_track(const std::vector<double>& sync_scores) {
    if (sync_scores.empty()) throw ValidationError("select_track: empty track list");
    size_t best = 0;
    for (size_t i = 1; i < sync_scores.size(); ++i)
        if (sync_scores[i] > sync_scores[best]) best = i;
    return best;
}

}  // namespace lipdub
