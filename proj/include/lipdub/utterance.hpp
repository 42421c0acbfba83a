#pragma once

#include <string>
#include <utility>
#include <vector>

#include "lipdub/affine.hpp"
#include "lipdub/audio.hpp"
#include "lipdub/error.hpp"
#include "lipdub/image.hpp"
#include "lipdub/landmarks.hpp"

namespace lipdub {

constexpr int kCropSize = 256;
constexpr double kMinFps = 23.0;
constexpr double kMaxFps = 30.0;
constexpr double kMaxUtteranceSeconds = 12.0;

// A short synced bundle: canonical face crops, the matching audio cut,
// per-frame landmarks (crop space) and the frame->crop transforms.
struct Utterance {
    std::vector<ImageBuf> frames;
    AudioClip audio;
    double fps = 25.0;
    std::vector<LandmarkSet> per_frame_landmarks;
    std::vector<AffineTransform> per_frame_transform;
    std::string language;
    std::vector<int> source_frame_indices;
    std::pair<long long, long long> source_sample_range{0, 0};

    size_t n_frames() const { return frames.size(); }

    void validate() const {
        const size_t n = frames.size();
        if (n == 0) throw ValidationError("Utterance: no frames");
        if (per_frame_landmarks.size() != n || per_frame_transform.size() != n ||
            source_frame_indices.size() != n)
            throw ValidationError(
                "Utterance: frames, landmarks, transforms, and source indices must have equal "
                "lengths");
        if (!(fps >= kMinFps && fps <= kMaxFps))
            throw ValidationError("Utterance: fps must lie in [23, 30]");
        const double dur = static_cast<double>(n) / fps;
        if (dur > kMaxUtteranceSeconds + 1e-9)
            throw ValidationError("Utterance: duration exceeds the 12 s cap");
        for (size_t i = 0; i < n; ++i) {
            const ImageBuf& f = frames[i];
            if (f.height != kCropSize || f.width != kCropSize || f.channels != 3)
                throw ValidationError("Utterance: frame " + std::to_string(i) +
                                      " is not a 256x256x3 crop");
            f.validate();
            per_frame_landmarks[i].validate();
            if (per_frame_landmarks[i].coordinate_space != CoordSpace::crop)
                throw ValidationError("Utterance: landmarks of frame " + std::to_string(i) +
                                      " are not in crop space");
            per_frame_transform[i].validate();
        }
        audio.validate();
        const auto [s0, s1] = source_sample_range;
        if (s1 < s0) throw ValidationError("Utterance: source_sample_range end before start");
        if (audio.samples.size() != static_cast<size_t>(s1 - s0))
            throw ValidationError("Utterance: audio length disagrees with source_sample_range");
        const double audio_span = static_cast<double>(s1 - s0) / audio.sample_rate;
        if (audio_span + 1e-9 < dur - 1.0 / fps)
            throw ValidationError("Utterance: audio does not cover the frame span");
    }
};

// Placement of a chunk inside its parent track. Buffers are context frames;
// pad flags mark sides where the buffer was truncated at a track boundary and
// the audio window must be silence padded instead.
struct ChunkSpan {
    int core_start = 0;
    int core_end = 0;
    int buffer_pre = 0;
    int buffer_post = 0;
    bool pad_audio_pre = false;
    bool pad_audio_post = false;

    int core_len() const { return core_end - core_start; }
    int first_frame() const { return core_start - buffer_pre; }
    int end_frame() const { return core_end + buffer_post; }
    int n_frames() const { return end_frame() - first_frame(); }

    bool operator==(const ChunkSpan&) const = default;
};

struct UtteranceChunk {
    ChunkSpan span;
    std::vector<ImageBuf> frames;  // buffer_pre + core + buffer_post, in track order
    AudioClip audio_window;

    void validate(int max_core_len, int max_buffer = 10) const {
        if (span.core_len() < 1) throw ValidationError("UtteranceChunk: empty core range");
        if (span.core_len() > max_core_len)
            throw ValidationError("UtteranceChunk: core range exceeds configured maximum");
        if (span.buffer_pre < 0 || span.buffer_pre > max_buffer || span.buffer_post < 0 ||
            span.buffer_post > max_buffer)
            throw ValidationError("UtteranceChunk: buffer size outside [0, " +
                                  std::to_string(max_buffer) + "]");
        if (!frames.empty() && frames.size() != static_cast<size_t>(span.n_frames()))
            throw ValidationError("UtteranceChunk: frame count disagrees with span");
    }
};

}  // namespace lipdub
