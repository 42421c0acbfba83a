#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "lipdub/audio.hpp"
#include "lipdub/error.hpp"
#include "lipdub/utterance.hpp"

namespace lipdub {

constexpr int kDefaultChunkMaxFrames = 240;
constexpr int kBufferFrames = 10;

// ceil(N/M) segments whose lengths differ by at most one, in order.
inline std::vector<std::pair<int, int>> split_track(int n_frames, int max_len) {
    if (n_frames < 1) throw ValidationError("split_track: n_frames must be >= 1");
    if (max_len < 1) throw ValidationError("split_track: max_len must be >= 1");
    const int segments = (n_frames + max_len - 1) / max_len;
    const int base = n_frames / segments;
    const int rem = n_frames % segments;
    std::vector<std::pair<int, int>> ranges;
    ranges.reserve(segments);
    int start = 0;
    for (int s = 0; s < segments; ++s) {
        const int len = base + (s < rem ? 1 : 0);
        ranges.emplace_back(start, start + len);
        start += len;
    }
    return ranges;
}

// Buffers clamp at track boundaries; a truncated side flags its audio window
// for silence padding.
inline std::vector<ChunkSpan> attach_buffers(const std::vector<std::pair<int, int>>& ranges,
                                             int n_frames, int buffer = kBufferFrames) {
    if (buffer < 0) throw ValidationError("attach_buffers: buffer must be >= 0");
    std::vector<ChunkSpan> spans;
    spans.reserve(ranges.size());
    for (const auto& [start, end] : ranges) {
        if (start < 0 || end > n_frames || start >= end)
            throw ValidationError("attach_buffers: range outside [0, n_frames)");
        ChunkSpan s;
        s.core_start = start;
        s.core_end = end;
        s.buffer_pre = std::min(buffer, start);
        s.buffer_post = std::min(buffer, n_frames - end);
        s.pad_audio_pre = s.buffer_pre < buffer;
        s.pad_audio_post = s.buffer_post < buffer;
        spans.push_back(s);
    }
    return spans;
}

// Audio for the chunk's ideal span (core plus full buffers on both sides);
// samples that fall outside the track are silence.
inline AudioClip chunk_audio_window(const AudioClip& track_audio, const ChunkSpan& span,
                                    double fps, int buffer = kBufferFrames) {
    if (!(fps > 0.0)) throw ValidationError("chunk_audio_window: fps must be positive");
    const auto sample_at = [&](long long frame) {
        return std::llround(static_cast<double>(frame) * track_audio.sample_rate / fps);
    };
    const long long ideal_lo = span.core_start - buffer;
    const long long ideal_hi = span.core_end + buffer;
    const long long lo = span.first_frame();
    const long long hi = span.end_frame();

    AudioClip out;
    out.sample_rate = track_audio.sample_rate;
    const long long pre = sample_at(lo) - sample_at(ideal_lo);
    const long long post = sample_at(ideal_hi) - sample_at(hi);
    const long long s0 = sample_at(lo);
    const long long s1 = std::min<long long>(sample_at(hi),
                                             static_cast<long long>(track_audio.samples.size()));
    out.samples.assign(static_cast<size_t>(pre), 0.0);
    for (long long s = s0; s < s1; ++s) out.samples.push_back(track_audio.samples[s]);
    // silence both for the truncated buffers and for audio that runs short
    const long long tail = (sample_at(hi) - s0) - std::max<long long>(0, s1 - s0);
    out.samples.insert(out.samples.end(), static_cast<size_t>(std::max<long long>(0, tail)), 0.0);
    out.samples.insert(out.samples.end(), static_cast<size_t>(post), 0.0);
    return out;
}

}  // namespace lipdub
