#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "lipdub/error.hpp"

namespace lipdub {

constexpr int kAudioSampleRate = 16000;

// Mono PCM audio held as doubles in [-1, 1].
struct AudioClip {
    std::vector<double> samples;
    int sample_rate = kAudioSampleRate;

    double duration() const {
        return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
    }

    void validate() const {
        if (sample_rate <= 0) throw ValidationError("AudioClip: sample_rate must be positive");
        for (double s : samples) {
            if (!std::isfinite(s)) throw ValidationError("AudioClip: non-finite sample");
            if (s < -1.0 || s > 1.0) throw ValidationError("AudioClip: sample outside [-1, 1]");
        }
    }
};

inline std::vector<int16_t> to_pcm16(const AudioClip& clip) {
    std::vector<int16_t> out(clip.samples.size());
    for (size_t i = 0; i < clip.samples.size(); ++i) {
        // Same scale as decoding so a second encode of a decoded clip is exact.
        double v = std::lround(clip.samples[i] * 32768.0);
        if (v < -32768.0) v = -32768.0;
        if (v > 32767.0) v = 32767.0;
        out[i] = static_cast<int16_t>(v);
    }
    return out;
}

inline AudioClip from_pcm16(const std::vector<int16_t>& pcm, int sample_rate) {
    AudioClip clip;
    clip.sample_rate = sample_rate;
    clip.samples.resize(pcm.size());
    for (size_t i = 0; i < pcm.size(); ++i) clip.samples[i] = pcm[i] / 32768.0;
    return clip;
}

}  // namespace lipdub
