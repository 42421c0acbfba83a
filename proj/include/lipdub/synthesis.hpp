#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "lipdub/audio_features.hpp"
#include "lipdub/error.hpp"
#include "lipdub/image.hpp"
#include "lipdub/masking.hpp"
#include "lipdub/metrics.hpp"
#include "lipdub/utterance.hpp"

namespace lipdub {

// The mouth-synthesis input contract. Masked frames carry no pixels inside
// the rectangle, references carry pixels only inside it, and references never
// alias a target frame.
struct SynthesisRequest {
    std::vector<ImageBuf> masked_frames;
    std::vector<FeatureMatrix> audio_windows;  // one 24xD window per frame
    std::vector<ImageBuf> reference_frames;    // reference-masked
    RectMask rect;
    double fps = 25.0;
    std::vector<int> frame_indices;      // track indices of the target frames
    std::vector<int> reference_indices;  // track indices of the references
};

struct SynthesisResult {
    std::vector<ImageBuf> frames;
};

// Channel numbering follows the four leak countermeasures: (1) mask zeroing,
// (2) mask coverage, (3) crop landmark discipline, (4) reference exclusion.
inline void validate_request(const SynthesisRequest& req) {
    req.rect.validate();
    if (req.masked_frames.empty()) throw ValidationError("SynthesisRequest: no frames");
    if (req.audio_windows.size() != req.masked_frames.size())
        throw ValidationError("SynthesisRequest: audio window count != frame count");
    if (req.frame_indices.size() != req.masked_frames.size())
        throw ValidationError("SynthesisRequest: frame index count != frame count");
    if (req.reference_frames.empty()) throw ValidationError("SynthesisRequest: no references");
    if (req.reference_indices.size() != req.reference_frames.size())
        throw ValidationError("SynthesisRequest: reference index count != reference count");

    const ImageBuf& f0 = req.masked_frames[0];
    const RectPixelBounds b = rect_pixel_bounds(req.rect, f0.height, f0.width);
    for (size_t t = 0; t < req.masked_frames.size(); ++t) {
        const ImageBuf& f = req.masked_frames[t];
        if (!f.same_shape(f0)) throw ValidationError("SynthesisRequest: frame shape mismatch");
        for (int y = b.y0; y < b.y1; ++y)
            for (int x = b.x0; x < b.x1; ++x)
                for (int c = 0; c < f.channels; ++c)
                    if (f.at(y, x, c) != 0.0)
                        throw LeakViolation(1, "masked frame " + std::to_string(t) +
                                                   " has nonzero pixels inside the mask");
    }
    for (size_t n = 0; n < req.reference_frames.size(); ++n) {
        const ImageBuf& r = req.reference_frames[n];
        if (!r.same_shape(f0)) throw ValidationError("SynthesisRequest: reference shape mismatch");
        for (int y = 0; y < r.height; ++y)
            for (int x = 0; x < r.width; ++x) {
                if (y >= b.y0 && y < b.y1 && x >= b.x0 && x < b.x1) continue;
                for (int c = 0; c < r.channels; ++c)
                    if (r.at(y, x, c) != 0.0)
                        throw LeakViolation(4, "reference " + std::to_string(n) +
                                                   " carries context outside the mask");
            }
    }
    for (int ref_idx : req.reference_indices)
        for (int tgt_idx : req.frame_indices)
            if (ref_idx == tgt_idx)
                throw LeakViolation(4, "reference aliases target frame " + std::to_string(tgt_idx));
}

class Synthesizer {
  public:
    virtual ~Synthesizer() = default;
    virtual std::string name() const = 0;
    virtual SynthesisResult run(const SynthesisRequest& req) const = 0;
    // Optional speaker adaptation hook; the baseline keeps no state.
    virtual void adapt(const std::vector<Utterance>&) {}
};

// Dispatcher: enforces the request contract, runs the implementation, then
// rebuilds the outside-rect region from the input so the result invariant
// holds for every implementation.
inline SynthesisResult synthesize(const SynthesisRequest& req, const Synthesizer& synth) {
    validate_request(req);
    SynthesisResult res = synth.run(req);
    if (res.frames.size() != req.masked_frames.size())
        throw ValidationError("synthesize: implementation returned wrong frame count");
    const ImageBuf& f0 = req.masked_frames[0];
    const RectPixelBounds b = rect_pixel_bounds(req.rect, f0.height, f0.width);
    for (size_t t = 0; t < res.frames.size(); ++t) {
        ImageBuf& out = res.frames[t];
        if (!out.same_shape(f0))
            throw ValidationError("synthesize: implementation changed the frame shape");
        const ImageBuf& in = req.masked_frames[t];
        for (int y = 0; y < out.height; ++y)
            for (int x = 0; x < out.width; ++x) {
                const bool inside = y >= b.y0 && y < b.y1 && x >= b.x0 && x < b.x1;
                for (int c = 0; c < out.channels; ++c) {
                    if (inside)
                        out.at(y, x, c) = clamp01(out.at(y, x, c));
                    else
                        out.at(y, x, c) = in.at(y, x, c);
                }
            }
    }
    return res;
}

namespace detail {

// 16x16 average-pooled grayscale of the rect region, flattened.
inline std::vector<double> mouth_region_embedding(const ImageBuf& frame,
                                                  const RectPixelBounds& b) {
    constexpr int grid = 16;
    std::vector<double> emb(grid * grid, 0.0);
    std::vector<int> counts(grid * grid, 0);
    const ImageBuf gray = to_gray(frame);
    const int rw = b.x1 - b.x0, rh = b.y1 - b.y0;
    for (int y = b.y0; y < b.y1; ++y)
        for (int x = b.x0; x < b.x1; ++x) {
            const int gy = std::min(grid - 1, (y - b.y0) * grid / rh);
            const int gx = std::min(grid - 1, (x - b.x0) * grid / rw);
            emb[gy * grid + gx] += gray.at(y, x);
            ++counts[gy * grid + gx];
        }
    for (size_t i = 0; i < emb.size(); ++i)
        if (counts[i] > 0) emb[i] /= counts[i];
    return emb;
}

// Fixed seeded projection matrix, rows scaled by 1/sqrt(in_dim).
inline std::vector<double> random_projection(const std::vector<double>& v, int out_dim,
                                             uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> out(out_dim, 0.0);
    const double scale = 1.0 / std::sqrt(static_cast<double>(v.size()));
    for (int o = 0; o < out_dim; ++o) {
        double acc = 0.0;
        for (double x : v) acc += gauss(rng) * x;
        out[o] = acc * scale;
    }
    return out;
}

}  // namespace detail

// Non-neural stand-in: per frame, soft-attention weights between the frame's
// audio window and the reference mouth embeddings pick a convex pixel blend
// of the reference mouth regions. Weights are averaged over a 3-frame window
// for temporal smoothness.
class BaselineReferenceBlend : public Synthesizer {
  public:
    explicit BaselineReferenceBlend(AttentionSign sign = AttentionSign::negative_exponent)
        : sign_(sign) {}

    std::string name() const override { return "baseline"; }

    SynthesisResult run(const SynthesisRequest& req) const override {
        const ImageBuf& f0 = req.masked_frames[0];
        const RectPixelBounds b = rect_pixel_bounds(req.rect, f0.height, f0.width);
        constexpr int kDim = 64;
        constexpr uint64_t kRefSeed = 0x5eedL;
        constexpr uint64_t kAudioSeed = 0xa0d10L;

        std::vector<std::vector<double>> ref_emb;
        ref_emb.reserve(req.reference_frames.size());
        for (const ImageBuf& r : req.reference_frames)
            ref_emb.push_back(
                detail::random_projection(detail::mouth_region_embedding(r, b), kDim, kRefSeed));

        const size_t n_frames = req.masked_frames.size();
        const size_t n_refs = req.reference_frames.size();
        std::vector<std::vector<double>> weights(n_frames);
        for (size_t t = 0; t < n_frames; ++t) {
            const FeatureMatrix& win = req.audio_windows[t];
            std::vector<double> mean_row(win.cols, 0.0);
            for (int r = 0; r < win.rows; ++r)
                for (int d = 0; d < win.cols; ++d) mean_row[d] += win.at(r, d) / win.rows;
            const std::vector<double> key =
                detail::random_projection(mean_row, kDim, kAudioSeed);
            weights[t] = attention_weights(key, ref_emb, sign_).weights;
        }

        // 3-frame moving average keeps adjacent mouths from flickering
        std::vector<std::vector<double>> smoothed(n_frames, std::vector<double>(n_refs, 0.0));
        for (size_t t = 0; t < n_frames; ++t) {
            int cnt = 0;
            for (int dt = -1; dt <= 1; ++dt) {
                const long long s = static_cast<long long>(t) + dt;
                if (s < 0 || s >= static_cast<long long>(n_frames)) continue;
                for (size_t n = 0; n < n_refs; ++n) smoothed[t][n] += weights[s][n];
                ++cnt;
            }
            for (size_t n = 0; n < n_refs; ++n) smoothed[t][n] /= cnt;
        }

        SynthesisResult res;
        res.frames.reserve(n_frames);
        for (size_t t = 0; t < n_frames; ++t) {
            ImageBuf out = req.masked_frames[t];
            for (int y = b.y0; y < b.y1; ++y)
                for (int x = b.x0; x < b.x1; ++x)
                    for (int c = 0; c < out.channels; ++c) {
                        double v = 0.0;
                        for (size_t n = 0; n < n_refs; ++n)
                            v += smoothed[t][n] * req.reference_frames[n].at(y, x, c);
                        out.at(y, x, c) = clamp01(v);
                    }
            res.frames.push_back(std::move(out));
        }
        return res;
    }

  private:
    AttentionSign sign_;
};

// Test synthesizer: returns the true crops for the requested frame indices.
class OracleSynthesizer : public Synthesizer {
  public:
    explicit OracleSynthesizer(std::vector<ImageBuf> true_crops)
        : crops_(std::move(true_crops)) {}

    std::string name() const override { return "oracle"; }

    SynthesisResult run(const SynthesisRequest& req) const override {
        SynthesisResult res;
        res.frames.reserve(req.frame_indices.size());
        for (int idx : req.frame_indices) {
            if (idx < 0 || idx >= static_cast<int>(crops_.size()))
                throw ValidationError("OracleSynthesizer: frame index out of range");
            res.frames.push_back(crops_[idx]);
        }
        return res;
    }

  private:
    std::vector<ImageBuf> crops_;
};

struct LeakChannelReport {
    bool passed = true;
    std::string detail;
};

struct LeakAuditReport {
    std::array<LeakChannelReport, 4> channels;

    bool all_passed() const {
        return channels[0].passed && channels[1].passed && channels[2].passed &&
               channels[3].passed;
    }
};

// Report-only audit of the four leak channels. crop_landmark_trace lists the
// landmark names the crop transform actually read.
inline LeakAuditReport leak_audit(const Utterance& u, const SynthesisRequest& req,
                                  const std::vector<std::string>& crop_landmark_trace,
                                  double min_mask_area_fraction = 0.25) {
    LeakAuditReport report;
    const ImageBuf& f0 = req.masked_frames[0];
    const RectPixelBounds b = rect_pixel_bounds(req.rect, f0.height, f0.width);

    for (size_t t = 0; t < req.masked_frames.size() && report.channels[0].passed; ++t) {
        const ImageBuf& f = req.masked_frames[t];
        for (int y = b.y0; y < b.y1 && report.channels[0].passed; ++y)
            for (int x = b.x0; x < b.x1; ++x) {
                bool zero = true;
                for (int c = 0; c < f.channels; ++c) zero = zero && f.at(y, x, c) == 0.0;
                if (!zero) {
                    report.channels[0] = {false, "masked frame " + std::to_string(t) +
                                                     " has mouth pixels at (" + std::to_string(x) +
                                                     "," + std::to_string(y) + ")"};
                    break;
                }
            }
    }

    for (size_t i = 0; i < u.per_frame_landmarks.size(); ++i) {
        if (!rect_mask_covers(req.rect, u.per_frame_landmarks[i], f0.height, f0.width,
                              min_mask_area_fraction)) {
            report.channels[1] = {false, "mask misses mouth/jaw landmarks or area minimum on frame " +
                                             std::to_string(i)};
            break;
        }
    }

    const auto& allowed = landmark_names::alignment();
    for (const std::string& name : crop_landmark_trace) {
        if (std::find(allowed.begin(), allowed.end(), name) == allowed.end()) {
            report.channels[2] = {false, "crop transform read landmark '" + name + "'"};
            break;
        }
    }

    for (size_t n = 0; n < req.reference_frames.size() && report.channels[3].passed; ++n) {
        const ImageBuf& r = req.reference_frames[n];
        for (int y = 0; y < r.height && report.channels[3].passed; ++y)
            for (int x = 0; x < r.width; ++x) {
                if (y >= b.y0 && y < b.y1 && x >= b.x0 && x < b.x1) continue;
                bool zero = true;
                for (int c = 0; c < r.channels; ++c) zero = zero && r.at(y, x, c) == 0.0;
                if (!zero) {
                    report.channels[3] = {false, "reference " + std::to_string(n) +
                                                     " keeps context outside the mask"};
                    break;
                }
            }
    }
    if (report.channels[3].passed)
        for (int ref_idx : req.reference_indices)
            for (int tgt_idx : req.frame_indices)
                if (ref_idx == tgt_idx)
                    report.channels[3] = {false, "reference aliases target frame " +
                                                     std::to_string(tgt_idx)};
    return report;
}

}  // namespace lipdub
