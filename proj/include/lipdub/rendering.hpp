#pragma once

#include <algorithm>
#include <vector>

#include "lipdub/affine.hpp"
#include "lipdub/error.hpp"
#include "lipdub/geometry.hpp"
#include "lipdub/image.hpp"
#include "lipdub/landmarks.hpp"
#include "lipdub/masking.hpp"
#include "lipdub/synthesis.hpp"
#include "lipdub/utterance.hpp"

namespace lipdub {

constexpr double kDefaultFeatherSigma = 3.0;
constexpr double kChinShiftLossPx = 12.0;
constexpr double kChinShiftRenderPx = 8.0;

enum class BlendMode {
    convex,        // m*crop + (1-m)*frame, weights sum to 1 everywhere
    unnormalized,  // blur(face)*crop + (1-binary face)*frame, brightens the feather band
};

// Paste a synthesized crop back into its source frame: resample by the
// inverse transform, then alpha blend under the feathered face polygon built
// from the crop-space landmarks and mapped into frame space.
inline ImageBuf paste_back(const ImageBuf& full_frame, const ImageBuf& crop,
                           const AffineTransform& t, const LandmarkSet& lm_crop,
                           double feather_sigma = kDefaultFeatherSigma,
                           double chin_shift = kChinShiftRenderPx,
                           BlendMode mode = BlendMode::convex) {
    t.validate();
    const AffineTransform inv = invert_affine(t);

    PolyMask poly_crop = build_face_polygon(lm_crop, chin_shift);
    PolyMask poly_frame;
    poly_frame.chin_shift = chin_shift;
    std::vector<Vec2> mapped;
    mapped.reserve(poly_crop.vertices.size());
    for (const Vec2& v : poly_crop.vertices) mapped.push_back(inv.apply(v));
    poly_frame.vertices = detail::convex_hull(std::move(mapped));

    const ImageBuf m = rasterize_feathered(poly_frame, full_frame.height, full_frame.width,
                                           feather_sigma);
    const ImageBuf crop_in_frame = warp_bicubic(crop, inv, full_frame.height, full_frame.width);

    ImageBuf binary;
    if (mode == BlendMode::unnormalized)
        binary = rasterize_feathered(poly_frame, full_frame.height, full_frame.width, 0.0);

    ImageBuf out = full_frame;
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x) {
            const double w = m.at(y, x);
            if (w == 0.0) continue;  // untouched pixels stay bit-identical
            for (int c = 0; c < out.channels; ++c) {
                double v;
                if (mode == BlendMode::convex) {
                    v = w * crop_in_frame.at(y, x, c) + (1.0 - w) * full_frame.at(y, x, c);
                } else {
                    v = w * crop_in_frame.at(y, x, c) +
                        (1.0 - binary.at(y, x)) * full_frame.at(y, x, c);
                }
                out.at(y, x, c) = clamp01(v);
            }
        }
    return out;
}

// Replace each chunk's core frames with their synthesized crops; buffer
// frames are context only and are discarded here.
inline std::vector<ImageBuf> render_video(
    const std::vector<ImageBuf>& frames,
    const std::vector<std::pair<ChunkSpan, SynthesisResult>>& chunks,
    const std::vector<AffineTransform>& transforms, const std::vector<LandmarkSet>& landmarks,
    double feather_sigma = kDefaultFeatherSigma, double chin_shift = kChinShiftRenderPx,
    BlendMode mode = BlendMode::convex) {
    if (transforms.size() != frames.size() || landmarks.size() != frames.size())
        throw ValidationError("render_video: per-frame transform/landmark counts disagree");
    std::vector<char> covered(frames.size(), 0);
    for (const auto& [span, result] : chunks) {
        if (span.core_start < 0 || span.core_end > static_cast<int>(frames.size()))
            throw ValidationError("render_video: chunk core outside the frame range");
        if (static_cast<int>(result.frames.size()) != span.n_frames())
            throw ValidationError("render_video: synthesis result size disagrees with chunk span");
        for (int i = span.core_start; i < span.core_end; ++i) {
            if (covered[i]) throw ValidationError("render_video: overlapping chunk core ranges");
            covered[i] = 1;
        }
    }

    std::vector<ImageBuf> out = frames;
    for (const auto& [span, result] : chunks)
        for (int i = span.core_start; i < span.core_end; ++i) {
            const ImageBuf& crop = result.frames[i - span.first_frame()];
            out[i] = paste_back(frames[i], crop, transforms[i], landmarks[i], feather_sigma,
                                chin_shift, mode);
        }
    return out;
}

}  // namespace lipdub
