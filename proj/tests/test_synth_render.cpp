#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "lipdub/chunking.hpp"
#include "lipdub/fixture.hpp"
#include "lipdub/io/bundle.hpp"
#include "lipdub/rendering.hpp"
#include "lipdub/synthesis.hpp"
#include "oracles.hpp"

using namespace lipdub;

namespace {

struct Prepared {
    TrackBundle track;
    std::vector<ImageBuf> crops;
    std::vector<AffineTransform> transforms;
    std::vector<LandmarkSet> crop_landmarks;
    SynthesisRequest req;
};

// Canonicalize a synthetic track and assemble a contract-compliant request.
Prepared prepare(uint64_t seed, int n_frames, const std::vector<int>& targets,
                 const std::vector<int>& refs, RectMask rect = RectMask{}) {
    Prepared p;
    p.track = generate_fixture(seed, n_frames);
    const FeatureMatrix fm = log_mel(p.track.audio);
    for (int i = 0; i < n_frames; ++i) {
        auto [crop, t, lm] = canonicalize_crop(p.track.frames[i], p.track.landmarks[i]);
        p.crops.push_back(std::move(crop));
        p.transforms.push_back(t);
        p.crop_landmarks.push_back(std::move(lm));
    }
    p.req.rect = rect;
    p.req.fps = p.track.fps;
    for (int i : targets) {
        p.req.masked_frames.push_back(apply_rect_mask(p.crops[i], rect));
        p.req.audio_windows.push_back(window_for_frame(fm, i, p.track.fps));
        p.req.frame_indices.push_back(i);
    }
    for (int i : refs) {
        p.req.reference_frames.push_back(apply_reference_mask(p.crops[i], rect));
        p.req.reference_indices.push_back(i);
    }
    return p;
}

Utterance utterance_for(const Prepared& p) {
    Utterance u;
    for (int i : p.req.frame_indices) u.per_frame_landmarks.push_back(p.crop_landmarks[i]);
    return u;
}

// Writes a constant everywhere, inside and outside the mask alike.
class ScribblerSynth : public Synthesizer {
  public:
    std::string name() const override { return "scribbler"; }
    SynthesisResult run(const SynthesisRequest& req) const override {
        SynthesisResult res;
        for (const ImageBuf& f : req.masked_frames) {
            ImageBuf out = f;
            for (auto& v : out.data) v = 7.0;
            res.frames.push_back(std::move(out));
        }
        return res;
    }
};

class WrongCountSynth : public Synthesizer {
  public:
    std::string name() const override { return "wrong_count"; }
    SynthesisResult run(const SynthesisRequest& req) const override {
        SynthesisResult res;
        res.frames.push_back(req.masked_frames[0]);
        res.frames.push_back(req.masked_frames[0]);
        return res;
    }
};

// Quantized random fill keeps channel sums exact under channel rotation.
ImageBuf dyadic_random_image(int h, int w, int c, std::mt19937_64& rng) {
    ImageBuf img = ImageBuf::make(h, w, c);
    std::uniform_int_distribution<int> u(51, 179);  // values in [0.2, 0.7]
    for (auto& v : img.data) v = u(rng) / 256.0;
    return img;
}

std::vector<uint8_t> binary_face_mask(const ImageBuf& m) {
    std::vector<uint8_t> mask(m.data.size());
    for (size_t i = 0; i < m.data.size(); ++i) mask[i] = m.data[i] > 0.0 ? 1 : 0;
    return mask;
}

}  // namespace

TEST_CASE("synthesis request validation guards every leak channel") {
    const Prepared p = prepare(11, 20, {5, 6, 7}, {0, 15});
    SECTION("the compliant request is accepted") { CHECK_NOTHROW(validate_request(p.req)); }
    SECTION("a mouth pixel surviving the mask trips channel 1") {
        SynthesisRequest bad = p.req;
        const RectPixelBounds b = rect_pixel_bounds(bad.rect, 256, 256);
        bad.masked_frames[1].at((b.y0 + b.y1) / 2, (b.x0 + b.x1) / 2, 0) = 0.5;
        try {
            validate_request(bad);
            FAIL("expected a leak violation");
        } catch (const LeakViolation& e) {
            CHECK(e.channel == 1);
        }
    }
    SECTION("reference context outside the mask trips channel 4") {
        SynthesisRequest bad = p.req;
        bad.reference_frames[0].at(2, 2, 0) = 0.1;
        try {
            validate_request(bad);
            FAIL("expected a leak violation");
        } catch (const LeakViolation& e) {
            CHECK(e.channel == 4);
        }
    }
    SECTION("a reference drawn from a target frame trips channel 4") {
        SynthesisRequest bad = p.req;
        bad.reference_indices[0] = bad.frame_indices[0];
        try {
            validate_request(bad);
            FAIL("expected a leak violation");
        } catch (const LeakViolation& e) {
            CHECK(e.channel == 4);
        }
    }
    SECTION("count mismatches are schema errors, not leaks") {
        SynthesisRequest bad = p.req;
        bad.audio_windows.pop_back();
        CHECK_THROWS_AS(validate_request(bad), ValidationError);
        bad = p.req;
        bad.reference_indices.pop_back();
        CHECK_THROWS_AS(validate_request(bad), ValidationError);
        bad = p.req;
        bad.masked_frames.clear();
        bad.audio_windows.clear();
        bad.frame_indices.clear();
        CHECK_THROWS_AS(validate_request(bad), ValidationError);
    }
}

TEST_CASE("the dispatcher confines implementations to the mouth rectangle") {
    const Prepared p = prepare(12, 18, {4, 5}, {0, 16});
    const RectPixelBounds b = rect_pixel_bounds(p.req.rect, 256, 256);
    SECTION("a scribbler cannot touch pixels outside the rect") {
        const SynthesisResult res = synthesize(p.req, ScribblerSynth{});
        REQUIRE(res.frames.size() == 2);
        for (size_t t = 0; t < res.frames.size(); ++t) {
            const ImageBuf& out = res.frames[t];
            const ImageBuf& in = p.req.masked_frames[t];
            for (int y = 0; y < 256; ++y)
                for (int x = 0; x < 256; ++x) {
                    const bool inside = y >= b.y0 && y < b.y1 && x >= b.x0 && x < b.x1;
                    for (int c = 0; c < 3; ++c) {
                        if (inside)
                            REQUIRE(out.at(y, x, c) == 1.0);  // 7.0 clamped
                        else
                            REQUIRE(out.at(y, x, c) == in.at(y, x, c));
                    }
                }
        }
    }
    SECTION("a wrong frame count is rejected") {
        Prepared q = prepare(12, 18, {4, 5, 6}, {0, 16});
        CHECK_THROWS_AS(synthesize(q.req, WrongCountSynth{}), ValidationError);
    }
}

TEST_CASE("baseline reference blend") {
    SECTION("output outside the rect is exactly the masked input") {
        const Prepared p = prepare(21, 20, {8, 9, 10}, {1, 18});
        const RectPixelBounds b = rect_pixel_bounds(p.req.rect, 256, 256);
        const SynthesisResult res = synthesize(p.req, BaselineReferenceBlend{});
        for (size_t t = 0; t < res.frames.size(); ++t)
            for (int y = 0; y < 256; ++y)
                for (int x = 0; x < 256; ++x) {
                    if (y >= b.y0 && y < b.y1 && x >= b.x0 && x < b.x1) continue;
                    for (int c = 0; c < 3; ++c)
                        REQUIRE(res.frames[t].at(y, x, c) ==
                                p.req.masked_frames[t].at(y, x, c));
                }
    }
    SECTION("deterministic across runs") {
        const Prepared p = prepare(22, 20, {8, 9}, {1, 18});
        const SynthesisResult a = synthesize(p.req, BaselineReferenceBlend{});
        const SynthesisResult b = synthesize(p.req, BaselineReferenceBlend{});
        REQUIRE(a.frames.size() == b.frames.size());
        for (size_t t = 0; t < a.frames.size(); ++t)
            REQUIRE(a.frames[t].data == b.frames[t].data);
    }
    SECTION("a single reference is copied verbatim into the rect") {
        const Prepared p = prepare(23, 20, {8, 9}, {2});
        const RectPixelBounds b = rect_pixel_bounds(p.req.rect, 256, 256);
        const SynthesisResult res = synthesize(p.req, BaselineReferenceBlend{});
        for (const ImageBuf& out : res.frames)
            for (int y = b.y0; y < b.y1; ++y)
                for (int x = b.x0; x < b.x1; ++x)
                    for (int c = 0; c < 3; ++c)
                        REQUIRE(out.at(y, x, c) ==
                                clamp01(p.req.reference_frames[0].at(y, x, c)));
    }
    SECTION("references with equal mouth embeddings blend to the pixel average") {
        Prepared p = prepare(24, 20, {8}, {2, 3});
        const RectPixelBounds b = rect_pixel_bounds(p.req.rect, 256, 256);
        std::mt19937_64 rng(5150);
        ImageBuf ref_a = ImageBuf::make(256, 256, 3);
        const ImageBuf noise = dyadic_random_image(256, 256, 3, rng);
        for (int y = b.y0; y < b.y1; ++y)
            for (int x = b.x0; x < b.x1; ++x)
                for (int c = 0; c < 3; ++c) ref_a.at(y, x, c) = noise.at(y, x, c);
        ImageBuf ref_b = ref_a;
        for (int y = b.y0; y < b.y1; ++y)
            for (int x = b.x0; x < b.x1; ++x) {
                // rotate channels; the channel mean (gray) is unchanged
                ref_b.at(y, x, 0) = ref_a.at(y, x, 1);
                ref_b.at(y, x, 1) = ref_a.at(y, x, 2);
                ref_b.at(y, x, 2) = ref_a.at(y, x, 0);
            }
        p.req.reference_frames = {ref_a, ref_b};
        const SynthesisResult res = synthesize(p.req, BaselineReferenceBlend{});
        for (int y = b.y0; y < b.y1; ++y)
            for (int x = b.x0; x < b.x1; ++x)
                for (int c = 0; c < 3; ++c) {
                    const double lo = std::min(ref_a.at(y, x, c), ref_b.at(y, x, c));
                    const double hi = std::max(ref_a.at(y, x, c), ref_b.at(y, x, c));
                    const double v = res.frames[0].at(y, x, c);
                    REQUIRE(v == Catch::Approx(0.5 * (lo + hi)).margin(1e-9));
                    REQUIRE(v >= lo - 1e-12);
                    REQUIRE(v <= hi + 1e-12);
                }
    }
}

TEST_CASE("oracle synthesizer returns the stored crops") {
    const Prepared p = prepare(31, 20, {3, 5}, {0, 19});
    const RectPixelBounds b = rect_pixel_bounds(p.req.rect, 256, 256);
    const SynthesisResult res = synthesize(p.req, OracleSynthesizer{p.crops});
    REQUIRE(res.frames.size() == 2);
    const int idx[2] = {3, 5};
    for (int t = 0; t < 2; ++t)
        for (int y = b.y0; y < b.y1; ++y)
            for (int x = b.x0; x < b.x1; ++x)
                for (int c = 0; c < 3; ++c)
                    REQUIRE(res.frames[t].at(y, x, c) == clamp01(p.crops[idx[t]].at(y, x, c)));
}

TEST_CASE("leak audit reports per channel") {
    SECTION("a compliant request passes all four channels") {
        const Prepared p = prepare(41, 20, {5, 6}, {0, 17});
        const auto report = leak_audit(utterance_for(p), p.req, {"left_eye", "eye_midpoint"});
        for (int ch = 0; ch < 4; ++ch) {
            INFO("channel " << ch + 1 << ": " << report.channels[ch].detail);
            CHECK(report.channels[ch].passed);
        }
        CHECK(report.all_passed());
    }
    SECTION("channel 1: surviving mouth pixels") {
        Prepared p = prepare(42, 20, {5, 6}, {0, 17});
        const RectPixelBounds b = rect_pixel_bounds(p.req.rect, 256, 256);
        p.req.masked_frames[0].at(b.y0 + 3, b.x0 + 3, 1) = 0.2;
        const auto report = leak_audit(utterance_for(p), p.req, {});
        CHECK_FALSE(report.channels[0].passed);
        CHECK(report.channels[1].passed);
        CHECK(report.channels[2].passed);
        CHECK(report.channels[3].passed);
        CHECK_FALSE(report.all_passed());
    }
    SECTION("channel 2: a rect too small for the mouth") {
        const RectMask tiny{0.4, 0.4, 0.6, 0.6};
        const Prepared p = prepare(43, 20, {5, 6}, {0, 17}, tiny);
        const auto report = leak_audit(utterance_for(p), p.req, {});
        CHECK(report.channels[0].passed);  // frames were masked with the same tiny rect
        CHECK_FALSE(report.channels[1].passed);
        CHECK(report.channels[2].passed);
        CHECK(report.channels[3].passed);
    }
    SECTION("channel 3: the crop transform read a mouth landmark") {
        const Prepared p = prepare(44, 20, {5, 6}, {0, 17});
        const auto report =
            leak_audit(utterance_for(p), p.req, {"left_eye", "chin_left", "right_eye"});
        CHECK(report.channels[0].passed);
        CHECK(report.channels[1].passed);
        CHECK_FALSE(report.channels[2].passed);
        CHECK(report.channels[2].detail.find("chin_left") != std::string::npos);
        CHECK(report.channels[3].passed);
    }
    SECTION("channel 4: reference aliasing a target") {
        Prepared p = prepare(45, 20, {5, 6}, {0, 17});
        p.req.reference_indices[1] = 6;
        const auto report = leak_audit(utterance_for(p), p.req, {});
        CHECK(report.channels[0].passed);
        CHECK(report.channels[1].passed);
        CHECK(report.channels[2].passed);
        CHECK_FALSE(report.channels[3].passed);
    }
}

TEST_CASE("paste back") {
    const TrackBundle track = generate_fixture(55, 16);
    const ImageBuf& frame = track.frames[4];
    auto [crop, t, lm_crop] = canonicalize_crop(frame, track.landmarks[4]);

    // rebuild the frame-space face polygon the renderer uses
    const AffineTransform inv = invert_affine(t);
    PolyMask poly_crop = build_face_polygon(lm_crop, kChinShiftRenderPx);
    PolyMask poly_frame;
    poly_frame.chin_shift = kChinShiftRenderPx;
    std::vector<Vec2> mapped;
    for (const Vec2& v : poly_crop.vertices) mapped.push_back(inv.apply(v));
    poly_frame.vertices = detail::convex_hull(std::move(mapped));
    const ImageBuf binary = rasterize_feathered(poly_frame, frame.height, frame.width, 0.0);

    SECTION("hard-edged paste of the original crop") {
        const ImageBuf out = paste_back(frame, crop, t, lm_crop, 0.0);
        const ImageBuf warped = warp_bicubic(crop, inv, frame.height, frame.width);
        double se = 0.0;
        long long n_in = 0;
        for (int y = 0; y < frame.height; ++y)
            for (int x = 0; x < frame.width; ++x)
                for (int c = 0; c < 3; ++c) {
                    if (binary.at(y, x) == 0.0) {
                        REQUIRE(out.at(y, x, c) == frame.at(y, x, c));
                    } else {
                        REQUIRE(out.at(y, x, c) ==
                                Catch::Approx(clamp01(warped.at(y, x, c))).margin(1e-12));
                        const double d = out.at(y, x, c) - frame.at(y, x, c);
                        se += d * d;
                        ++n_in;
                    }
                }
        REQUIRE(n_in > 0);
        // round trip through crop space and back stays faithful
        const double psnr_in = 10.0 * std::log10(1.0 / (se / n_in));
        CHECK(psnr_in >= 38.0);
    }
    SECTION("feathered paste only touches the dilated polygon") {
        const double sigma = 3.0;
        const ImageBuf out = paste_back(frame, crop, t, lm_crop, sigma);
        const int radius = static_cast<int>(std::ceil(3.0 * sigma));
        const auto dilated =
            testutil::dilate_chebyshev(binary_face_mask(binary), frame.height, frame.width, radius);
        for (int y = 0; y < frame.height; ++y)
            for (int x = 0; x < frame.width; ++x)
                for (int c = 0; c < 3; ++c)
                    if (out.at(y, x, c) != frame.at(y, x, c))
                        REQUIRE(dilated[static_cast<size_t>(y) * frame.width + x] == 1);
        // far corners never move
        for (int y : {0, frame.height - 1})
            for (int x : {0, frame.width - 1})
                for (int c = 0; c < 3; ++c) REQUIRE(out.at(y, x, c) == frame.at(y, x, c));
    }
    SECTION("singular transforms are rejected") {
        AffineTransform bad = t;
        bad.m = {0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
        CHECK_THROWS_AS(paste_back(frame, crop, bad, lm_crop), Error);
    }
}

TEST_CASE("render video splices synthesized cores") {
    const int n = 30;
    const TrackBundle track = generate_fixture(66, n);
    std::vector<ImageBuf> crops(n);
    std::vector<AffineTransform> transforms(n);
    std::vector<LandmarkSet> crop_lms(n);
    for (int i = 0; i < n; ++i) {
        auto [c, t, lm] = canonicalize_crop(track.frames[i], track.landmarks[i]);
        crops[i] = std::move(c);
        transforms[i] = t;
        crop_lms[i] = std::move(lm);
    }
    const RectPixelBounds b = rect_pixel_bounds(RectMask{}, 256, 256);

    SECTION("no chunks means no changes") {
        const auto out = render_video(track.frames, {}, transforms, crop_lms);
        REQUIRE(out.size() == track.frames.size());
        for (size_t i = 0; i < out.size(); ++i) REQUIRE(out[i].data == track.frames[i].data);
    }
    SECTION("one chunk rewrites exactly its core frames") {
        const auto spans = attach_buffers({{10, 20}}, n, 5);
        SynthesisResult result;
        for (int i = spans[0].first_frame(); i < spans[0].end_frame(); ++i) {
            ImageBuf crop = crops[i];
            // recolor the mouth so the core frames demonstrably change
            for (int y = b.y0; y < b.y1; ++y)
                for (int x = b.x0; x < b.x1; ++x)
                    for (int c = 0; c < 3; ++c) crop.at(y, x, c) = 0.2;
            result.frames.push_back(std::move(crop));
        }
        const double sigma = 3.0;
        std::vector<std::pair<ChunkSpan, SynthesisResult>> chunks;
        chunks.emplace_back(spans[0], std::move(result));
        const auto out = render_video(track.frames, chunks, transforms, crop_lms, sigma);
        for (int i = 0; i < n; ++i) {
            if (i < 10 || i >= 20) {
                REQUIRE(out[i].data == track.frames[i].data);
                continue;
            }
            REQUIRE(out[i].data != track.frames[i].data);
            // changed pixels stay within the dilated face polygon
            const AffineTransform inv = invert_affine(transforms[i]);
            PolyMask pc = build_face_polygon(crop_lms[i], kChinShiftRenderPx);
            PolyMask pf;
            pf.chin_shift = kChinShiftRenderPx;
            std::vector<Vec2> mapped;
            for (const Vec2& v : pc.vertices) mapped.push_back(inv.apply(v));
            pf.vertices = detail::convex_hull(std::move(mapped));
            const ImageBuf binary = rasterize_feathered(pf, 320, 320, 0.0);
            const auto dilated = testutil::dilate_chebyshev(
                binary_face_mask(binary), 320, 320, static_cast<int>(std::ceil(3.0 * sigma)));
            for (int y = 0; y < 320; ++y)
                for (int x = 0; x < 320; ++x)
                    for (int c = 0; c < 3; ++c)
                        if (out[i].at(y, x, c) != track.frames[i].at(y, x, c))
                            REQUIRE(dilated[static_cast<size_t>(y) * 320 + x] == 1);
        }
    }
    SECTION("overlapping cores are rejected") {
        const auto spans = attach_buffers({{5, 15}, {14, 25}}, n, 0);
        SynthesisResult r0, r1;
        r0.frames.assign(10, crops[5]);
        r1.frames.assign(11, crops[14]);
        std::vector<std::pair<ChunkSpan, SynthesisResult>> chunks;
        chunks.emplace_back(spans[0], std::move(r0));
        chunks.emplace_back(spans[1], std::move(r1));
        CHECK_THROWS_WITH(render_video(track.frames, chunks, transforms, crop_lms),
                          Catch::Matchers::ContainsSubstring("overlapping"));
    }
    SECTION("result size must match the span") {
        const auto spans = attach_buffers({{10, 20}}, n, 5);
        SynthesisResult result;
        result.frames.assign(3, crops[10]);
        std::vector<std::pair<ChunkSpan, SynthesisResult>> chunks;
        chunks.emplace_back(spans[0], std::move(result));
        CHECK_THROWS_WITH(render_video(track.frames, chunks, transforms, crop_lms),
                          Catch::Matchers::ContainsSubstring("result size"));
    }
    SECTION("core ranges must stay inside the track") {
        ChunkSpan span;
        span.core_start = 25;
        span.core_end = 35;
        SynthesisResult result;
        result.frames.assign(10, crops[0]);
        std::vector<std::pair<ChunkSpan, SynthesisResult>> chunks;
        chunks.emplace_back(span, std::move(result));
        CHECK_THROWS_AS(render_video(track.frames, chunks, transforms, crop_lms),
                        ValidationError);
    }
    SECTION("per-frame metadata counts must match") {
        std::vector<AffineTransform> short_t(transforms.begin(), transforms.end() - 1);
        CHECK_THROWS_AS(render_video(track.frames, {}, short_t, crop_lms), ValidationError);
    }
}
