#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <vector>

#include "lipdub/fixture.hpp"
#include "lipdub/io/bundle.hpp"
#include "lipdub/io/wav_io.hpp"
#include "lipdub/pipeline.hpp"
#include "oracles.hpp"

using namespace lipdub;

namespace {

// A 60 fps talking-head bundle with audio laid out on the 60 fps timeline.
TrackBundle sixty_fps_bundle(int n_frames) {
    TrackBundle tb;
    tb.fps = 60.0;
    tb.language = "synthetic";
    const fixture::FramePose pose{{160.0, 160.0}, 1.0, 0.0};
    const int per_frame = static_cast<int>(std::lround(16000.0 / tb.fps));
    for (int i = 0; i < n_frames; ++i) {
        const double env = 0.5 + 0.5 * std::sin(2.0 * M_PI * 0.9 * i / tb.fps);
        const double g = 4.0 + 20.0 * env;
        tb.frames.push_back(fixture::render_frame(pose, g));
        tb.landmarks.push_back(testutil::posed_landmarks(pose, g));
        for (int s = 0; s < per_frame; ++s)
            tb.audio.samples.push_back(0.8 * env *
                                       std::sin(2.0 * M_PI * 220.0 * s / 16000.0));
    }
    tb.audio.sample_rate = 16000;
    return tb;
}

bool frames_identical(const std::vector<ImageBuf>& a, const std::vector<ImageBuf>& b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i)
        if (a[i].data != b[i].data) return false;
    return true;
}

}  // namespace

TEST_CASE("fixture generation") {
    SECTION("identical seeds reproduce the track bit for bit") {
        const TrackBundle a = generate_fixture(3, 16);
        const TrackBundle b = generate_fixture(3, 16);
        REQUIRE(frames_identical(a.frames, b.frames));
        REQUIRE(a.audio.samples == b.audio.samples);
        for (size_t i = 0; i < a.landmarks.size(); ++i)
            for (const auto& [name, p] : a.landmarks[i].points) {
                REQUIRE(p.x == b.landmarks[i].get(name).x);
                REQUIRE(p.y == b.landmarks[i].get(name).y);
            }
    }
    SECTION("different seeds move the face") {
        const TrackBundle a = generate_fixture(3, 16);
        const TrackBundle b = generate_fixture(4, 16);
        CHECK_FALSE(frames_identical(a.frames, b.frames));
    }
    SECTION("track length and fps bounds") {
        CHECK_THROWS_AS(generate_fixture(1, 14), ValidationError);
        CHECK_THROWS_AS(generate_fixture(1, 30, 22.0), ValidationError);
        CHECK_THROWS_AS(generate_fixture(1, 30, 31.0), ValidationError);
        const TrackBundle t = generate_fixture(1, 15, 23.0);
        CHECK(t.frames.size() == 15);
        t.validate();
    }
}

TEST_CASE("track filtering") {
    const PipelineConfig config;
    SECTION("the synthetic fixture passes every gate") {
        const TrackBundle tb = generate_fixture(1, 30);
        const FilterOutcome fo = filter_track(tb, config);
        REQUIRE(fo.report.accepted);
        CHECK(fo.report.reject_reason.empty());
        CHECK(fo.report.fps_in == 25.0);
        CHECK(fo.report.fps_out == 25.0);
        CHECK(fo.report.sync_score > 0.9);
        CHECK(fo.report.vlap > config.filters.vlap_min);
        CHECK(fo.report.min_eye_distance >= config.filters.min_eye_distance_px);
        CHECK(fo.track.frames.size() == 30);
        CHECK(fo.kept.size() == 30);
        for (int i = 0; i < 30; ++i) CHECK(fo.kept[i] == i);
    }
    SECTION("tiny faces are rejected for eye distance") {
        TrackBundle tb = generate_fixture(2, 30);
        for (auto& lm : tb.landmarks) {
            const Vec2 em = lm.get("eye_midpoint");
            for (auto& [name, p] : lm.points)
                p = {em.x + 0.5 * (p.x - em.x), em.y + 0.5 * (p.y - em.y)};
        }
        const FilterOutcome fo = filter_track(tb, config);
        REQUIRE_FALSE(fo.report.accepted);
        CHECK(fo.report.reject_reason == "eye_distance");
    }
    SECTION("featureless frames are rejected as blurry") {
        TrackBundle tb = generate_fixture(2, 30);
        for (auto& f : tb.frames)
            for (auto& v : f.data) v = 0.5;
        const FilterOutcome fo = filter_track(tb, config);
        REQUIRE_FALSE(fo.report.accepted);
        CHECK(fo.report.reject_reason == "blur");
    }
    SECTION("a 60 fps track is halved to 30 fps and accepted") {
        const TrackBundle tb = sixty_fps_bundle(40);
        const FilterOutcome fo = filter_track(tb, config);
        REQUIRE(fo.report.accepted);
        CHECK(fo.report.fps_in == 60.0);
        CHECK(fo.report.fps_out == 30.0);
        REQUIRE(fo.kept.size() == 20);
        for (size_t j = 0; j < fo.kept.size(); ++j) CHECK(fo.kept[j] == static_cast<int>(2 * j));
        CHECK(fo.track.frames.size() == 20);
        CHECK(fo.track.fps == 30.0);
    }
    SECTION("a 22 fps track cannot be normalized") {
        TrackBundle tb = generate_fixture(2, 30, 25.0);
        tb.fps = 22.0;
        const FilterOutcome fo = filter_track(tb, config);
        REQUIRE_FALSE(fo.report.accepted);
        CHECK(fo.report.reject_reason == "fps_too_low");
    }
    SECTION("audio uncorrelated with the mouth is rejected for sync") {
        TrackBundle tb = generate_fixture(2, 30);
        for (size_t s = 0; s < tb.audio.samples.size(); ++s)
            tb.audio.samples[s] = 0.8 * std::sin(2.0 * M_PI * 220.0 * s / 16000.0);
        const FilterOutcome fo = filter_track(tb, config);
        REQUIRE_FALSE(fo.report.accepted);
        CHECK(fo.report.reject_reason == "sync");
        CHECK(fo.report.sync_score < 0.8);
    }
}

TEST_CASE("chunk planning") {
    const PipelineConfig config;
    SECTION("15 frames split into two chunks with trimmed buffers") {
        const ChunkPlan plan = plan_chunks(15, config);
        CHECK(plan.max_core_len == 8);
        CHECK(plan.buffer == 3);
        REQUIRE(plan.spans.size() == 2);
        CHECK(plan.spans[0].core_start == 0);
        CHECK(plan.spans[0].core_end == 8);
        CHECK(plan.spans[1].core_start == 8);
        CHECK(plan.spans[1].core_end == 15);
    }
    SECTION("100 frames make two 50-frame chunks with full buffers") {
        const ChunkPlan plan = plan_chunks(100, config);
        CHECK(plan.max_core_len == 50);
        CHECK(plan.buffer == 10);
        REQUIRE(plan.spans.size() == 2);
        CHECK(plan.spans[0].core_end == 50);
        CHECK(plan.spans[1].core_end == 100);
    }
    SECTION("two frames still split, with no buffers left") {
        const ChunkPlan plan = plan_chunks(2, config);
        CHECK(plan.max_core_len == 1);
        CHECK(plan.buffer == 0);
        REQUIRE(plan.spans.size() == 2);
    }
    SECTION("fewer than two frames is an error") {
        CHECK_THROWS_AS(plan_chunks(1, config), ValidationError);
    }
    SECTION("no chunk's span ever swallows the whole track") {
        for (int n = 2; n <= 60; ++n) {
            const ChunkPlan plan = plan_chunks(n, config);
            REQUIRE(plan.spans.size() >= 2);
            for (const ChunkSpan& s : plan.spans) REQUIRE(s.n_frames() < n);
        }
    }
}

TEST_CASE("track synthesis stage") {
    const PipelineConfig config;
    const TrackBundle raw = generate_fixture(7, 24);
    const FilterOutcome fo = filter_track(raw, config);
    REQUIRE(fo.report.accepted);
    const CanonicalTrack ct = canonicalize_track(fo.track, config);

    SECTION("crops, transforms and traces line up") {
        REQUIRE(ct.crops.size() == 24);
        REQUIRE(ct.transforms.size() == 24);
        REQUIRE(ct.crop_landmarks.size() == 24);
        CHECK(ct.crops[0].height == config.crop_size);
        CHECK(ct.crops[0].width == config.crop_size);
        const auto& allowed = landmark_names::alignment();
        for (const std::string& name : ct.landmark_trace)
            CHECK(std::find(allowed.begin(), allowed.end(), name) != allowed.end());
    }
    SECTION("references come from outside each chunk's span and audits pass") {
        const TrackSynthesis ts = synthesize_track(fo.track, ct, fo.track.audio, config, nullptr);
        CHECK(ts.leak_ok);
        CHECK(ts.features.kind == FeatureKind::logmel);
        REQUIRE(ts.work.size() == ts.plan.spans.size());
        REQUIRE(ts.work.size() >= 2);
        for (const ChunkWork& w : ts.work) {
            REQUIRE(!w.refs.indices.empty());
            for (int r : w.refs.indices) {
                CHECK((r < w.span.first_frame() || r >= w.span.end_frame()));
            }
            CHECK(w.request.masked_frames.size() == static_cast<size_t>(w.span.n_frames()));
            CHECK(w.request.audio_windows.size() == w.request.masked_frames.size());
            CHECK_NOTHROW(w.utterance.validate());
            CHECK(w.audit.all_passed());
            CHECK(w.result.frames.empty());  // no synthesizer attached
        }
    }
    SECTION("a parallel run reproduces the serial chunk work") {
        PipelineConfig par = config;
        par.jobs = 4;
        const TrackSynthesis a = synthesize_track(fo.track, ct, fo.track.audio, config, nullptr);
        const TrackSynthesis b = synthesize_track(fo.track, ct, fo.track.audio, par, nullptr);
        REQUIRE(a.work.size() == b.work.size());
        for (size_t c = 0; c < a.work.size(); ++c) {
            CHECK(a.work[c].refs.indices == b.work[c].refs.indices);
            CHECK(a.work[c].span == b.work[c].span);
            CHECK(a.work[c].utterance.audio.samples == b.work[c].utterance.audio.samples);
        }
    }
    SECTION("unknown reference strategies and synthesizers are rejected") {
        PipelineConfig bad = config;
        bad.references.strategy = "psychic";
        CHECK_THROWS_AS(synthesize_track(fo.track, ct, fo.track.audio, bad, nullptr),
                        ValidationError);
        CHECK_THROWS_AS(make_synthesizer("imaginary", config, ct), ValidationError);
    }
}

TEST_CASE("end-to-end pipeline runs") {
    const testutil::TempDir tmp;
    const std::string input_dir = tmp.sub("input");
    const TrackBundle tb = generate_fixture(9, 24);
    save_track_bundle(tb, input_dir);

    PipelineConfig config;

    SECTION("worker count never changes the output") {
        PipelineConfig c1 = config;
        c1.synthesizer = "baseline";
        c1.jobs = 1;
        PipelineConfig c4 = c1;
        c4.jobs = 4;
        const PipelineOutcome o1 = run_pipeline(input_dir, tmp.sub("out_j1"), c1);
        const PipelineOutcome o4 = run_pipeline(input_dir, tmp.sub("out_j4"), c4);
        REQUIRE_FALSE(o1.rejected);
        REQUIRE_FALSE(o4.rejected);
        CHECK(o1.leak_ok);
        CHECK(o4.leak_ok);
        const TrackBundle r1 = load_track_bundle(tmp.sub("out_j1"));
        const TrackBundle r4 = load_track_bundle(tmp.sub("out_j4"));
        REQUIRE(frames_identical(r1.frames, r4.frames));
        CHECK(r1.audio.samples == r4.audio.samples);
        CHECK(o1.report["chunks"] == o4.report["chunks"]);
    }
    SECTION("the none synthesizer passes video through untouched") {
        PipelineConfig none = config;
        none.synthesizer = "none";
        const PipelineOutcome o =
            run_pipeline(input_dir, tmp.sub("out_none"), none, "", true);
        REQUIRE_FALSE(o.rejected);
        const TrackBundle in = load_track_bundle(input_dir);
        const TrackBundle out = load_track_bundle(tmp.sub("out_none"));
        REQUIRE(frames_identical(in.frames, out.frames));

        // report shape
        CHECK(o.report["schema_version"] == 1);
        CHECK(o.report["accepted"] == true);
        REQUIRE(o.report.contains("quality"));
        CHECK(o.report["quality"].contains("vlap"));
        CHECK(o.report["quality"].contains("sync_score"));
        REQUIRE(o.report.contains("chunking"));
        CHECK(o.report["chunking"]["n_chunks"].get<int>() >= 2);
        REQUIRE(o.report.contains("chunks"));
        for (const auto& ch : o.report["chunks"]) {
            REQUIRE(ch.contains("leak_audit"));
            for (int k = 1; k <= 4; ++k) {
                const auto& audit = ch["leak_audit"]["channel_" + std::to_string(k)];
                CHECK(audit["passed"] == true);
            }
        }
        CHECK(o.report["leak_audit_all_passed"] == true);
        REQUIRE(o.report.contains("metrics_vs_input"));
        CHECK(o.report["metrics_vs_input"]["psnr_mean"].get<double>() == 99.0);
        CHECK(o.report["metrics_vs_input"]["ssim_gray_mean"].get<double>() ==
              Catch::Approx(1.0).margin(1e-9));
        CHECK(o.report["metrics_vs_input"]["frechet"].get<double>() ==
              Catch::Approx(0.0).margin(1e-6));
    }
    SECTION("a failed gate rejects the track and writes no bundle") {
        PipelineConfig strict = config;
        strict.filters.vlap_min = 1.0;
        const std::string out_dir = tmp.sub("out_rejected");
        const PipelineOutcome o = run_pipeline(input_dir, out_dir, strict);
        REQUIRE(o.rejected);
        CHECK(o.reject_reason == "blur");
        CHECK(o.report["accepted"] == false);
        CHECK_FALSE(std::filesystem::exists(out_dir));
    }
    SECTION("replacement audio must already be at the pipeline rate") {
        AudioClip wrong;
        wrong.sample_rate = 44100;
        wrong.samples.assign(44100, 0.1);
        const std::string wav_path = tmp.sub("wrong.wav");
        save_wav(wrong, wav_path);
        CHECK_THROWS_WITH(run_pipeline(input_dir, tmp.sub("out_wrong"), config, wav_path),
                          Catch::Matchers::ContainsSubstring("no implicit resampling"));
    }
    SECTION("a proper replacement dub is accepted and stored with the output") {
        AudioClip dub;
        dub.sample_rate = 16000;
        const auto n = static_cast<size_t>(std::llround(24 / 25.0 * 16000));
        dub.samples.resize(n);
        for (size_t s = 0; s < n; ++s) {
            const double env =
                0.5 + 0.5 * std::sin(2.0 * M_PI * 0.9 * (s / 16000.0) + 0.3);
            dub.samples[s] = 0.8 * env * std::sin(2.0 * M_PI * 220.0 * s / 16000.0);
        }
        const std::string wav_path = tmp.sub("dub.wav");
        save_wav(dub, wav_path);
        PipelineConfig c = config;
        c.synthesizer = "baseline";
        const PipelineOutcome o = run_pipeline(input_dir, tmp.sub("out_dub"), c, wav_path);
        REQUIRE_FALSE(o.rejected);
        CHECK(o.leak_ok);
        const TrackBundle out = load_track_bundle(tmp.sub("out_dub"));
        REQUIRE(out.audio.samples.size() == dub.samples.size());
        for (size_t s = 0; s < dub.samples.size(); s += 997)
            CHECK(out.audio.samples[s] == Catch::Approx(dub.samples[s]).margin(1.0 / 32768 + 1e-9));
    }
    SECTION("identical runs are identical") {
        PipelineConfig c = config;
        c.synthesizer = "baseline";
        const PipelineOutcome a = run_pipeline(input_dir, tmp.sub("rep_a"), c);
        const PipelineOutcome b = run_pipeline(input_dir, tmp.sub("rep_b"), c);
        const TrackBundle ra = load_track_bundle(tmp.sub("rep_a"));
        const TrackBundle rb = load_track_bundle(tmp.sub("rep_b"));
        REQUIRE(frames_identical(ra.frames, rb.frames));
        CHECK(a.report["chunks"] == b.report["chunks"]);
    }
}
