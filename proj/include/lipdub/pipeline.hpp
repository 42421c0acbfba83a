#pragma once

#include <atomic>
#include <chrono>
#include <exception>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "lipdub/audio_features.hpp"
#include "lipdub/chunking.hpp"
#include "lipdub/config.hpp"
#include "lipdub/error.hpp"
#include "lipdub/geometry.hpp"
#include "lipdub/io/bundle.hpp"
#include "lipdub/masking.hpp"
#include "lipdub/metrics.hpp"
#include "lipdub/quality.hpp"
#include "lipdub/references.hpp"
#include "lipdub/rendering.hpp"
#include "lipdub/synthesis.hpp"
#include "lipdub/utterance.hpp"

namespace lipdub {

namespace detail {

// Index-sharded parallel loop. Each call f(i) may only write state owned by
// slot i, which keeps results independent of the worker count.
template <typename F>
inline void parallel_for(int n, int jobs, F&& f) {
    if (n <= 0) return;
    if (jobs <= 1 || n == 1) {
        for (int i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<int> next{0};
    std::mutex err_mutex;
    std::exception_ptr first_error;
    auto worker = [&]() {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= n) return;
            try {
                f(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    const int n_threads = std::min(jobs, n);
    std::vector<std::thread> threads;
    threads.reserve(n_threads);
    for (int t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

class StageClock {
  public:
    explicit StageClock(json* timings) : timings_(timings) {}

    template <typename F>
    auto run(const std::string& stage, F&& f) {
        const auto start = std::chrono::steady_clock::now();
        if constexpr (std::is_void_v<decltype(f())>) {
            f();
            record(stage, start);
        } else {
            auto result = f();
            record(stage, start);
            return result;
        }
    }

  private:
    void record(const std::string& stage, std::chrono::steady_clock::time_point start) {
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        timings_->push_back({{"stage", stage}, {"seconds", secs}});
    }

    json* timings_;
};

}  // namespace detail

// Filtering: fps normalization first (it changes the frame list), then the
// per-track quality gates in a fixed order so the first failure names the
// reject reason.
struct FilterOutcome {
    TrackQualityReport report;
    TrackBundle track;     // fps-normalized, landmarks smoothed
    std::vector<int> kept; // indices into the input track
};

inline FilterOutcome filter_track(const TrackBundle& input, const PipelineConfig& config) {
    input.validate();
    FilterOutcome out;
    out.report.fps_in = input.fps;
    out.report.fps_out = input.fps;

    const FpsDecision fps = normalize_fps(static_cast<int>(input.frames.size()), input.fps);
    if (!fps.accepted) {
        out.report.accepted = false;
        out.report.reject_reason = fps.reject_reason;
        return out;
    }
    out.report.fps_out = fps.fps_out;
    out.kept = fps.kept_indices;

    TrackBundle tb;
    tb.fps = fps.fps_out;
    tb.language = input.language;
    tb.audio = input.audio;
    tb.frames.reserve(out.kept.size());
    std::vector<LandmarkSet> raw;
    raw.reserve(out.kept.size());
    for (int idx : out.kept) {
        tb.frames.push_back(input.frames[idx]);
        raw.push_back(input.landmarks[idx]);
    }
    tb.landmarks = smooth_landmarks(raw, config.landmark_smoothing_sigma_frames);

    double min_eye = std::numeric_limits<double>::infinity();
    for (const auto& lm : tb.landmarks) min_eye = std::min(min_eye, eye_distance(lm));
    out.report.min_eye_distance = min_eye;
    if (min_eye < config.filters.min_eye_distance_px) {
        out.report.accepted = false;
        out.report.reject_reason = "eye_distance";
        out.track = std::move(tb);
        return out;
    }

    double vlap_sum = 0.0;
    for (const auto& f : tb.frames) vlap_sum += variance_of_laplacian(to_gray(f));
    out.report.vlap = vlap_sum / static_cast<double>(tb.frames.size());
    if (out.report.vlap < config.filters.vlap_min) {
        out.report.accepted = false;
        out.report.reject_reason = "blur";
        out.track = std::move(tb);
        return out;
    }

    out.report.sync_score = sync_score(tb.landmarks, tb.audio, tb.fps);
    if (out.report.sync_score < config.filters.sync_min) {
        out.report.accepted = false;
        out.report.reject_reason = "sync";
        out.track = std::move(tb);
        return out;
    }

    out.report.accepted = true;
    out.track = std::move(tb);
    return out;
}

struct CanonicalTrack {
    std::vector<ImageBuf> crops;
    std::vector<AffineTransform> transforms;
    std::vector<LandmarkSet> crop_landmarks;
    std::vector<std::string> landmark_trace; // names read to build the transforms
};

inline CanonicalTrack canonicalize_track(const TrackBundle& tb, const PipelineConfig& config,
                                         int jobs = 1) {
    CanonicalTrack ct;
    const int n = static_cast<int>(tb.frames.size());
    ct.crops.resize(n);
    ct.transforms.resize(n);
    ct.crop_landmarks.resize(n);
    detail::parallel_for(n, jobs, [&](int i) {
        auto [crop, t, lm] = canonicalize_crop(tb.frames[i], tb.landmarks[i], config.crop_size);
        ct.crops[i] = std::move(crop);
        ct.transforms[i] = t;
        ct.crop_landmarks[i] = std::move(lm);
    });
    const auto& align = landmark_names::alignment();
    ct.landmark_trace.assign(align.begin(), align.end());
    return ct;
}

// Chunk plan that always leaves out-of-span reference candidates: cap the
// chunk length so every track splits into at least two chunks, and shrink
// buffers on tiny tracks until the widest span leaves at least one frame
// outside it.
struct ChunkPlan {
    int max_core_len = 0;
    int buffer = 0;
    std::vector<ChunkSpan> spans;
};

inline ChunkPlan plan_chunks(int n_frames, const PipelineConfig& config) {
    if (n_frames < 2) throw ValidationError("plan_chunks: need at least 2 frames");
    ChunkPlan plan;
    plan.max_core_len = std::min(config.chunking.max_frames, (n_frames + 1) / 2);
    const int spare = (n_frames - plan.max_core_len - 1) / 2;
    plan.buffer = std::min(config.chunking.buffer_frames, std::max(0, spare));
    plan.spans = attach_buffers(split_track(n_frames, plan.max_core_len), n_frames, plan.buffer);
    return plan;
}

struct ChunkWork {
    ChunkSpan span;
    Utterance utterance;          // masked target crops + audio window
    SynthesisRequest request;
    RefSelection refs;
    SynthesisResult result;
    LeakAuditReport audit;
};

inline std::unique_ptr<Synthesizer> make_synthesizer(const std::string& name,
                                                     const PipelineConfig& config,
                                                     const CanonicalTrack& ct) {
    if (name == "baseline")
        return std::make_unique<BaselineReferenceBlend>(config.attention_sign());
    if (name == "oracle") return std::make_unique<OracleSynthesizer>(ct.crops);
    throw ValidationError("make_synthesizer: unknown synthesizer '" + name + "'");
}

struct PipelineOutcome {
    bool rejected = false;
    std::string reject_reason;
    bool leak_ok = true;
    TrackQualityReport quality;
    detail::json report;
};

namespace detail {

inline long long sample_at_frame(double frame, double fps, int sample_rate) {
    return std::llround(frame / fps * sample_rate);
}

inline Utterance build_chunk_utterance(const ChunkSpan& span, const TrackBundle& tb,
                                       const CanonicalTrack& ct, const AudioClip& dub_audio,
                                       const RectMask& rect, int buffer) {
    Utterance u;
    u.fps = tb.fps;
    u.language = tb.language;
    const int lo = span.first_frame();
    const int hi = span.end_frame();
    u.frames.reserve(hi - lo);
    u.per_frame_landmarks.reserve(hi - lo);
    u.per_frame_transform.reserve(hi - lo);
    u.source_frame_indices.reserve(hi - lo);
    for (int f = lo; f < hi; ++f) {
        u.frames.push_back(apply_rect_mask(ct.crops[f], rect));
        u.per_frame_landmarks.push_back(ct.crop_landmarks[f]);
        u.per_frame_transform.push_back(ct.transforms[f]);
        u.source_frame_indices.push_back(f);
    }
    u.audio = chunk_audio_window(dub_audio, span, tb.fps, buffer);
    // sample coordinates on the ideal (padding included) timeline
    const long long s0 = sample_at_frame(span.core_start - buffer, tb.fps, dub_audio.sample_rate);
    u.source_sample_range = {s0, s0 + static_cast<long long>(u.audio.samples.size())};
    u.validate();
    return u;
}

}  // namespace detail

struct TrackSynthesis {
    ChunkPlan plan;
    FeatureMatrix features;  // of the replacement audio
    std::vector<ChunkWork> work;
    bool leak_ok = true;
};

// Chunk the track, extract audio features, pick per-chunk references from
// outside each chunk's span, audit every request, and (when a synthesizer is
// given) synthesize mouth crops. Deterministic for a fixed seed regardless of
// the worker count.
inline TrackSynthesis synthesize_track(const TrackBundle& tb, const CanonicalTrack& ct,
                                       const AudioClip& dub_audio, const PipelineConfig& config,
                                       const Synthesizer* synth) {
    const int n = static_cast<int>(tb.frames.size());
    TrackSynthesis ts;
    ts.plan = plan_chunks(n, config);
    ts.features = config.feature_kind() == FeatureKind::mfcc
                      ? mfcc(dub_audio, config.audio.mfcc_coeffs)
                      : log_mel(dub_audio, config.audio.mel_banks, config.audio.mel_fmin_hz,
                                config.audio.mel_fmax_hz, config.audio.log_floor_eps);

    std::vector<std::vector<double>> pose_features(n);
    for (int i = 0; i < n; ++i)
        pose_features[i] = frame_features(ct.crop_landmarks[i], config.crop_size);

    const RectMask rect = config.rect();
    const int n_chunks = static_cast<int>(ts.plan.spans.size());
    ts.work.resize(n_chunks);
    detail::parallel_for(n_chunks, config.jobs, [&](int c) {
        ChunkWork& w = ts.work[c];
        w.span = ts.plan.spans[c];
        w.utterance = detail::build_chunk_utterance(w.span, tb, ct, dub_audio, rect, ts.plan.buffer);

        // reference pool: frames wholly outside the chunk's target span
        std::vector<int> pool;
        std::vector<std::vector<double>> pool_feats;
        for (int f = 0; f < n; ++f) {
            if (f >= w.span.first_frame() && f < w.span.end_frame()) continue;
            pool.push_back(f);
            pool_feats.push_back(pose_features[f]);
        }
        if (pool.empty()) throw ValidationError("synthesize_track: empty reference pool");
        const uint64_t chunk_seed = config.seed + 0x9e3779b97f4a7c15ULL * static_cast<uint64_t>(c + 1);
        RefSelection sel;
        if (config.references.strategy == "kmeans") {
            sel = select_references_kmeans(pool_feats, config.references.k, chunk_seed);
        } else {
            BaselineStrategy strat = BaselineStrategy::first;
            if (config.references.strategy == "first") strat = BaselineStrategy::first;
            else if (config.references.strategy == "random") strat = BaselineStrategy::random;
            else if (config.references.strategy == "uniform") strat = BaselineStrategy::uniform;
            else
                throw ValidationError("synthesize_track: unknown reference strategy '" +
                                      config.references.strategy + "'");
            sel = select_references_baseline(static_cast<int>(pool.size()), config.references.k,
                                             strat, chunk_seed);
        }
        w.refs.strategy = sel.strategy;
        for (int local : sel.indices) w.refs.indices.push_back(pool[local]);

        SynthesisRequest& req = w.request;
        req.rect = rect;
        req.fps = tb.fps;
        for (int i = 0; i < w.span.n_frames(); ++i) {
            const int f = w.span.first_frame() + i;
            req.masked_frames.push_back(w.utterance.frames[i]);
            req.frame_indices.push_back(f);
            req.audio_windows.push_back(
                window_for_frame(ts.features, f, tb.fps, config.audio.window_frames));
        }
        for (int f : w.refs.indices) {
            req.reference_frames.push_back(apply_reference_mask(ct.crops[f], rect));
            req.reference_indices.push_back(f);
        }

        w.audit = leak_audit(w.utterance, req, ct.landmark_trace, config.leak_min_mask_area_fraction);
        if (synth) w.result = synthesize(req, *synth);
    });
    for (const ChunkWork& w : ts.work) ts.leak_ok = ts.leak_ok && w.audit.all_passed();
    return ts;
}

// Runs filter, canonicalize, chunk, feature extraction, reference selection,
// synthesis, leak audit, and paste-back over a track bundle directory. Writes
// the dubbed track bundle to output_dir unless the track is rejected.
// replacement_audio empty means redub with the track's own audio.
inline PipelineOutcome run_pipeline(const std::string& input_dir, const std::string& output_dir,
                                    const PipelineConfig& config,
                                    const std::string& replacement_audio_path = "",
                                    bool report_metrics = false) {
    config.validate();
    PipelineOutcome out;
    out.report = detail::json::object();
    out.report["schema_version"] = 1;
    out.report["synthesizer"] = config.synthesizer;
    out.report["seed"] = config.seed;
    out.report["jobs"] = config.jobs;
    detail::json timings = detail::json::array();
    detail::StageClock clock(&timings);

    const TrackBundle input = clock.run("load", [&] { return load_track_bundle(input_dir); });

    AudioClip dub_audio = input.audio;
    if (!replacement_audio_path.empty()) {
        dub_audio = clock.run("load_audio", [&] { return load_wav(replacement_audio_path); });
        if (dub_audio.sample_rate != config.audio.sample_rate_hz)
            throw ValidationError("run_pipeline: replacement audio must be " +
                                  std::to_string(config.audio.sample_rate_hz) +
                                  " Hz, no implicit resampling");
    }

    FilterOutcome filt = clock.run("filter", [&] { return filter_track(input, config); });
    out.quality = filt.report;
    out.report["quality"] = {{"vlap", filt.report.vlap},
                             {"min_eye_distance", filt.report.min_eye_distance},
                             {"fps_in", filt.report.fps_in},
                             {"fps_out", filt.report.fps_out},
                             {"sync_score", filt.report.sync_score},
                             {"accepted", filt.report.accepted},
                             {"reject_reason", filt.report.reject_reason}};
    if (!filt.report.accepted) {
        out.rejected = true;
        out.reject_reason = filt.report.reject_reason;
        out.report["accepted"] = false;
        out.report["timings"] = std::move(timings);
        return out;
    }
    out.report["accepted"] = true;

    TrackBundle& tb = filt.track;
    const int n = static_cast<int>(tb.frames.size());
    out.report["n_frames"] = n;
    out.report["fps"] = tb.fps;

    const CanonicalTrack ct = clock.run(
        "canonicalize", [&] { return canonicalize_track(tb, config, config.jobs); });

    const std::unique_ptr<Synthesizer> synth =
        config.synthesizer == "none" ? nullptr : make_synthesizer(config.synthesizer, config, ct);

    TrackSynthesis ts = clock.run(
        "synthesize", [&] { return synthesize_track(tb, ct, dub_audio, config, synth.get()); });
    out.report["chunking"] = {{"max_core_len", ts.plan.max_core_len},
                              {"buffer", ts.plan.buffer},
                              {"n_chunks", ts.plan.spans.size()}};
    std::vector<ChunkWork>& work = ts.work;

    detail::json chunk_report = detail::json::array();
    for (const ChunkWork& w : work) {
        detail::json audits = detail::json::object();
        for (int ch = 0; ch < 4; ++ch) {
            const auto& cr = w.audit.channels[ch];
            audits["channel_" + std::to_string(ch + 1)] = {{"passed", cr.passed},
                                                           {"detail", cr.detail}};
        }
        out.leak_ok = out.leak_ok && w.audit.all_passed();
        chunk_report.push_back({{"core", {w.span.core_start, w.span.core_end}},
                                {"buffers", {w.span.buffer_pre, w.span.buffer_post}},
                                {"pad_audio", {w.span.pad_audio_pre, w.span.pad_audio_post}},
                                {"references", w.refs.indices},
                                {"leak_audit", std::move(audits)}});
    }
    out.report["chunks"] = std::move(chunk_report);
    out.report["leak_audit_all_passed"] = out.leak_ok;

    std::vector<ImageBuf> rendered;
    if (synth) {
        rendered = clock.run("render", [&] {
            std::vector<std::pair<ChunkSpan, SynthesisResult>> pieces;
            pieces.reserve(work.size());
            for (ChunkWork& w : work) pieces.emplace_back(w.span, std::move(w.result));
            return render_video(tb.frames, pieces, ct.transforms, ct.crop_landmarks,
                                config.feather_sigma_px, config.chin_shift_render_px,
                                config.blend_mode());
        });
    } else {
        rendered = tb.frames;  // stage isolation: no synthesizer, identity video
    }

    if (report_metrics) {
        clock.run("metrics", [&] {
            double psnr_sum = 0.0, ssim_sum = 0.0, vlap_in = 0.0, vlap_out = 0.0;
            std::vector<std::vector<double>> emb_in, emb_out;
            for (int i = 0; i < n; ++i) {
                const ImageBuf gin = to_gray(tb.frames[i]);
                const ImageBuf gout = to_gray(rendered[i]);
                RectPixelBounds whole;
                whole.x0 = 0;
                whole.x1 = gin.width;
                whole.y0 = 0;
                whole.y1 = gin.height;
                psnr_sum += std::min(psnr(tb.frames[i], rendered[i]), 99.0);
                ssim_sum += ssim(gin, gout);
                vlap_in += variance_of_laplacian(gin);
                vlap_out += variance_of_laplacian(gout);
                emb_in.push_back(detail::mouth_region_embedding(tb.frames[i], whole));
                emb_out.push_back(detail::mouth_region_embedding(rendered[i], whole));
            }
            const GaussianStats sa = stats_from_embeddings(emb_in);
            const GaussianStats sb = stats_from_embeddings(emb_out);
            out.report["metrics_vs_input"] = {{"psnr_mean", psnr_sum / n},
                                              {"ssim_gray_mean", ssim_sum / n},
                                              {"vlap_in", vlap_in / n},
                                              {"vlap_out", vlap_out / n},
                                              {"frechet", frechet_distance(sa, sb)}};
        });
    }

    clock.run("save", [&] {
        TrackBundle out_tb;
        out_tb.frames = std::move(rendered);
        out_tb.landmarks = tb.landmarks;
        out_tb.audio = dub_audio;
        out_tb.fps = tb.fps;
        out_tb.language = tb.language;
        save_track_bundle(out_tb, output_dir);
    });

    out.report["timings"] = std::move(timings);
    return out;
}

}  // namespace lipdub
