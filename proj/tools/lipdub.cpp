#include <cstdint>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lipdub/chunking.hpp"
#include "lipdub/config.hpp"
#include "lipdub/error.hpp"
#include "lipdub/fixture.hpp"
#include "lipdub/io/bundle.hpp"
#include "lipdub/io/feature_io.hpp"
#include "lipdub/io/wav_io.hpp"
#include "lipdub/metrics.hpp"
#include "lipdub/pipeline.hpp"

namespace {

using lipdub::detail::json;

// 0 success, 2 rejected by filters, 3 leak-audit failure, 4 IO/schema error
template <typename F>
int guarded(F&& f) {
    try {
        return f();
    } catch (const lipdub::LeakViolation& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const lipdub::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const lipdub::SchemaError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const lipdub::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
}

lipdub::PipelineConfig load_or_default(const std::string& config_path) {
    if (config_path.empty()) return lipdub::default_config();
    return lipdub::load_config(config_path);
}

void write_report(const std::string& path, const json& j) {
    if (path.empty()) return;
    std::ofstream f(path);
    if (!f) throw lipdub::IoError("cannot open report path '" + path + "'");
    f << j.dump(2) << "\n";
}

// Whole-track utterance: canonical crops plus the audio that spans them.
lipdub::Utterance whole_track_utterance(const lipdub::TrackBundle& tb,
                                        const lipdub::CanonicalTrack& ct,
                                        const lipdub::AudioClip& audio) {
    lipdub::Utterance u;
    u.fps = tb.fps;
    u.language = tb.language;
    u.frames = ct.crops;
    u.per_frame_landmarks = ct.crop_landmarks;
    u.per_frame_transform = ct.transforms;
    const int n = static_cast<int>(tb.frames.size());
    for (int i = 0; i < n; ++i) u.source_frame_indices.push_back(i);
    const long long want = std::llround(n / tb.fps * audio.sample_rate);
    const long long have = static_cast<long long>(audio.samples.size());
    u.audio.sample_rate = audio.sample_rate;
    u.audio.samples.assign(audio.samples.begin(),
                           audio.samples.begin() + static_cast<size_t>(std::min(want, have)));
    u.source_sample_range = {0, static_cast<long long>(u.audio.samples.size())};
    u.validate();
    return u;
}

lipdub::AudioClip pick_audio(const lipdub::TrackBundle& tb, const std::string& audio_path,
                             const lipdub::PipelineConfig& cfg) {
    if (audio_path.empty()) return tb.audio;
    lipdub::AudioClip a = lipdub::load_wav(audio_path);
    if (a.sample_rate != cfg.audio.sample_rate_hz)
        throw lipdub::ValidationError("replacement audio must be " +
                                      std::to_string(cfg.audio.sample_rate_hz) +
                                      " Hz, no implicit resampling");
    return a;
}

json quality_json(const lipdub::TrackQualityReport& r) {
    return {{"vlap", r.vlap},
            {"min_eye_distance", r.min_eye_distance},
            {"fps_in", r.fps_in},
            {"fps_out", r.fps_out},
            {"sync_score", r.sync_score},
            {"accepted", r.accepted},
            {"reject_reason", r.reject_reason}};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"audio-driven video dubbing pipeline"};
    app.require_subcommand(1);

    // fixture
    auto* cmd_fixture = app.add_subcommand("fixture", "generate a synthetic talking-head bundle");
    std::string fx_out;
    uint64_t fx_seed = 0;
    int fx_frames = 100;
    double fx_fps = 25.0;
    cmd_fixture->add_option("--out", fx_out, "output bundle directory")->required();
    cmd_fixture->add_option("--seed", fx_seed, "rng seed");
    cmd_fixture->add_option("--frames", fx_frames, "frame count (>= 15)");
    cmd_fixture->add_option("--fps", fx_fps, "frame rate");

    // canonicalize
    auto* cmd_canon = app.add_subcommand("canonicalize", "warp a track into template-pose crops");
    std::string ca_in, ca_out, ca_config;
    int ca_jobs = 1;
    cmd_canon->add_option("--in", ca_in, "input track bundle directory")->required();
    cmd_canon->add_option("--out", ca_out, "output utterance bundle directory")->required();
    cmd_canon->add_option("--config", ca_config, "config file");
    cmd_canon->add_option("--jobs", ca_jobs, "worker threads");

    // filter
    auto* cmd_filter = app.add_subcommand("filter", "run track quality gates");
    std::string fl_in, fl_config, fl_report;
    cmd_filter->add_option("--in", fl_in, "input track bundle directory")->required();
    cmd_filter->add_option("--config", fl_config, "config file");
    cmd_filter->add_option("--report", fl_report, "write the quality report JSON here");

    // chunk
    auto* cmd_chunk = app.add_subcommand("chunk", "print the chunk plan for a frame count");
    int ch_frames = 0, ch_max = -1, ch_buffer = -1;
    std::string ch_config;
    cmd_chunk->add_option("--frames", ch_frames, "number of frames")->required();
    cmd_chunk->add_option("--max", ch_max, "max core frames per chunk");
    cmd_chunk->add_option("--buffer", ch_buffer, "context frames per side");
    cmd_chunk->add_option("--config", ch_config, "config file");

    // features
    auto* cmd_features = app.add_subcommand("features", "extract audio features from a wav file");
    std::string fe_audio, fe_out, fe_config, fe_kind;
    cmd_features->add_option("--audio", fe_audio, "input wav (16 kHz mono)")->required();
    cmd_features->add_option("--out", fe_out, "output feature file")->required();
    cmd_features->add_option("--kind", fe_kind, "logmel or mfcc (default from config)");
    cmd_features->add_option("--config", fe_config, "config file");

    // refs
    auto* cmd_refs = app.add_subcommand("refs", "select reference frames for a track");
    std::string rf_in, rf_config, rf_report;
    uint64_t rf_seed = 0;
    bool rf_seed_set = false;
    cmd_refs->add_option("--in", rf_in, "input track bundle directory")->required();
    cmd_refs->add_option("--config", rf_config, "config file");
    cmd_refs->add_option("--seed", rf_seed, "rng seed")->each([&](const std::string&) {
        rf_seed_set = true;
    });
    cmd_refs->add_option("--report", rf_report, "write the selection JSON here");

    // synth
    auto* cmd_synth = app.add_subcommand("synth", "synthesize mouth crops for a track");
    std::string sy_in, sy_out, sy_audio, sy_config, sy_synth;
    uint64_t sy_seed = 0;
    bool sy_seed_set = false;
    int sy_jobs = 0;
    cmd_synth->add_option("--in", sy_in, "input track bundle directory")->required();
    cmd_synth->add_option("--out", sy_out, "output utterance bundle directory")->required();
    cmd_synth->add_option("--audio", sy_audio, "replacement wav (default: track audio)");
    cmd_synth->add_option("--config", sy_config, "config file");
    cmd_synth->add_option("--synth", sy_synth, "synthesizer name (baseline, oracle, none)");
    cmd_synth->add_option("--seed", sy_seed, "rng seed")->each([&](const std::string&) {
        sy_seed_set = true;
    });
    cmd_synth->add_option("--jobs", sy_jobs, "worker threads");

    // render
    auto* cmd_render = app.add_subcommand("render", "paste synthesized crops back into frames");
    std::string re_in, re_crops, re_out, re_config;
    cmd_render->add_option("--in", re_in, "input track bundle directory")->required();
    cmd_render->add_option("--crops", re_crops, "utterance bundle with synthesized crops")
        ->required();
    cmd_render->add_option("--out", re_out, "output track bundle directory")->required();
    cmd_render->add_option("--config", re_config, "config file");

    // metrics
    auto* cmd_metrics = app.add_subcommand("metrics", "compare two bundles");
    std::string me_a, me_b, me_report;
    cmd_metrics->add_option("--a", me_a, "first bundle directory")->required();
    cmd_metrics->add_option("--b", me_b, "second bundle directory")->required();
    cmd_metrics->add_option("--report", me_report, "write the metric table JSON here");

    // pipeline
    auto* cmd_pipeline = app.add_subcommand("pipeline", "run the full dubbing pipeline");
    std::string pi_in, pi_out, pi_audio, pi_config, pi_synth, pi_report;
    uint64_t pi_seed = 0;
    bool pi_seed_set = false;
    int pi_jobs = 0;
    cmd_pipeline->add_option("--in", pi_in, "input track bundle directory")->required();
    cmd_pipeline->add_option("--out", pi_out, "output track bundle directory")->required();
    cmd_pipeline->add_option("--audio", pi_audio, "replacement wav (default: track audio)");
    cmd_pipeline->add_option("--config", pi_config, "config file");
    cmd_pipeline->add_option("--synth", pi_synth, "synthesizer name (baseline, oracle, none)");
    cmd_pipeline->add_option("--seed", pi_seed, "rng seed")->each([&](const std::string&) {
        pi_seed_set = true;
    });
    cmd_pipeline->add_option("--jobs", pi_jobs, "worker threads");
    cmd_pipeline->add_option("--report", pi_report, "write the run report JSON here");

    CLI11_PARSE(app, argc, argv);

    if (cmd_fixture->parsed()) {
        return guarded([&] {
            const lipdub::TrackBundle tb = lipdub::generate_fixture(fx_seed, fx_frames, fx_fps);
            lipdub::save_track_bundle(tb, fx_out);
            std::cout << "wrote " << fx_frames << " frames to " << fx_out << "\n";
            return 0;
        });
    }

    if (cmd_canon->parsed()) {
        return guarded([&] {
            const lipdub::PipelineConfig cfg = load_or_default(ca_config);
            lipdub::TrackBundle tb = lipdub::load_track_bundle(ca_in);
            tb.landmarks = lipdub::smooth_landmarks(tb.landmarks, cfg.landmark_smoothing_sigma_frames);
            const lipdub::CanonicalTrack ct =
                lipdub::canonicalize_track(tb, cfg, std::max(1, ca_jobs));
            lipdub::save_utterance(whole_track_utterance(tb, ct, tb.audio), ca_out);
            std::cout << "wrote " << tb.frames.size() << " canonical crops to " << ca_out << "\n";
            return 0;
        });
    }

    if (cmd_filter->parsed()) {
        return guarded([&] {
            const lipdub::PipelineConfig cfg = load_or_default(fl_config);
            const lipdub::TrackBundle tb = lipdub::load_track_bundle(fl_in);
            const lipdub::FilterOutcome fo = lipdub::filter_track(tb, cfg);
            const json j = quality_json(fo.report);
            std::cout << j.dump(2) << "\n";
            write_report(fl_report, j);
            return fo.report.accepted ? 0 : 2;
        });
    }

    if (cmd_chunk->parsed()) {
        return guarded([&] {
            const lipdub::PipelineConfig cfg = load_or_default(ch_config);
            const int max_len = ch_max > 0 ? ch_max : cfg.chunking.max_frames;
            const int buffer = ch_buffer >= 0 ? ch_buffer : cfg.chunking.buffer_frames;
            const auto spans =
                lipdub::attach_buffers(lipdub::split_track(ch_frames, max_len), ch_frames, buffer);
            json j = json::array();
            for (const auto& s : spans)
                j.push_back({{"core", {s.core_start, s.core_end}},
                             {"buffers", {s.buffer_pre, s.buffer_post}},
                             {"pad_audio", {s.pad_audio_pre, s.pad_audio_post}}});
            std::cout << j.dump(2) << "\n";
            return 0;
        });
    }

    if (cmd_features->parsed()) {
        return guarded([&] {
            lipdub::PipelineConfig cfg = load_or_default(fe_config);
            if (!fe_kind.empty()) cfg.audio.kind = fe_kind;
            const lipdub::AudioClip a = lipdub::load_wav(fe_audio);
            const lipdub::FeatureMatrix fm =
                cfg.feature_kind() == lipdub::FeatureKind::mfcc
                    ? lipdub::mfcc(a, cfg.audio.mfcc_coeffs)
                    : lipdub::log_mel(a, cfg.audio.mel_banks, cfg.audio.mel_fmin_hz,
                                      cfg.audio.mel_fmax_hz, cfg.audio.log_floor_eps);
            lipdub::save_features(fm, fe_out);
            std::cout << "wrote " << fm.rows << "x" << fm.cols << " " << cfg.audio.kind
                      << " features to " << fe_out << "\n";
            return 0;
        });
    }

    if (cmd_refs->parsed()) {
        return guarded([&] {
            lipdub::PipelineConfig cfg = load_or_default(rf_config);
            if (rf_seed_set) cfg.seed = rf_seed;
            lipdub::TrackBundle tb = lipdub::load_track_bundle(rf_in);
            tb.landmarks = lipdub::smooth_landmarks(tb.landmarks, cfg.landmark_smoothing_sigma_frames);
            const lipdub::CanonicalTrack ct = lipdub::canonicalize_track(tb, cfg, 1);
            std::vector<std::vector<double>> feats;
            feats.reserve(ct.crop_landmarks.size());
            for (const auto& lm : ct.crop_landmarks)
                feats.push_back(lipdub::frame_features(lm, cfg.crop_size));
            lipdub::RefSelection sel;
            if (cfg.references.strategy == "kmeans") {
                sel = lipdub::select_references_kmeans(feats, cfg.references.k, cfg.seed);
            } else {
                lipdub::BaselineStrategy strat = lipdub::BaselineStrategy::first;
                if (cfg.references.strategy == "random") strat = lipdub::BaselineStrategy::random;
                if (cfg.references.strategy == "uniform") strat = lipdub::BaselineStrategy::uniform;
                sel = lipdub::select_references_baseline(static_cast<int>(feats.size()),
                                                         cfg.references.k, strat, cfg.seed);
            }
            const json j = {{"strategy", sel.strategy},
                            {"indices", sel.indices},
                            {"diversity", lipdub::selection_diversity(feats, sel.indices)}};
            std::cout << j.dump(2) << "\n";
            write_report(rf_report, j);
            return 0;
        });
    }

    if (cmd_synth->parsed()) {
        return guarded([&] {
            lipdub::PipelineConfig cfg = load_or_default(sy_config);
            if (sy_seed_set) cfg.seed = sy_seed;
            if (sy_jobs > 0) cfg.jobs = sy_jobs;
            if (!sy_synth.empty()) cfg.synthesizer = sy_synth;
            cfg.validate();
            const lipdub::TrackBundle input = lipdub::load_track_bundle(sy_in);
            const lipdub::AudioClip dub = pick_audio(input, sy_audio, cfg);
            lipdub::FilterOutcome fo = lipdub::filter_track(input, cfg);
            if (!fo.report.accepted) {
                std::cerr << "rejected: " << fo.report.reject_reason << "\n";
                return 2;
            }
            const lipdub::TrackBundle& tb = fo.track;
            const lipdub::CanonicalTrack ct = lipdub::canonicalize_track(tb, cfg, cfg.jobs);
            const std::unique_ptr<lipdub::Synthesizer> synth =
                cfg.synthesizer == "none" ? nullptr
                                          : lipdub::make_synthesizer(cfg.synthesizer, cfg, ct);
            const lipdub::TrackSynthesis ts =
                lipdub::synthesize_track(tb, ct, dub, cfg, synth.get());
            if (!ts.leak_ok) {
                for (const auto& w : ts.work)
                    for (const auto& c : w.audit.channels)
                        if (!c.passed) std::cerr << "leak audit: " << c.detail << "\n";
                return 3;
            }
            lipdub::Utterance u = whole_track_utterance(tb, ct, dub);
            if (synth) {
                for (const auto& w : ts.work)
                    for (int f = w.span.core_start; f < w.span.core_end; ++f)
                        u.frames[f] = w.result.frames[f - w.span.first_frame()];
            }
            lipdub::save_utterance(u, sy_out);
            std::cout << "wrote " << u.frames.size() << " synthesized crops to " << sy_out << "\n";
            return 0;
        });
    }

    if (cmd_render->parsed()) {
        return guarded([&] {
            const lipdub::PipelineConfig cfg = load_or_default(re_config);
            const lipdub::TrackBundle tb = lipdub::load_track_bundle(re_in);
            const lipdub::Utterance u = lipdub::load_utterance(re_crops);
            if (std::abs(u.fps - tb.fps) > 1e-9)
                throw lipdub::ValidationError("render: crop bundle fps differs from track fps");
            lipdub::TrackBundle out = tb;
            for (size_t i = 0; i < u.frames.size(); ++i) {
                const int f = u.source_frame_indices[i];
                if (f < 0 || f >= static_cast<int>(tb.frames.size()))
                    throw lipdub::ValidationError("render: crop source frame out of range");
                out.frames[f] = lipdub::paste_back(tb.frames[f], u.frames[i],
                                                   u.per_frame_transform[i],
                                                   u.per_frame_landmarks[i], cfg.feather_sigma_px,
                                                   cfg.chin_shift_render_px, cfg.blend_mode());
            }
            out.audio = u.audio.samples.empty() ? tb.audio : u.audio;
            lipdub::save_track_bundle(out, re_out);
            std::cout << "rendered " << u.frames.size() << " frames into " << re_out << "\n";
            return 0;
        });
    }

    if (cmd_metrics->parsed()) {
        return guarded([&] {
            const auto load_frames = [](const std::string& dir) {
                const json manifest = lipdub::detail::parse_json_file(dir + "/manifest.json");
                const std::string kind = manifest.value("kind", "");
                if (kind == "utterance") return lipdub::load_utterance(dir).frames;
                return lipdub::load_track_bundle(dir).frames;
            };
            const std::vector<lipdub::ImageBuf> fa = load_frames(me_a);
            const std::vector<lipdub::ImageBuf> fb = load_frames(me_b);
            if (fa.size() != fb.size() || fa.empty())
                throw lipdub::ValidationError("metrics: bundles must hold the same nonzero frame count");
            double ssim_sum = 0.0, msssim_sum = 0.0, psnr_sum = 0.0, l1_sum = 0.0;
            double vlap_a = 0.0, vlap_b = 0.0;
            std::vector<std::vector<double>> emb_a, emb_b;
            for (size_t i = 0; i < fa.size(); ++i) {
                if (!fa[i].same_shape(fb[i]))
                    throw lipdub::ValidationError("metrics: frame shape mismatch at index " +
                                                  std::to_string(i));
                ssim_sum += lipdub::ssim(fa[i], fb[i]);
                msssim_sum += lipdub::ms_ssim(fa[i], fb[i]);
                psnr_sum += std::min(lipdub::psnr(fa[i], fb[i]), 99.0);
                l1_sum += lipdub::l1_mean(fa[i], fb[i]);
                const lipdub::ImageBuf ga = lipdub::to_gray(fa[i]);
                const lipdub::ImageBuf gb = lipdub::to_gray(fb[i]);
                vlap_a += lipdub::variance_of_laplacian(ga);
                vlap_b += lipdub::variance_of_laplacian(gb);
                lipdub::RectPixelBounds whole{0, fa[i].width, 0, fa[i].height};
                emb_a.push_back(lipdub::detail::mouth_region_embedding(fa[i], whole));
                emb_b.push_back(lipdub::detail::mouth_region_embedding(fb[i], whole));
            }
            const double n = static_cast<double>(fa.size());
            json j = {{"n_frames", fa.size()},
                      {"ssim_mean", ssim_sum / n},
                      {"ms_ssim_mean", msssim_sum / n},
                      {"psnr_mean", psnr_sum / n},
                      {"l1_mean", l1_sum / n},
                      {"vlap_a", vlap_a / n},
                      {"vlap_b", vlap_b / n}};
            if (fa.size() >= 2) {
                const lipdub::GaussianStats sa = lipdub::stats_from_embeddings(emb_a);
                const lipdub::GaussianStats sb = lipdub::stats_from_embeddings(emb_b);
                j["frechet"] = lipdub::frechet_distance(sa, sb);
            }
            std::cout << j.dump(2) << "\n";
            write_report(me_report, j);
            return 0;
        });
    }

    if (cmd_pipeline->parsed()) {
        return guarded([&] {
            lipdub::PipelineConfig cfg = load_or_default(pi_config);
            if (pi_seed_set) cfg.seed = pi_seed;
            if (pi_jobs > 0) cfg.jobs = pi_jobs;
            if (!pi_synth.empty()) cfg.synthesizer = pi_synth;
            const bool want_metrics = !pi_report.empty();
            const lipdub::PipelineOutcome outcome =
                lipdub::run_pipeline(pi_in, pi_out, cfg, pi_audio, want_metrics);
            write_report(pi_report, outcome.report);
            if (outcome.rejected) {
                std::cerr << "rejected: " << outcome.reject_reason << "\n";
                return 2;
            }
            if (!outcome.leak_ok) {
                std::cerr << "leak audit failed, see report\n";
                return 3;
            }
            std::cout << "pipeline ok, output in " << pi_out << "\n";
            return 0;
        });
    }

    return 0;
}
