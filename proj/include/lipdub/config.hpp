#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "lipdub/audio_features.hpp"
#include "lipdub/error.hpp"
#include "lipdub/io/json_util.hpp"
#include "lipdub/masking.hpp"
#include "lipdub/metrics.hpp"
#include "lipdub/rendering.hpp"

namespace lipdub {

struct FilterConfig {
    double min_eye_distance_px = 80.0;
    double fps_min = 23.0;
    double fps_max = 30.0;
    double vlap_min = 2e-5;  // calibrated against the synthetic fixture
    double sync_min = 0.8;

    bool operator==(const FilterConfig&) const = default;
};

struct ChunkingConfig {
    int max_frames = 240;
    int buffer_frames = 10;

    bool operator==(const ChunkingConfig&) const = default;
};

struct AudioConfig {
    int sample_rate_hz = 16000;
    int mel_banks = 80;
    double feature_rate_hz = 100.0;
    int window_frames = 24;
    double mel_fmin_hz = 125.0;
    double mel_fmax_hz = 7600.0;
    std::string kind = "logmel";  // logmel | mfcc
    int mfcc_coeffs = 13;
    double log_floor_eps = 1e-10;

    bool operator==(const AudioConfig&) const = default;
};

struct ReferenceConfig {
    int k = 10;
    std::string strategy = "kmeans";  // kmeans | first | random | uniform
    int kmeans_max_iter = 100;
    double kmeans_tol = 1e-6;
    int kmeans_restarts = 10;

    bool operator==(const ReferenceConfig&) const = default;
};

struct LossConfig {
    double alpha_rec = 1.0;
    double alpha_land = 100.0;
    double alpha_gan = 1e-4;
    double alpha_mix = 0.86;
    std::string landmark_form = "squared_l2";        // squared_l2 | printed_sum
    std::string attention_sign = "negative_exponent";  // negative_exponent | positive_exponent

    bool operator==(const LossConfig&) const = default;

    LossWeights weights() const { return {alpha_rec, alpha_land, alpha_gan, alpha_mix}; }
};

struct PipelineConfig {
    int crop_size = 256;
    std::vector<double> mask_rect = {0.08, 0.28, 0.92, 0.95};  // x1, y1, x2, y2
    double chin_shift_loss_px = 12.0;
    double chin_shift_render_px = 8.0;
    double feather_sigma_px = 3.0;
    double landmark_smoothing_sigma_frames = 1.0;
    double max_utterance_seconds = 12.0;
    FilterConfig filters;
    ChunkingConfig chunking;
    AudioConfig audio;
    ReferenceConfig references;
    LossConfig loss;
    std::string render_blend_mode = "convex";  // convex | unnormalized
    double leak_min_mask_area_fraction = 0.25;
    std::string synthesizer = "baseline";
    uint64_t seed = 0;
    int jobs = 1;

    bool operator==(const PipelineConfig&) const = default;

    RectMask rect() const {
        if (mask_rect.size() != 4)
            throw ValidationError("PipelineConfig: mask_rect must have 4 entries");
        RectMask m{mask_rect[0], mask_rect[1], mask_rect[2], mask_rect[3]};
        m.validate();
        return m;
    }

    FeatureKind feature_kind() const {
        if (audio.kind == "logmel") return FeatureKind::logmel;
        if (audio.kind == "mfcc") return FeatureKind::mfcc;
        throw ValidationError("PipelineConfig: audio.kind must be logmel or mfcc");
    }

    LandmarkLossForm landmark_form() const {
        if (loss.landmark_form == "squared_l2") return LandmarkLossForm::squared_l2;
        if (loss.landmark_form == "printed_sum") return LandmarkLossForm::printed_sum;
        throw ValidationError("PipelineConfig: loss.landmark_form unknown");
    }

    AttentionSign attention_sign() const {
        if (loss.attention_sign == "negative_exponent") return AttentionSign::negative_exponent;
        if (loss.attention_sign == "positive_exponent") return AttentionSign::positive_exponent;
        throw ValidationError("PipelineConfig: loss.attention_sign unknown");
    }

    BlendMode blend_mode() const {
        if (render_blend_mode == "convex") return BlendMode::convex;
        if (render_blend_mode == "unnormalized") return BlendMode::unnormalized;
        throw ValidationError("PipelineConfig: render_blend_mode unknown");
    }

    void validate() const {
        rect();
        feature_kind();
        landmark_form();
        attention_sign();
        blend_mode();
        loss.weights().validate();
        if (crop_size < 32) throw ValidationError("PipelineConfig: crop_size too small");
        if (chunking.max_frames < 1 || chunking.buffer_frames < 0)
            throw ValidationError("PipelineConfig: bad chunking limits");
        if (references.k < 1) throw ValidationError("PipelineConfig: references.k must be >= 1");
        if (jobs < 1) throw ValidationError("PipelineConfig: jobs must be >= 1");
        if (references.strategy != "kmeans" && references.strategy != "first" &&
            references.strategy != "random" && references.strategy != "uniform")
            throw ValidationError("PipelineConfig: unknown reference strategy");
        if (synthesizer != "baseline" && synthesizer != "oracle" && synthesizer != "none")
            throw ValidationError("PipelineConfig: unknown synthesizer name");
    }
};

inline PipelineConfig default_config() { return PipelineConfig{}; }

namespace detail {

using nlohmann::json;

inline json config_to_json(const PipelineConfig& c) {
    json j;
    j["schema_version"] = 1;
    j["crop_size"] = c.crop_size;
    j["mask_rect"] = c.mask_rect;
    j["chin_shift_loss_px"] = c.chin_shift_loss_px;
    j["chin_shift_render_px"] = c.chin_shift_render_px;
    j["feather_sigma_px"] = c.feather_sigma_px;
    j["landmark_smoothing_sigma_frames"] = c.landmark_smoothing_sigma_frames;
    j["max_utterance_seconds"] = c.max_utterance_seconds;
    j["filters"] = {{"min_eye_distance_px", c.filters.min_eye_distance_px},
                    {"fps_min", c.filters.fps_min},
                    {"fps_max", c.filters.fps_max},
                    {"vlap_min", c.filters.vlap_min},
                    {"sync_min", c.filters.sync_min}};
    j["chunking"] = {{"max_frames", c.chunking.max_frames},
                     {"buffer_frames", c.chunking.buffer_frames}};
    j["audio"] = {{"sample_rate_hz", c.audio.sample_rate_hz},
                  {"mel_banks", c.audio.mel_banks},
                  {"feature_rate_hz", c.audio.feature_rate_hz},
                  {"window_frames", c.audio.window_frames},
                  {"mel_fmin_hz", c.audio.mel_fmin_hz},
                  {"mel_fmax_hz", c.audio.mel_fmax_hz},
                  {"kind", c.audio.kind},
                  {"mfcc_coeffs", c.audio.mfcc_coeffs},
                  {"log_floor_eps", c.audio.log_floor_eps}};
    j["references"] = {{"k", c.references.k},
                       {"strategy", c.references.strategy},
                       {"kmeans_max_iter", c.references.kmeans_max_iter},
                       {"kmeans_tol", c.references.kmeans_tol},
                       {"kmeans_restarts", c.references.kmeans_restarts}};
    j["loss"] = {{"alpha_rec", c.loss.alpha_rec},
                 {"alpha_land", c.loss.alpha_land},
                 {"alpha_gan", c.loss.alpha_gan},
                 {"alpha_mix", c.loss.alpha_mix},
                 {"landmark_form", c.loss.landmark_form},
                 {"attention_sign", c.loss.attention_sign}};
    j["render_blend_mode"] = c.render_blend_mode;
    j["leak"] = {{"min_mask_area_fraction", c.leak_min_mask_area_fraction}};
    j["synthesizer"] = c.synthesizer;
    j["seed"] = c.seed;
    j["jobs"] = c.jobs;
    return j;
}

template <typename T>
void read_field(const json& j, const std::string& key, T& out, const std::string& where) {
    auto it = j.find(key);
    if (it == j.end()) throw SchemaError("missing field '" + key + "' in " + where);
    try {
        out = it->get<T>();
    } catch (const json::exception&) {
        throw SchemaError("field '" + key + "' in " + where + " has the wrong type");
    }
}

}  // namespace detail

inline void save_config(const PipelineConfig& c, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoError("save_config: cannot open '" + path + "' for writing");
    f << detail::config_to_json(c).dump(2) << "\n";
}

// Strict load: every field required, unknown fields rejected.
inline PipelineConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("load_config: cannot open '" + path + "'");
    detail::json j;
    try {
        j = detail::json::parse(f);
    } catch (const detail::json::exception& e) {
        throw SchemaError("load_config: malformed JSON in '" + path + "': " + e.what());
    }
    const std::string where = "config";
    detail::check_keys(
        j,
        {"schema_version", "crop_size", "mask_rect", "chin_shift_loss_px", "chin_shift_render_px",
         "feather_sigma_px", "landmark_smoothing_sigma_frames", "max_utterance_seconds", "filters",
         "chunking", "audio", "references", "loss", "render_blend_mode", "leak", "synthesizer",
         "seed", "jobs"},
        where);
    int schema_version = 0;
    detail::read_field(j, "schema_version", schema_version, where);
    if (schema_version != 1)
        throw SchemaError("config schema_version " + std::to_string(schema_version) +
                          " unsupported");

    PipelineConfig c;
    detail::read_field(j, "crop_size", c.crop_size, where);
    detail::read_field(j, "mask_rect", c.mask_rect, where);
    detail::read_field(j, "chin_shift_loss_px", c.chin_shift_loss_px, where);
    detail::read_field(j, "chin_shift_render_px", c.chin_shift_render_px, where);
    detail::read_field(j, "feather_sigma_px", c.feather_sigma_px, where);
    detail::read_field(j, "landmark_smoothing_sigma_frames", c.landmark_smoothing_sigma_frames,
                       where);
    detail::read_field(j, "max_utterance_seconds", c.max_utterance_seconds, where);

    const auto& jf = j.at("filters");
    detail::check_keys(jf, {"min_eye_distance_px", "fps_min", "fps_max", "vlap_min", "sync_min"},
                       "config.filters");
    detail::read_field(jf, "min_eye_distance_px", c.filters.min_eye_distance_px, "config.filters");
    detail::read_field(jf, "fps_min", c.filters.fps_min, "config.filters");
    detail::read_field(jf, "fps_max", c.filters.fps_max, "config.filters");
    detail::read_field(jf, "vlap_min", c.filters.vlap_min, "config.filters");
    detail::read_field(jf, "sync_min", c.filters.sync_min, "config.filters");

    const auto& jc = j.at("chunking");
    detail::check_keys(jc, {"max_frames", "buffer_frames"}, "config.chunking");
    detail::read_field(jc, "max_frames", c.chunking.max_frames, "config.chunking");
    detail::read_field(jc, "buffer_frames", c.chunking.buffer_frames, "config.chunking");

    const auto& ja = j.at("audio");
    detail::check_keys(ja,
                       {"sample_rate_hz", "mel_banks", "feature_rate_hz", "window_frames",
                        "mel_fmin_hz", "mel_fmax_hz", "kind", "mfcc_coeffs", "log_floor_eps"},
                       "config.audio");
    detail::read_field(ja, "sample_rate_hz", c.audio.sample_rate_hz, "config.audio");
    detail::read_field(ja, "mel_banks", c.audio.mel_banks, "config.audio");
    detail::read_field(ja, "feature_rate_hz", c.audio.feature_rate_hz, "config.audio");
    detail::read_field(ja, "window_frames", c.audio.window_frames, "config.audio");
    detail::read_field(ja, "mel_fmin_hz", c.audio.mel_fmin_hz, "config.audio");
    detail::read_field(ja, "mel_fmax_hz", c.audio.mel_fmax_hz, "config.audio");
    detail::read_field(ja, "kind", c.audio.kind, "config.audio");
    detail::read_field(ja, "mfcc_coeffs", c.audio.mfcc_coeffs, "config.audio");
    detail::read_field(ja, "log_floor_eps", c.audio.log_floor_eps, "config.audio");

    const auto& jr = j.at("references");
    detail::check_keys(jr, {"k", "strategy", "kmeans_max_iter", "kmeans_tol", "kmeans_restarts"},
                       "config.references");
    detail::read_field(jr, "k", c.references.k, "config.references");
    detail::read_field(jr, "strategy", c.references.strategy, "config.references");
    detail::read_field(jr, "kmeans_max_iter", c.references.kmeans_max_iter, "config.references");
    detail::read_field(jr, "kmeans_tol", c.references.kmeans_tol, "config.references");
    detail::read_field(jr, "kmeans_restarts", c.references.kmeans_restarts, "config.references");

    const auto& jl = j.at("loss");
    detail::check_keys(
        jl, {"alpha_rec", "alpha_land", "alpha_gan", "alpha_mix", "landmark_form", "attention_sign"},
        "config.loss");
    detail::read_field(jl, "alpha_rec", c.loss.alpha_rec, "config.loss");
    detail::read_field(jl, "alpha_land", c.loss.alpha_land, "config.loss");
    detail::read_field(jl, "alpha_gan", c.loss.alpha_gan, "config.loss");
    detail::read_field(jl, "alpha_mix", c.loss.alpha_mix, "config.loss");
    detail::read_field(jl, "landmark_form", c.loss.landmark_form, "config.loss");
    detail::read_field(jl, "attention_sign", c.loss.attention_sign, "config.loss");

    detail::read_field(j, "render_blend_mode", c.render_blend_mode, where);
    const auto& jk = j.at("leak");
    detail::check_keys(jk, {"min_mask_area_fraction"}, "config.leak");
    detail::read_field(jk, "min_mask_area_fraction", c.leak_min_mask_area_fraction, "config.leak");
    detail::read_field(j, "synthesizer", c.synthesizer, where);
    detail::read_field(j, "seed", c.seed, where);
    detail::read_field(j, "jobs", c.jobs, where);
    c.validate();
    return c;
}

}  // namespace lipdub
