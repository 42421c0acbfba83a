#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "lipdub/audio.hpp"
#include "lipdub/error.hpp"
#include "lipdub/image.hpp"
#include "lipdub/io/json_util.hpp"
#include "lipdub/io/png_io.hpp"
#include "lipdub/io/wav_io.hpp"
#include "lipdub/landmarks.hpp"
#include "lipdub/utterance.hpp"

namespace lipdub {
namespace detail {

inline std::string frame_file_name(const std::string& pattern, int index) {
    const size_t pos = pattern.find("%06d");
    if (pos == std::string::npos || pattern.find('%', pos + 1) != std::string::npos ||
        pattern.find('%') != pos)
        throw SchemaError("frame_pattern must contain exactly one %06d");
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%06d", index);
    return pattern.substr(0, pos) + buf + pattern.substr(pos + 4);
}

inline json landmarks_to_json(const std::vector<LandmarkSet>& sets) {
    json frames = json::array();
    for (const auto& lm : sets) {
        json obj = json::object();
        for (const auto& [name, p] : lm.points) obj[name] = {p.x, p.y};
        frames.push_back(std::move(obj));
    }
    json j;
    j["schema_version"] = kBundleSchemaVersion;
    j["coordinate_space"] = sets.empty() ? "frame" : to_string(sets[0].coordinate_space);
    j["frames"] = std::move(frames);
    return j;
}

inline std::vector<LandmarkSet> landmarks_from_json(const json& j, CoordSpace expected,
                                                    const std::string& where) {
    check_keys(j, {"schema_version", "coordinate_space", "frames"}, where);
    check_schema_version(j, where);
    const std::string space = require(j, "coordinate_space", where).get<std::string>();
    if (space != to_string(expected))
        throw SchemaError(where + " stores " + space + "-space landmarks, expected " +
                          to_string(expected));
    std::vector<LandmarkSet> out;
    for (const auto& obj : require(j, "frames", where)) {
        LandmarkSet lm;
        lm.coordinate_space = expected;
        for (const auto& [name, arr] : obj.items()) {
            if (!arr.is_array() || arr.size() != 2 || !arr[0].is_number() || !arr[1].is_number())
                throw SchemaError("landmark '" + name + "' in " + where +
                                  " is not a 2-number array");
            lm.set(name, {arr[0].get<double>(), arr[1].get<double>()});
        }
        lm.validate();
        out.push_back(std::move(lm));
    }
    return out;
}

}  // namespace detail

// A raw face track before canonicalization: full frames, frame-space
// landmarks, and the audio belonging to the same span.
struct TrackBundle {
    std::vector<ImageBuf> frames;
    std::vector<LandmarkSet> landmarks;  // frame space
    AudioClip audio;
    double fps = 25.0;
    std::string language;

    void validate() const {
        if (frames.empty()) throw ValidationError("TrackBundle: no frames");
        if (landmarks.size() != frames.size())
            throw ValidationError("TrackBundle: landmark count != frame count");
        if (!(fps > 0.0)) throw ValidationError("TrackBundle: fps must be positive");
        for (const auto& f : frames)
            if (!f.same_shape(frames[0]))
                throw ValidationError("TrackBundle: frames disagree on shape");
        audio.validate();
    }
};

inline void save_track_bundle(const TrackBundle& tb, const std::string& dir) {
    tb.validate();
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(dir) / "frames");
    detail::json manifest;
    manifest["schema_version"] = kBundleSchemaVersion;
    manifest["kind"] = "track";
    manifest["fps"] = tb.fps;
    manifest["n_frames"] = tb.frames.size();
    manifest["width"] = tb.frames[0].width;
    manifest["height"] = tb.frames[0].height;
    manifest["language"] = tb.language;
    manifest["frames_dir"] = "frames";
    manifest["frame_pattern"] = "%06d.png";
    manifest["audio_file"] = "audio.wav";
    manifest["landmarks_file"] = "landmarks.json";
    detail::write_json_file(manifest, (fs::path(dir) / "manifest.json").string());
    detail::write_json_file(detail::landmarks_to_json(tb.landmarks),
                            (fs::path(dir) / "landmarks.json").string());
    save_wav(tb.audio, (fs::path(dir) / "audio.wav").string());
    for (size_t i = 0; i < tb.frames.size(); ++i)
        save_png(tb.frames[i], (fs::path(dir) / "frames" /
                                detail::frame_file_name("%06d.png", static_cast<int>(i)))
                                   .string());
}

inline TrackBundle load_track_bundle(const std::string& dir) {
    namespace fs = std::filesystem;
    const std::string where = "track manifest";
    const detail::json m = detail::parse_json_file((fs::path(dir) / "manifest.json").string());
    detail::check_keys(m,
                       {"schema_version", "kind", "fps", "n_frames", "width", "height", "language",
                        "frames_dir", "frame_pattern", "audio_file", "landmarks_file"},
                       where);
    detail::check_schema_version(m, where);
    if (detail::field_as<std::string>(m, "kind", where) != "track")
        throw SchemaError("bundle at '" + dir + "' is not a track bundle");

    TrackBundle tb;
    tb.fps = detail::field_as<double>(m, "fps", where);
    tb.language = detail::field_as<std::string>(m, "language", where);
    const int n = detail::field_as<int>(m, "n_frames", where);
    const int width = detail::field_as<int>(m, "width", where);
    const int height = detail::field_as<int>(m, "height", where);
    const std::string frames_dir = detail::field_as<std::string>(m, "frames_dir", where);
    const std::string pattern = detail::field_as<std::string>(m, "frame_pattern", where);

    for (int i = 0; i < n; ++i) {
        const std::string file =
            (fs::path(dir) / frames_dir / detail::frame_file_name(pattern, i)).string();
        if (!fs::exists(file)) throw IoError("missing frame file '" + file + "'");
        tb.frames.push_back(load_png(file));
        if (tb.frames.back().width != width || tb.frames.back().height != height)
            throw SchemaError("frame '" + file + "' disagrees with manifest dimensions");
    }
    tb.audio = load_wav(
        (fs::path(dir) / detail::field_as<std::string>(m, "audio_file", where)).string());
    if (tb.audio.sample_rate != kAudioSampleRate)
        throw SchemaError("bundle audio is " + std::to_string(tb.audio.sample_rate) +
                          " Hz; 16000 Hz required (no implicit resampling)");
    const detail::json lj = detail::parse_json_file(
        (fs::path(dir) / detail::field_as<std::string>(m, "landmarks_file", where)).string());
    tb.landmarks = detail::landmarks_from_json(lj, CoordSpace::frame, "track landmarks");
    if (static_cast<int>(tb.landmarks.size()) != n)
        throw SchemaError("landmark frame count disagrees with manifest n_frames");
    tb.validate();
    return tb;
}

inline void save_utterance(const Utterance& u, const std::string& dir) {
    u.validate();
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(dir) / "frames");
    detail::json manifest;
    manifest["schema_version"] = kBundleSchemaVersion;
    manifest["kind"] = "utterance";
    manifest["fps"] = u.fps;
    manifest["n_frames"] = u.frames.size();
    manifest["language"] = u.language;
    manifest["source_frame_indices"] = u.source_frame_indices;
    manifest["source_sample_range"] = {u.source_sample_range.first, u.source_sample_range.second};
    detail::json transforms = detail::json::array();
    for (const auto& t : u.per_frame_transform)
        transforms.push_back({t.m[0], t.m[1], t.m[2], t.m[3], t.m[4], t.m[5]});
    manifest["transforms"] = std::move(transforms);
    manifest["frames_dir"] = "frames";
    manifest["frame_pattern"] = "%06d.png";
    manifest["audio_file"] = "audio.wav";
    manifest["landmarks_file"] = "landmarks.json";
    detail::write_json_file(manifest, (fs::path(dir) / "manifest.json").string());
    detail::write_json_file(detail::landmarks_to_json(u.per_frame_landmarks),
                            (fs::path(dir) / "landmarks.json").string());
    save_wav(u.audio, (fs::path(dir) / "audio.wav").string());
    for (size_t i = 0; i < u.frames.size(); ++i)
        save_png(u.frames[i], (fs::path(dir) / "frames" /
                               detail::frame_file_name("%06d.png", static_cast<int>(i)))
                                  .string());
}

inline Utterance load_utterance(const std::string& dir) {
    namespace fs = std::filesystem;
    const std::string where = "utterance manifest";
    const detail::json m = detail::parse_json_file((fs::path(dir) / "manifest.json").string());
    detail::check_keys(m,
                       {"schema_version", "kind", "fps", "n_frames", "language",
                        "source_frame_indices", "source_sample_range", "transforms", "frames_dir",
                        "frame_pattern", "audio_file", "landmarks_file"},
                       where);
    detail::check_schema_version(m, where);
    if (detail::field_as<std::string>(m, "kind", where) != "utterance")
        throw SchemaError("bundle at '" + dir + "' is not an utterance bundle");

    Utterance u;
    u.fps = detail::field_as<double>(m, "fps", where);
    u.language = detail::field_as<std::string>(m, "language", where);
    u.source_frame_indices =
        detail::field_as<std::vector<int>>(m, "source_frame_indices", where);
    const auto& range = detail::require(m, "source_sample_range", where);
    if (!range.is_array() || range.size() != 2 || !range[0].is_number() || !range[1].is_number())
        throw SchemaError("source_sample_range must be a 2-number array");
    u.source_sample_range = {range[0].get<long long>(), range[1].get<long long>()};
    const auto& transforms = detail::require(m, "transforms", where);
    if (!transforms.is_array()) throw SchemaError("transforms must be an array");
    for (const auto& arr : transforms) {
        if (!arr.is_array() || arr.size() != 6)
            throw SchemaError("each transform must be a 6-number array");
        for (const auto& v : arr)
            if (!v.is_number()) throw SchemaError("each transform must be a 6-number array");
        AffineTransform t;
        for (int i = 0; i < 6; ++i) t.m[i] = arr[i].get<double>();
        u.per_frame_transform.push_back(t);
    }
    const int n = detail::field_as<int>(m, "n_frames", where);
    const std::string frames_dir = detail::field_as<std::string>(m, "frames_dir", where);
    const std::string pattern = detail::field_as<std::string>(m, "frame_pattern", where);
    for (int i = 0; i < n; ++i) {
        const std::string file =
            (fs::path(dir) / frames_dir / detail::frame_file_name(pattern, i)).string();
        if (!fs::exists(file)) throw IoError("missing frame file '" + file + "'");
        u.frames.push_back(load_png(file));
    }
    u.audio = load_wav(
        (fs::path(dir) / detail::field_as<std::string>(m, "audio_file", where)).string());
    if (u.audio.sample_rate != kAudioSampleRate)
        throw SchemaError("bundle audio is " + std::to_string(u.audio.sample_rate) +
                          " Hz; 16000 Hz required (no implicit resampling)");
    const detail::json lj = detail::parse_json_file(
        (fs::path(dir) / detail::field_as<std::string>(m, "landmarks_file", where)).string());
    u.per_frame_landmarks = detail::landmarks_from_json(lj, CoordSpace::crop, "utterance landmarks");
    u.validate();
    return u;
}

}  // namespace lipdub
