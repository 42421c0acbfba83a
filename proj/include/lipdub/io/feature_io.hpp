#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "lipdub/audio_features.hpp"
#include "lipdub/error.hpp"

namespace lipdub {

// Flat binary feature file: magic, version, kind, dims, rate, row-major doubles.
inline void save_features(const FeatureMatrix& fm, const std::string& path) {
    fm.validate();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("save_features: cannot open '" + path + "' for writing");
    const char magic[4] = {'L', 'D', 'F', 'T'};
    const uint32_t version = 1;
    const uint32_t kind = static_cast<uint32_t>(fm.kind);
    const uint32_t rows = static_cast<uint32_t>(fm.rows);
    const uint32_t cols = static_cast<uint32_t>(fm.cols);
    f.write(magic, 4);
    f.write(reinterpret_cast<const char*>(&version), 4);
    f.write(reinterpret_cast<const char*>(&kind), 4);
    f.write(reinterpret_cast<const char*>(&rows), 4);
    f.write(reinterpret_cast<const char*>(&cols), 4);
    f.write(reinterpret_cast<const char*>(&fm.rate), 8);
    f.write(reinterpret_cast<const char*>(fm.data.data()),
            static_cast<std::streamsize>(fm.data.size() * sizeof(double)));
    if (!f) throw IoError("save_features: write failed for '" + path + "'");
}

inline FeatureMatrix load_features(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("load_features: cannot open '" + path + "'");
    char magic[4];
    uint32_t version = 0, kind = 0, rows = 0, cols = 0;
    double rate = 0.0;
    f.read(magic, 4);
    f.read(reinterpret_cast<char*>(&version), 4);
    f.read(reinterpret_cast<char*>(&kind), 4);
    f.read(reinterpret_cast<char*>(&rows), 4);
    f.read(reinterpret_cast<char*>(&cols), 4);
    f.read(reinterpret_cast<char*>(&rate), 8);
    if (!f || std::memcmp(magic, "LDFT", 4) != 0)
        throw SchemaError("load_features: '" + path + "' is not a feature file");
    if (version != 1)
        throw SchemaError("load_features: unsupported version " + std::to_string(version));
    if (kind > 1) throw SchemaError("load_features: unknown feature kind");
    FeatureMatrix fm;
    fm.rows = static_cast<int>(rows);
    fm.cols = static_cast<int>(cols);
    fm.rate = rate;
    fm.kind = static_cast<FeatureKind>(kind);
    fm.data.resize(static_cast<size_t>(rows) * cols);
    f.read(reinterpret_cast<char*>(fm.data.data()),
           static_cast<std::streamsize>(fm.data.size() * sizeof(double)));
    if (!f) throw SchemaError("load_features: truncated data in '" + path + "'");
    fm.validate();
    return fm;
}

}  // namespace lipdub
