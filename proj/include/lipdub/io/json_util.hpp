#pragma once

#include <json.hpp>

#include <fstream>
#include <string>
#include <vector>

#include "lipdub/error.hpp"

namespace lipdub {

constexpr int kBundleSchemaVersion = 1;

namespace detail {

using nlohmann::json;

inline json parse_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open '" + path + "'");
    try {
        return json::parse(f);
    } catch (const json::exception& e) {
        throw SchemaError("malformed JSON in '" + path + "': " + e.what());
    }
}

inline void write_json_file(const json& j, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f << j.dump(2) << "\n";
    if (!f) throw IoError("write failed for '" + path + "'");
}

// Unknown fields are rejected, not ignored.
inline void check_keys(const json& j, const std::vector<std::string>& allowed,
                       const std::string& where) {
    for (const auto& [key, unused] : j.items()) {
        bool ok = false;
        for (const auto& a : allowed) ok = ok || key == a;
        if (!ok) throw SchemaError("unknown field '" + key + "' in " + where);
    }
}

inline const json& require(const json& j, const std::string& key, const std::string& where) {
    auto it = j.find(key);
    if (it == j.end()) throw SchemaError("missing field '" + key + "' in " + where);
    return *it;
}

// Typed field access; json type mismatches become SchemaError, never escape raw.
template <typename T>
T field_as(const json& j, const std::string& key, const std::string& where) {
    try {
        return require(j, key, where).get<T>();
    } catch (const json::exception&) {
        throw SchemaError("field '" + key + "' in " + where + " has the wrong type");
    }
}

inline void check_schema_version(const json& j, const std::string& where) {
    const int v = field_as<int>(j, "schema_version", where);
    if (v != kBundleSchemaVersion)
        throw SchemaError(where + " has schema_version " + std::to_string(v) + ", expected " +
                          std::to_string(kBundleSchemaVersion));
}

}  // namespace detail
}  // namespace lipdub
