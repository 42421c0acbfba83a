#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "lipdub/audio.hpp"
#include "lipdub/error.hpp"

namespace lipdub {

namespace detail {

inline void put_u32(std::vector<uint8_t>& b, uint32_t v) {
    b.push_back(v & 0xff);
    b.push_back((v >> 8) & 0xff);
    b.push_back((v >> 16) & 0xff);
    b.push_back((v >> 24) & 0xff);
}

inline void put_u16(std::vector<uint8_t>& b, uint16_t v) {
    b.push_back(v & 0xff);
    b.push_back((v >> 8) & 0xff);
}

inline uint32_t get_u32(const uint8_t* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

inline uint16_t get_u16(const uint8_t* p) {
    return static_cast<uint16_t>(p[0]) | (static_cast<uint16_t>(p[1]) << 8);
}

}  // namespace detail

// RIFF/WAVE, PCM16, mono.
inline void save_wav(const AudioClip& clip, const std::string& path) {
    clip.validate();
    const std::vector<int16_t> pcm = to_pcm16(clip);
    const uint32_t data_bytes = static_cast<uint32_t>(pcm.size() * 2);
    std::vector<uint8_t> b;
    b.reserve(44 + data_bytes);
    const char* riff = "RIFF";
    b.insert(b.end(), riff, riff + 4);
    detail::put_u32(b, 36 + data_bytes);
    const char* wavefmt = "WAVEfmt ";
    b.insert(b.end(), wavefmt, wavefmt + 8);
    detail::put_u32(b, 16);
    detail::put_u16(b, 1);  // PCM
    detail::put_u16(b, 1);  // mono
    detail::put_u32(b, static_cast<uint32_t>(clip.sample_rate));
    detail::put_u32(b, static_cast<uint32_t>(clip.sample_rate * 2));
    detail::put_u16(b, 2);   // block align
    detail::put_u16(b, 16);  // bits per sample
    const char* data = "data";
    b.insert(b.end(), data, data + 4);
    detail::put_u32(b, data_bytes);
    for (int16_t s : pcm) {
        b.push_back(static_cast<uint16_t>(s) & 0xff);
        b.push_back((static_cast<uint16_t>(s) >> 8) & 0xff);
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("save_wav: cannot open '" + path + "' for writing");
    f.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
    if (!f) throw IoError("save_wav: write failed for '" + path + "'");
}

inline AudioClip load_wav(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("load_wav: cannot open '" + path + "'");
    std::vector<uint8_t> b((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (b.size() < 44 || std::memcmp(b.data(), "RIFF", 4) != 0 ||
        std::memcmp(b.data() + 8, "WAVE", 4) != 0)
        throw IoError("load_wav: '" + path + "' is not a RIFF/WAVE file");

    int sample_rate = 0;
    bool fmt_seen = false;
    std::vector<int16_t> pcm;
    size_t off = 12;
    while (off + 8 <= b.size()) {
        const char* id = reinterpret_cast<const char*>(b.data() + off);
        const uint32_t len = detail::get_u32(b.data() + off + 4);
        const size_t body = off + 8;
        if (body + len > b.size()) throw IoError("load_wav: truncated chunk in '" + path + "'");
        if (std::memcmp(id, "fmt ", 4) == 0) {
            if (len < 16) throw IoError("load_wav: malformed fmt chunk in '" + path + "'");
            const uint16_t format = detail::get_u16(b.data() + body);
            const uint16_t channels = detail::get_u16(b.data() + body + 2);
            sample_rate = static_cast<int>(detail::get_u32(b.data() + body + 4));
            const uint16_t bits = detail::get_u16(b.data() + body + 14);
            if (format != 1 || bits != 16)
                throw IoError("load_wav: '" + path + "' must be PCM16");
            if (channels != 1) throw IoError("load_wav: '" + path + "' must be mono");
            fmt_seen = true;
        } else if (std::memcmp(id, "data", 4) == 0) {
            pcm.resize(len / 2);
            for (size_t i = 0; i < pcm.size(); ++i)
                pcm[i] = static_cast<int16_t>(detail::get_u16(b.data() + body + 2 * i));
        }
        off = body + len + (len % 2);  // chunks are word aligned
    }
    if (!fmt_seen) throw IoError("load_wav: missing fmt chunk in '" + path + "'");
    return from_pcm16(pcm, sample_rate);
}

}  // namespace lipdub
