#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "lipdub/audio.hpp"
#include "lipdub/error.hpp"

namespace lipdub {

enum class FeatureKind : uint32_t { logmel = 0, mfcc = 1 };

constexpr int kMelBanks = 80;
constexpr double kFeatureRateHz = 100.0;
constexpr double kMelFminHz = 125.0;
constexpr double kMelFmaxHz = 7600.0;
constexpr double kLogFloorEps = 1e-10;
constexpr int kAudioWindowFrames = 24;

struct FeatureMatrix {
    int rows = 0;
    int cols = 0;
    double rate = kFeatureRateHz;
    FeatureKind kind = FeatureKind::logmel;
    std::vector<double> data;  // row-major, rows are time-ordered

    double& at(int t, int d) { return data[static_cast<size_t>(t) * cols + d]; }
    double at(int t, int d) const { return data[static_cast<size_t>(t) * cols + d]; }

    void validate() const {
        if (rows < 0 || cols <= 0) throw ValidationError("FeatureMatrix: bad dimensions");
        if (data.size() != static_cast<size_t>(rows) * cols)
            throw ValidationError("FeatureMatrix: data length != rows*cols");
        for (double v : data)
            if (!std::isfinite(v)) throw ValidationError("FeatureMatrix: non-finite value");
    }
};

namespace detail {

// Iterative radix-2 FFT, in place; n must be a power of two.
inline void fft_radix2(std::vector<std::complex<double>>& a) {
    const size_t n = a.size();
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * M_PI / static_cast<double>(len);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (size_t j = 0; j < len / 2; ++j) {
                const std::complex<double> u = a[i + j];
                const std::complex<double> v = a[i + j + len / 2] * w;
                a[i + j] = u + v;
                a[i + j + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

inline double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
inline double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

// Triangular filters with unit peak over FFT bin frequencies.
inline std::vector<std::vector<double>> mel_filterbank(int n_banks, int n_fft, int sample_rate,
                                                       double fmin, double fmax) {
    const int n_bins = n_fft / 2 + 1;
    std::vector<double> mel_pts(n_banks + 2);
    const double m0 = hz_to_mel(fmin), m1 = hz_to_mel(fmax);
    for (int i = 0; i < n_banks + 2; ++i)
        mel_pts[i] = mel_to_hz(m0 + (m1 - m0) * i / (n_banks + 1));
    std::vector<std::vector<double>> fb(n_banks, std::vector<double>(n_bins, 0.0));
    for (int b = 0; b < n_banks; ++b) {
        const double lo = mel_pts[b], mid = mel_pts[b + 1], hi = mel_pts[b + 2];
        for (int k = 0; k < n_bins; ++k) {
            const double f = static_cast<double>(k) * sample_rate / n_fft;
            if (f <= lo || f >= hi) continue;
            fb[b][k] = f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
        }
    }
    return fb;
}

inline size_t next_pow2(size_t n) {
    size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

}  // namespace detail

// Band center frequency (Hz) of one mel filter; used to sanity-check tones.
inline double mel_band_center_hz(int band, int n_banks = kMelBanks, double fmin = kMelFminHz,
                                 double fmax = kMelFmaxHz) {
    const double m0 = detail::hz_to_mel(fmin), m1 = detail::hz_to_mel(fmax);
    return detail::mel_to_hz(m0 + (m1 - m0) * (band + 1) / (n_banks + 1));
}

// Log magnitude mel spectrogram: 25 ms Hann windows, 10 ms hop, 80 triangular
// bands over 125-7600 Hz, natural log floored at eps. The magnitude (not
// power) spectrum keeps the log exactly gain-covariant.
inline FeatureMatrix log_mel(const AudioClip& audio, int n_banks = kMelBanks,
                             double fmin = kMelFminHz, double fmax = kMelFmaxHz,
                             double eps = kLogFloorEps) {
    if (audio.sample_rate != kAudioSampleRate)
        throw ValidationError("log_mel: audio must be 16000 Hz");
    const int win = audio.sample_rate / 40;   // 25 ms -> 400
    const int hop = audio.sample_rate / 100;  // 10 ms -> 160
    const long long n = static_cast<long long>(audio.samples.size());
    if (n < win) throw ValidationError("log_mel: audio shorter than one analysis window");
    const int n_fft = static_cast<int>(detail::next_pow2(win));
    const int n_bins = n_fft / 2 + 1;
    const int T = static_cast<int>((n - win) / hop) + 1;

    std::vector<double> hann(win);
    for (int i = 0; i < win; ++i) hann[i] = 0.5 * (1.0 - std::cos(2.0 * M_PI * i / win));
    const auto fb = detail::mel_filterbank(n_banks, n_fft, audio.sample_rate, fmin, fmax);

    FeatureMatrix fm;
    fm.rows = T;
    fm.cols = n_banks;
    fm.kind = FeatureKind::logmel;
    fm.data.resize(static_cast<size_t>(T) * n_banks);

    std::vector<std::complex<double>> buf(n_fft);
    std::vector<double> mag(n_bins);
    for (int t = 0; t < T; ++t) {
        const long long off = static_cast<long long>(t) * hop;
        for (int i = 0; i < n_fft; ++i)
            buf[i] = i < win ? std::complex<double>(audio.samples[off + i] * hann[i], 0.0)
                             : std::complex<double>(0.0, 0.0);
        detail::fft_radix2(buf);
        for (int k = 0; k < n_bins; ++k) mag[k] = std::abs(buf[k]);
        for (int b = 0; b < n_banks; ++b) {
            double acc = 0.0;
            for (int k = 0; k < n_bins; ++k) acc += fb[b][k] * mag[k];
            fm.at(t, b) = std::log(std::max(acc, eps));
        }
    }
    return fm;
}

namespace detail {

// Orthonormal DCT-II of one row, first n_out coefficients.
inline void dct2_ortho(const double* in, int n_in, double* out, int n_out) {
    for (int k = 0; k < n_out; ++k) {
        double acc = 0.0;
        for (int i = 0; i < n_in; ++i)
            acc += in[i] * std::cos(M_PI * k * (2.0 * i + 1.0) / (2.0 * n_in));
        const double scale = k == 0 ? std::sqrt(1.0 / n_in) : std::sqrt(2.0 / n_in);
        out[k] = scale * acc;
    }
}

}  // namespace detail

inline FeatureMatrix mfcc(const AudioClip& audio, int n_coeffs = 13) {
    if (n_coeffs < 1 || n_coeffs > kMelBanks)
        throw ValidationError("mfcc: n_coeffs must lie in [1, 80]");
    const FeatureMatrix lm = log_mel(audio);
    FeatureMatrix fm;
    fm.rows = lm.rows;
    fm.cols = n_coeffs;
    fm.kind = FeatureKind::mfcc;
    fm.data.resize(static_cast<size_t>(lm.rows) * n_coeffs);
    for (int t = 0; t < lm.rows; ++t)
        detail::dct2_ortho(&lm.data[static_cast<size_t>(t) * lm.cols], lm.cols,
                           &fm.data[static_cast<size_t>(t) * n_coeffs], n_coeffs);
    return fm;
}

// The feature row of digital silence: log(eps) per mel band, or its DCT.
inline std::vector<double> silence_feature_row(FeatureKind kind, int cols,
                                               double eps = kLogFloorEps) {
    std::vector<double> row(cols, 0.0);
    if (kind == FeatureKind::logmel) {
        for (double& v : row) v = std::log(eps);
    } else {
        std::vector<double> mel(kMelBanks, std::log(eps));
        detail::dct2_ortho(mel.data(), kMelBanks, row.data(), cols);
    }
    return row;
}

// 24 feature rows centered at the video frame, silence rows past the ends.
inline FeatureMatrix window_for_frame(const FeatureMatrix& fm, int frame_idx, double fps,
                                      int width = kAudioWindowFrames) {
    if (width <= 0 || width % 2 != 0) throw ValidationError("window_for_frame: width must be even");
    if (!(fps >= 23.0 && fps <= 30.0))
        throw ValidationError("window_for_frame: fps must lie in [23, 30]");
    const int center = static_cast<int>(std::lround(frame_idx / fps * fm.rate));
    const std::vector<double> silence = silence_feature_row(fm.kind, fm.cols);

    FeatureMatrix out;
    out.rows = width;
    out.cols = fm.cols;
    out.rate = fm.rate;
    out.kind = fm.kind;
    out.data.resize(static_cast<size_t>(width) * fm.cols);
    for (int r = 0; r < width; ++r) {
        const int row = center - width / 2 + r;
        const double* src = (row < 0 || row >= fm.rows)
                                ? silence.data()
                                : &fm.data[static_cast<size_t>(row) * fm.cols];
        std::copy(src, src + fm.cols, &out.data[static_cast<size_t>(r) * fm.cols]);
    }
    return out;
}

}  // namespace lipdub
