#pragma once

// Log-mel feature extraction: 1024-point Hann STFT power spectrogram at
// 32 kHz with a 500-sample hop, a 64-band HTK-mel filterbank over
// 50 Hz..14 kHz, and entrywise log compression.

#include <cmath>
#include <complex>
#include <vector>

#include <Eigen/Dense>

#include "sedkit/audio.hpp"
#include "sedkit/common.hpp"
#include "sedkit/matio.hpp"

namespace sedkit {

struct FeatureOptions {
  int sample_rate = 32000;
  int n_fft = 1024;
  int hop = 500;
  int n_mels = 64;
  double f_min = 50.0;
  double f_max = 14000.0;
  double log_eps = 1e-10;

  double frame_hop_seconds() const { return static_cast<double>(hop) / sample_rate; }
  int n_bins() const { return n_fft / 2 + 1; }
};

struct Spectrogram {
  MatrixF values;  // frames x bins, |X|^2
  double frame_hop_seconds = 0.0;
  double bin_hz = 0.0;
};

struct MelFilterbank {
  MatrixF weights;                // n_mels x bins
  std::vector<double> band_edges;  // n_mels + 2 Hz values
};

struct MelSpectrogram {
  MatrixF values;  // frames x n_mels
  double frame_hop_seconds = 0.0;
};

struct LogMelSpectrogram {
  MatrixF values;  // frames x n_mels
  double frame_hop_seconds = 0.0;
};

namespace detail {

// Iterative radix-2 complex FFT, n a power of two.
inline void fft_inplace(std::vector<std::complex<double>>& a) {
  const size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0) fail(Errc::bad_argument, "FFT size must be a power of two");
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * M_PI / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        std::complex<double> u = a[i + k];
        std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

inline double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
inline double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

}  // namespace detail

// Frame t covers samples [hop*t, hop*t + n_fft); no padding, no centering.
inline Spectrogram stft(const AudioClip& clip, const FeatureOptions& opts = {}) {
  if (clip.sample_rate != opts.sample_rate)
    fail(Errc::bad_argument, "clip rate " + std::to_string(clip.sample_rate) +
                                 " != pipeline rate " + std::to_string(opts.sample_rate));
  const size_t n = clip.samples.size();
  const size_t n_fft = static_cast<size_t>(opts.n_fft);
  if (n < n_fft)
    fail(Errc::bad_argument, "clip shorter than one window (" + std::to_string(n) + " < " +
                                 std::to_string(n_fft) + " samples)");
  const size_t hop = static_cast<size_t>(opts.hop);
  const size_t frames = 1 + (n - n_fft) / hop;
  const int bins = opts.n_bins();

  // periodic Hann
  std::vector<double> window(n_fft);
  for (size_t i = 0; i < n_fft; ++i)
    window[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(i) / n_fft);

  Spectrogram spec;
  spec.values.resize(static_cast<Eigen::Index>(frames), bins);
  spec.frame_hop_seconds = opts.frame_hop_seconds();
  spec.bin_hz = static_cast<double>(opts.sample_rate) / opts.n_fft;

  std::vector<std::complex<double>> buf(n_fft);
  for (size_t t = 0; t < frames; ++t) {
    const float* src = clip.samples.data() + t * hop;
    for (size_t i = 0; i < n_fft; ++i) buf[i] = {src[i] * window[i], 0.0};
    detail::fft_inplace(buf);
    for (int b = 0; b < bins; ++b)
      spec.values(static_cast<Eigen::Index>(t), b) = static_cast<float>(std::norm(buf[b]));
  }
  return spec;
}

// n_mels triangular filters with peaks at HTK-mel-spaced frequencies; filter k
// rises over edges (k, k+1) and falls over (k+1, k+2), peak value 1.
inline MelFilterbank build_mel_filterbank(const FeatureOptions& opts = {}) {
  if (!(opts.f_min > 0.0 && opts.f_min < opts.f_max &&
        opts.f_max <= opts.sample_rate / 2.0))
    fail(Errc::bad_argument, "need 0 < f_min < f_max <= rate/2");
  if (opts.n_mels < 1) fail(Errc::bad_argument, "n_mels must be >= 1");

  const int n_edges = opts.n_mels + 2;
  const double mel_lo = detail::hz_to_mel(opts.f_min);
  const double mel_hi = detail::hz_to_mel(opts.f_max);

  MelFilterbank fb;
  fb.band_edges.resize(n_edges);
  for (int i = 0; i < n_edges; ++i)
    fb.band_edges[i] =
        detail::mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / static_cast<double>(n_edges - 1));

  const int bins = opts.n_bins();
  const double bin_hz = static_cast<double>(opts.sample_rate) / opts.n_fft;
  fb.weights = MatrixF::Zero(opts.n_mels, bins);
  for (int k = 0; k < opts.n_mels; ++k) {
    const double lo = fb.band_edges[k];
    const double mid = fb.band_edges[k + 1];
    const double hi = fb.band_edges[k + 2];
    for (int b = 0; b < bins; ++b) {
      const double f = b * bin_hz;
      double w = 0.0;
      if (f > lo && f < hi) w = f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
      fb.weights(k, b) = static_cast<float>(w);
    }
  }
  return fb;
}

inline MelSpectrogram apply_mel(const Spectrogram& spec, const MelFilterbank& fb) {
  if (spec.values.cols() != fb.weights.cols())
    fail(Errc::shape_mismatch, "spectrogram has " + std::to_string(spec.values.cols()) +
                                   " bins, filterbank expects " +
                                   std::to_string(fb.weights.cols()));
  MelSpectrogram mel;
  mel.values.noalias() = spec.values * fb.weights.transpose();
  mel.frame_hop_seconds = spec.frame_hop_seconds;
  return mel;
}

inline LogMelSpectrogram log_compress(const MelSpectrogram& mel, double eps = 1e-10) {
  LogMelSpectrogram out;
  out.values = (mel.values.array().cast<double>() + eps).log().cast<float>();
  out.frame_hop_seconds = mel.frame_hop_seconds;
  return out;
}

struct ClipFeatures {
  MelSpectrogram mel;
  LogMelSpectrogram logmel;
};

inline ClipFeatures extract_features(const AudioClip& clip, const FeatureOptions& opts = {}) {
  const Spectrogram spec = stft(clip, opts);
  const MelFilterbank fb = build_mel_filterbank(opts);
  ClipFeatures f;
  f.mel = apply_mel(spec, fb);
  f.logmel = log_compress(f.mel, opts.log_eps);
  return f;
}

}  // namespace sedkit
