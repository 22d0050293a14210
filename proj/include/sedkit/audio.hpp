#pragma once

// WAV decode/encode (RIFF PCM16 / IEEE float32, mono or stereo) and
// band-limited sample-rate conversion.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include "sedkit/common.hpp"

namespace sedkit {

struct AudioClip {
  std::vector<float> samples;  // mono, in [-1, 1]
  int sample_rate = 0;
  std::string id;

  double duration_seconds() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

// ---- WAV --------------------------------------------------------------------

inline AudioClip decode_wav(const std::string& bytes, const std::string& id = "") {
  ByteReader r(bytes);
  if (bytes.size() < 12) fail(Errc::malformed_header, "file shorter than RIFF header");
  if (r.bytes(4) != "RIFF") fail(Errc::malformed_header, "missing RIFF tag");
  r.u32();  // declared riff size; not trusted
  if (r.bytes(4) != "WAVE") fail(Errc::malformed_header, "missing WAVE tag");

  bool have_fmt = false;
  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  while (r.remaining() >= 8) {
    std::string tag = r.bytes(4);
    uint32_t size = r.u32();
    if (tag == "fmt ") {
      if (size < 16) fail(Errc::malformed_header, "fmt chunk too small");
      size_t chunk_end = r.pos() + size;
      format = r.u16();
      channels = r.u16();
      rate = r.u32();
      r.u32();  // byte rate
      r.u16();  // block align
      bits = r.u16();
      if (chunk_end > r.pos()) r.skip(chunk_end - r.pos());
      have_fmt = true;
    } else if (tag == "data") {
      if (!have_fmt) fail(Errc::malformed_header, "data chunk before fmt chunk");
      if (format != 1 && format != 3)
        fail(Errc::unsupported_encoding, "format code " + std::to_string(format));
      if (format == 1 && bits != 16)
        fail(Errc::unsupported_encoding, "PCM with " + std::to_string(bits) + " bits");
      if (format == 3 && bits != 32)
        fail(Errc::unsupported_encoding, "float with " + std::to_string(bits) + " bits");
      if (channels != 1 && channels != 2)
        fail(Errc::unsupported_encoding, std::to_string(channels) + " channels");
      if (rate == 0) fail(Errc::malformed_header, "zero sample rate");
      if (size > r.remaining())
        fail(Errc::truncated_data, "data chunk declares " + std::to_string(size) +
                                       " bytes, only " + std::to_string(r.remaining()) +
                                       " present");
      size_t bytes_per = static_cast<size_t>(bits / 8) * channels;
      size_t frames = size / bytes_per;
      AudioClip clip;
      clip.sample_rate = static_cast<int>(rate);
      clip.id = id;
      clip.samples.resize(frames);
      const uint8_t* p = r.raw(frames * bytes_per);
      for (size_t i = 0; i < frames; ++i) {
        double acc = 0.0;
        for (uint16_t c = 0; c < channels; ++c) {
          const uint8_t* s = p + (i * channels + c) * (bits / 8);
          if (format == 1) {
            int16_t v = static_cast<int16_t>(static_cast<uint16_t>(s[0]) |
                                             static_cast<uint16_t>(s[1]) << 8);
            acc += v / 32768.0;
          } else {
            uint32_t u = static_cast<uint32_t>(s[0]) | static_cast<uint32_t>(s[1]) << 8 |
                         static_cast<uint32_t>(s[2]) << 16 | static_cast<uint32_t>(s[3]) << 24;
            float f;
            std::memcpy(&f, &u, 4);
            acc += f;
          }
        }
        clip.samples[i] = static_cast<float>(acc / channels);
      }
      return clip;
    } else {
      uint32_t padded = size + (size & 1);
      if (padded > r.remaining()) fail(Errc::truncated_data, "chunk '" + tag + "' truncated");
      r.skip(padded);
    }
  }
  fail(Errc::malformed_header, have_fmt ? "missing data chunk" : "missing fmt chunk");
}

inline AudioClip decode_wav_file(const std::filesystem::path& path) {
  AudioClip clip = decode_wav(read_file(path), path.stem().string());
  return clip;
}

inline std::string encode_wav_pcm16(const AudioClip& clip) {
  std::string out;
  uint32_t data_size = static_cast<uint32_t>(clip.samples.size() * 2);
  out.reserve(44 + data_size);
  out += "RIFF";
  put_u32(out, 36 + data_size);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, 1);  // PCM
  put_u16(out, 1);  // mono
  put_u32(out, static_cast<uint32_t>(clip.sample_rate));
  put_u32(out, static_cast<uint32_t>(clip.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out += "data";
  put_u32(out, data_size);
  for (float x : clip.samples) {
    double v = std::clamp(static_cast<double>(x), -1.0, 1.0);
    long q = std::lround(v * 32768.0);
    q = std::clamp(q, -32768l, 32767l);
    put_u16(out, static_cast<uint16_t>(static_cast<int16_t>(q)));
  }
  return out;
}

inline void write_wav_pcm16(const std::filesystem::path& path, const AudioClip& clip) {
  write_file_atomic(path, encode_wav_pcm16(clip));
}

// ---- resampling -------------------------------------------------------------

namespace detail {

inline double bessel_i0(double x) {
  double sum = 1.0, term = 1.0;
  double half_sq = 0.25 * x * x;
  for (int k = 1; k < 64; ++k) {
    term *= half_sq / (static_cast<double>(k) * k);
    sum += term;
    if (term < 1e-14 * sum) break;
  }
  return sum;
}

inline double kaiser(double x, double beta, double i0_beta) {
  if (x <= -1.0 || x >= 1.0) return 0.0;
  return bessel_i0(beta * std::sqrt(1.0 - x * x)) / i0_beta;
}

inline double sinc(double x) {
  if (x == 0.0) return 1.0;
  double px = M_PI * x;
  return std::sin(px) / px;
}

}  // namespace detail

// Kaiser-windowed sinc, 64 taps per phase at the lower of the two rates,
// cutoff 0.95 x Nyquist of the lower rate.
inline AudioClip resample(const AudioClip& clip, int target_rate) {
  if (target_rate <= 0) fail(Errc::bad_argument, "target_rate must be positive");
  if (clip.sample_rate <= 0) fail(Errc::bad_argument, "clip has no sample rate");
  if (target_rate == clip.sample_rate) return clip;

  const double ratio = static_cast<double>(target_rate) / clip.sample_rate;
  const double scale = std::min(1.0, ratio);   // anti-alias stretch when downsampling
  const double cutoff = 0.95 * scale;          // fraction of input Nyquist
  const double half_width = 32.0 / scale;      // input samples; 64 taps at lower rate
  const double beta = 8.6;
  const double i0_beta = detail::bessel_i0(beta);

  const size_t in_len = clip.samples.size();
  const size_t out_len =
      static_cast<size_t>(std::llround(static_cast<double>(in_len) * ratio));

  AudioClip out;
  out.sample_rate = target_rate;
  out.id = clip.id;
  out.samples.resize(out_len);

  // Phase table when the rate ratio reduces to a small fraction (the common
  // case, e.g. 441/320); output n has input-time phase (n*p mod q)/q.
  const int64_t g = std::gcd<int64_t>(clip.sample_rate, target_rate);
  const int64_t p = clip.sample_rate / g;   // input step numerator
  const int64_t q = target_rate / g;        // phases
  const int taps = static_cast<int>(std::ceil(half_width)) * 2 + 1;

  auto kernel = [&](double tau) {
    return cutoff * detail::sinc(cutoff * tau) * detail::kaiser(tau / half_width, beta, i0_beta);
  };

  std::vector<double> table;
  const bool use_table = q <= 8192;
  if (use_table) {
    table.resize(static_cast<size_t>(q) * taps);
    for (int64_t phase = 0; phase < q; ++phase) {
      const double frac = static_cast<double>(phase) / q;  // t - floor(t)
      for (int j = 0; j < taps; ++j) {
        // tap j multiplies input sample floor(t) - taps/2 + j
        double tau = static_cast<double>(j - taps / 2) - frac;
        table[static_cast<size_t>(phase) * taps + j] = kernel(tau);
      }
    }
  }

  for (size_t n = 0; n < out_len; ++n) {
    const int64_t num = static_cast<int64_t>(n) * p;  // t = num / q input samples
    const int64_t base = num / q;
    const int64_t phase = num % q;
    double acc = 0.0;
    for (int j = 0; j < taps; ++j) {
      int64_t k = base - taps / 2 + j;
      if (k < 0 || k >= static_cast<int64_t>(in_len)) continue;
      double w;
      if (use_table) {
        w = table[static_cast<size_t>(phase) * taps + j];
      } else {
        double t = static_cast<double>(num) / q;
        w = kernel(static_cast<double>(k) - t);
      }
      acc += w * clip.samples[static_cast<size_t>(k)];
    }
    out.samples[n] = static_cast<float>(acc);
  }
  return out;
}

}  // namespace sedkit
