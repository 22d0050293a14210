#pragma once

// Desk-scale synthetic corpus: white-noise background plus spectrally
// disjoint per-class events (tone / chirp / AM tone) at a configured SNR,
// with exact ground-truth manifests. Pure function of (config, seed).

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "sedkit/audio.hpp"
#include "sedkit/common.hpp"
#include "sedkit/manifest.hpp"
#include "sedkit/rng.hpp"

namespace sedkit {

enum class Waveform { tone, chirp, am };

inline Waveform waveform_from_string(const std::string& s) {
  if (s == "tone") return Waveform::tone;
  if (s == "chirp") return Waveform::chirp;
  if (s == "am") return Waveform::am;
  fail(Errc::bad_argument, "unknown waveform family: " + s);
}

struct SynthClassSpec {
  std::string name;
  Waveform family = Waveform::tone;
  double f0 = 440.0;  // Hz
};

struct SynthCorpusConfig {
  int n_clips = 0;
  double clip_seconds = 10.0;
  std::vector<SynthClassSpec> classes;
  int events_min = 1;
  int events_max = 3;
  double snr_db = 20.0;
  uint64_t seed = 0;
  int sample_rate = 32000;
  double event_min_seconds = 0.5;
  double event_max_seconds = 2.5;
  double noise_rms = 0.03;
};

inline std::vector<SynthClassSpec> default_synth_classes() {
  return {{"Tone", Waveform::tone, 440.0},
          {"Chirp", Waveform::chirp, 1200.0},
          {"AmTone", Waveform::am, 3000.0}};
}

struct PlannedEvent {
  int class_idx = 0;
  double onset = 0.0;
  double offset = 0.0;
};

struct PlannedClip {
  std::string id;
  std::vector<PlannedEvent> events;
};

struct SynthCorpus {
  std::filesystem::path audio_dir;
  std::filesystem::path strong_manifest;
  std::filesystem::path weak_manifest;
  std::vector<PlannedClip> clips;
};

namespace detail {

inline void validate(const SynthCorpusConfig& cfg) {
  if (cfg.n_clips < 0) fail(Errc::bad_argument, "n_clips must be >= 0");
  if (!std::isfinite(cfg.snr_db)) fail(Errc::bad_argument, "snr_db must be finite");
  if (cfg.events_min < 0) fail(Errc::bad_argument, "events_per_clip min must be >= 0");
  if (cfg.events_max < cfg.events_min) fail(Errc::bad_argument, "events_per_clip range empty");
  if (cfg.clip_seconds <= 0.0) fail(Errc::bad_argument, "clip_seconds must be positive");
  if (cfg.sample_rate <= 0) fail(Errc::bad_argument, "sample_rate must be positive");
  if (cfg.n_clips > 0 && cfg.events_max > 0 && cfg.classes.empty())
    fail(Errc::bad_argument, "no classes configured");
  if (cfg.event_min_seconds <= 0.0 || cfg.event_max_seconds < cfg.event_min_seconds)
    fail(Errc::bad_argument, "bad event duration range");
  for (size_t i = 0; i < cfg.classes.size(); ++i)
    for (size_t j = i + 1; j < cfg.classes.size(); ++j)
      if (cfg.classes[i].f0 == cfg.classes[j].f0)
        fail(Errc::bad_argument, "class fundamentals must be pairwise distinct");
}

inline std::string clip_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "clip_%05d", index);
  return buf;
}

// Event waveform at time t (seconds past onset), unit amplitude, pre-gate.
inline double event_sample(const SynthClassSpec& cls, double t, double duration) {
  switch (cls.family) {
    case Waveform::tone:
      return std::sin(2.0 * M_PI * cls.f0 * t);
    case Waveform::chirp: {
      // linear sweep f0 -> 1.5*f0 across the event
      const double rate = 0.5 * cls.f0 / duration;
      return std::sin(2.0 * M_PI * (cls.f0 * t + 0.5 * rate * t * t));
    }
    case Waveform::am:
      return std::sin(2.0 * M_PI * cls.f0 * t) * (0.6 + 0.4 * std::sin(2.0 * M_PI * 8.0 * t));
  }
  return 0.0;
}

}  // namespace detail

inline PlannedClip plan_clip(const SynthCorpusConfig& cfg, int index) {
  Rng rng = Rng(cfg.seed).fork("plan:" + std::to_string(index));
  PlannedClip clip;
  clip.id = detail::clip_name(index);
  const int n_events = static_cast<int>(rng.uniform_int(cfg.events_min, cfg.events_max));
  const double margin = 0.2;
  for (int e = 0; e < n_events; ++e) {
    PlannedEvent ev;
    ev.class_idx = static_cast<int>(rng.uniform_int(0, static_cast<int64_t>(cfg.classes.size()) - 1));
    const double max_dur =
        std::min(cfg.event_max_seconds, cfg.clip_seconds - 2.0 * margin);
    const double min_dur = std::min(cfg.event_min_seconds, max_dur);
    const double dur = rng.uniform(min_dur, max_dur);
    ev.onset = rng.uniform(margin, cfg.clip_seconds - dur - margin);
    ev.offset = ev.onset + dur;
    clip.events.push_back(ev);
  }
  std::sort(clip.events.begin(), clip.events.end(),
            [](const PlannedEvent& a, const PlannedEvent& b) { return a.onset < b.onset; });
  return clip;
}

inline AudioClip render_clip(const SynthCorpusConfig& cfg, const PlannedClip& plan) {
  Rng rng = Rng(cfg.seed).fork("noise:" + plan.id);
  const size_t n = static_cast<size_t>(std::llround(cfg.clip_seconds * cfg.sample_rate));
  AudioClip clip;
  clip.id = plan.id;
  clip.sample_rate = cfg.sample_rate;
  clip.samples.resize(n);

  std::vector<double> mix(n);
  for (size_t i = 0; i < n; ++i) mix[i] = rng.normal(0.0, cfg.noise_rms);

  // sine RMS is A/sqrt(2); pick A for the configured SNR over the noise floor
  const double amp = std::sqrt(2.0) * cfg.noise_rms * std::pow(10.0, cfg.snr_db / 20.0);
  const double fade = 0.010;  // raised-cosine gate, seconds
  for (const PlannedEvent& ev : plan.events) {
    const SynthClassSpec& cls = cfg.classes[static_cast<size_t>(ev.class_idx)];
    const double dur = ev.offset - ev.onset;
    const size_t first = static_cast<size_t>(std::ceil(ev.onset * cfg.sample_rate));
    const size_t last = std::min(n, static_cast<size_t>(std::ceil(ev.offset * cfg.sample_rate)));
    for (size_t i = first; i < last; ++i) {
      const double t = static_cast<double>(i) / cfg.sample_rate - ev.onset;
      double gate = 1.0;
      if (t < fade) gate = 0.5 * (1.0 - std::cos(M_PI * t / fade));
      const double t_left = dur - t;
      if (t_left < fade) gate = std::min(gate, 0.5 * (1.0 - std::cos(M_PI * t_left / fade)));
      mix[i] += amp * gate * detail::event_sample(cls, t, dur);
    }
  }
  for (size_t i = 0; i < n; ++i)
    clip.samples[i] = static_cast<float>(std::clamp(mix[i], -1.0, 1.0));
  return clip;
}

inline SynthCorpus generate_synth_corpus(const SynthCorpusConfig& cfg,
                                         const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  detail::validate(cfg);

  SynthCorpus corpus;
  corpus.audio_dir = out_dir / "audio";
  corpus.strong_manifest = out_dir / "strong.tsv";
  corpus.weak_manifest = out_dir / "weak.tsv";
  std::error_code ec;
  fs::create_directories(corpus.audio_dir, ec);
  if (ec) fail(Errc::io_error, "cannot create " + corpus.audio_dir.string() + ": " + ec.message());

  std::vector<StrongEvent> strong;
  std::vector<WeakClipLabel> weak;
  for (int i = 0; i < cfg.n_clips; ++i) {
    PlannedClip plan = plan_clip(cfg, i);
    AudioClip audio = render_clip(cfg, plan);
    write_wav_pcm16(corpus.audio_dir / (plan.id + ".wav"), audio);

    WeakClipLabel wl;
    wl.clip_id = plan.id + ".wav";
    for (const PlannedEvent& ev : plan.events) {
      StrongEvent se;
      se.clip_id = wl.clip_id;
      se.onset = ev.onset;
      se.offset = ev.offset;
      se.label = cfg.classes[static_cast<size_t>(ev.class_idx)].name;
      se.source = "ground_truth";
      strong.push_back(se);
    }
    // weak tags = set of event classes, in vocabulary order
    for (const SynthClassSpec& cls : cfg.classes) {
      bool present = std::any_of(plan.events.begin(), plan.events.end(), [&](const PlannedEvent& e) {
        return cfg.classes[static_cast<size_t>(e.class_idx)].name == cls.name;
      });
      if (present) wl.tags.push_back(cls.name);
    }
    if (!wl.tags.empty()) weak.push_back(wl);
    corpus.clips.push_back(std::move(plan));
  }
  write_strong_manifest(corpus.strong_manifest, strong);
  write_weak_manifest(corpus.weak_manifest, weak);
  return corpus;
}

}  // namespace sedkit
