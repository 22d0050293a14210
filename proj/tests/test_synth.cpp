#include "sedkit/synth.hpp"

#include <cmath>

#include "sedkit/manifest.hpp"
#include "test_util.hpp"

using namespace sedkit;
using testutil::TempDir;
using testutil::thrown_code;

namespace {

SynthCorpusConfig small_config(uint64_t seed = 42) {
  SynthCorpusConfig cfg;
  cfg.n_clips = 4;
  cfg.clip_seconds = 3.0;
  cfg.classes = default_synth_classes();
  cfg.events_min = 1;
  cfg.events_max = 2;
  cfg.snr_db = 20.0;
  cfg.seed = seed;
  return cfg;
}

double rms(const std::vector<float>& x, size_t begin, size_t end) {
  double acc = 0.0;
  for (size_t i = begin; i < end; ++i) acc += static_cast<double>(x[i]) * x[i];
  return std::sqrt(acc / static_cast<double>(end - begin));
}

}  // namespace

TEST_CASE("n_clips = 0 produces empty manifests and no audio") {
  TempDir tmp("synth_empty");
  SynthCorpusConfig cfg = small_config();
  cfg.n_clips = 0;
  const SynthCorpus corpus = generate_synth_corpus(cfg, tmp.path());
  CHECK(read_file(corpus.strong_manifest).empty());
  CHECK(read_file(corpus.weak_manifest).empty());
  CHECK(std::filesystem::is_empty(corpus.audio_dir));
}

TEST_CASE("strong manifest records the planned event bounds exactly") {
  TempDir tmp("synth_bounds");
  SynthCorpusConfig cfg = small_config();
  cfg.n_clips = 3;
  cfg.events_min = cfg.events_max = 1;
  const SynthCorpus corpus = generate_synth_corpus(cfg, tmp.path());
  const Vocab vocab = Vocab::from({"Tone", "Chirp", "AmTone"});
  const auto events = load_strong_manifest(corpus.strong_manifest, vocab);
  REQUIRE(events.size() == 3);
  for (size_t i = 0; i < events.size(); ++i) {
    const PlannedEvent& planned = corpus.clips[i].events[0];
    CHECK(events[i].onset == Catch::Approx(planned.onset).margin(1e-6));
    CHECK(events[i].offset == Catch::Approx(planned.offset).margin(1e-6));
    CHECK(events[i].label == cfg.classes[static_cast<size_t>(planned.class_idx)].name);
  }
}

TEST_CASE("weak tags equal the set of event classes per clip") {
  TempDir tmp("synth_weak");
  SynthCorpusConfig cfg = small_config(7);
  cfg.n_clips = 10;
  cfg.events_max = 3;
  const SynthCorpus corpus = generate_synth_corpus(cfg, tmp.path());
  const Vocab vocab = Vocab::from({"Tone", "Chirp", "AmTone"});
  const auto weak = load_weak_manifest(corpus.weak_manifest, vocab);
  const auto strong = load_strong_manifest(corpus.strong_manifest, vocab);
  for (const WeakClipLabel& w : weak) {
    std::set<std::string> from_strong;
    for (const StrongEvent& e : strong)
      if (e.clip_id == w.clip_id) from_strong.insert(e.label);
    const std::set<std::string> tags(w.tags.begin(), w.tags.end());
    CHECK(tags == from_strong);
  }
}

TEST_CASE("every generated event lies inside its clip") {
  TempDir tmp("synth_inside");
  SynthCorpusConfig cfg = small_config(11);
  cfg.n_clips = 20;
  const SynthCorpus corpus = generate_synth_corpus(cfg, tmp.path());
  for (const PlannedClip& clip : corpus.clips)
    for (const PlannedEvent& ev : clip.events) {
      CHECK(ev.onset >= 0.0);
      CHECK(ev.offset > ev.onset);
      CHECK(ev.offset <= cfg.clip_seconds);
    }
}

TEST_CASE("equal seeds give byte-identical corpora") {
  TempDir a("synth_det_a"), b("synth_det_b");
  const SynthCorpus ca = generate_synth_corpus(small_config(123), a.path());
  const SynthCorpus cb = generate_synth_corpus(small_config(123), b.path());
  CHECK(read_file(ca.strong_manifest) == read_file(cb.strong_manifest));
  CHECK(read_file(ca.weak_manifest) == read_file(cb.weak_manifest));
  for (const PlannedClip& clip : ca.clips) {
    const std::string wav = clip.id + ".wav";
    CHECK(read_file(ca.audio_dir / wav) == read_file(cb.audio_dir / wav));
  }
  const SynthCorpus cc = generate_synth_corpus(small_config(124), a.path());
  CHECK(read_file(cc.strong_manifest) != read_file(cb.strong_manifest));
}

TEST_CASE("events carry the configured SNR over the noise floor") {
  TempDir tmp("synth_snr");
  SynthCorpusConfig cfg = small_config(5);
  cfg.n_clips = 1;
  cfg.events_min = cfg.events_max = 1;
  cfg.classes = {{"Tone", Waveform::tone, 440.0}};
  cfg.event_min_seconds = cfg.event_max_seconds = 1.0;
  const SynthCorpus corpus = generate_synth_corpus(cfg, tmp.path());
  const AudioClip clip = decode_wav_file(corpus.audio_dir / (corpus.clips[0].id + ".wav"));
  const PlannedEvent& ev = corpus.clips[0].events[0];
  const size_t on = static_cast<size_t>((ev.onset + 0.1) * cfg.sample_rate);
  const size_t off = static_cast<size_t>((ev.offset - 0.1) * cfg.sample_rate);
  const double inside = rms(clip.samples, on, off);
  const double before = rms(clip.samples, 0, static_cast<size_t>(ev.onset * cfg.sample_rate) - 400);
  // 20 dB SNR: event RMS ~ 10x the noise RMS
  CHECK(inside / before > 5.0);
  CHECK(inside / before < 20.0);
  for (float s : clip.samples) {
    REQUIRE(std::isfinite(s));
    REQUIRE(std::abs(s) <= 1.0f);
  }
}

TEST_CASE("invalid configurations are rejected") {
  TempDir tmp("synth_bad");
  SECTION("duplicate fundamentals") {
    SynthCorpusConfig cfg = small_config();
    cfg.classes = {{"A", Waveform::tone, 440.0}, {"B", Waveform::chirp, 440.0}};
    REQUIRE(thrown_code([&] { generate_synth_corpus(cfg, tmp.path()); }) == Errc::bad_argument);
  }
  SECTION("non-finite snr") {
    SynthCorpusConfig cfg = small_config();
    cfg.snr_db = std::nan("");
    REQUIRE(thrown_code([&] { generate_synth_corpus(cfg, tmp.path()); }) == Errc::bad_argument);
  }
  SECTION("negative events_min") {
    SynthCorpusConfig cfg = small_config();
    cfg.events_min = -1;
    REQUIRE(thrown_code([&] { generate_synth_corpus(cfg, tmp.path()); }) == Errc::bad_argument);
  }
}
