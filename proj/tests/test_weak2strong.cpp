#include "sedkit/weak2strong.hpp"

#include <set>

#include "sedkit/synth.hpp"
#include "test_util.hpp"

using namespace sedkit;
using testutil::TempDir;
using testutil::thrown_code;

namespace {

// mel spectrogram with an energetic band of frames
MelSpectrogram banded_mel(int frames, int active_begin, int active_end, uint64_t seed,
                          double background = 0.01, double active = 1.0) {
  Rng rng(seed);
  MelSpectrogram mel;
  mel.frame_hop_seconds = 500.0 / 32000.0;
  mel.values.resize(frames, 64);
  for (int t = 0; t < frames; ++t)
    for (int b = 0; b < 64; ++b) {
      double v = background * rng.uniform_open0();
      if (t >= active_begin && t < active_end && b >= 10 && b < 20) v += active;
      mel.values(t, b) = static_cast<float>(v);
    }
  return mel;
}

double labeled_duration(const std::vector<Interval>& intervals) {
  double acc = 0.0;
  for (const Interval& iv : intervals) acc += iv.offset - iv.onset;
  return acc;
}

}  // namespace

TEST_CASE("activation curve sums H rows and normalizes by the max") {
  NmfFactors f;
  SECTION("all-zero H gives an all-zero curve") {
    f.H = MatrixD::Zero(3, 8);
    const ActivationCurve c = activation_curve(f, 0.015625);
    for (double v : c.values) REQUIRE(v == 0.0);
  }
  SECTION("a single nonzero column is 1 there and 0 elsewhere") {
    f.H = MatrixD::Zero(3, 8);
    f.H(1, 5) = 2.5;
    const ActivationCurve c = activation_curve(f, 0.015625);
    for (size_t n = 0; n < 8; ++n) REQUIRE(c.values[n] == (n == 5 ? 1.0 : 0.0));
  }
  SECTION("random H matches the sum-then-normalize oracle") {
    Rng rng(3);
    f.H.resize(3, 10);
    for (int r = 0; r < 3; ++r)
      for (int n = 0; n < 10; ++n) f.H(r, n) = rng.uniform(0.0, 2.0);
    const ActivationCurve c = activation_curve(f, 0.015625);
    std::vector<double> expect(10, 0.0);
    double peak = 0.0;
    for (int n = 0; n < 10; ++n) {
      for (int r = 0; r < 3; ++r) expect[static_cast<size_t>(n)] += f.H(r, n);
      peak = std::max(peak, expect[static_cast<size_t>(n)]);
    }
    for (size_t n = 0; n < 10; ++n)
      REQUIRE(std::abs(c.values[n] - expect[n] / peak) < 1e-9);
  }
}

TEST_CASE("mask_to_intervals on an empty mask is empty") {
  CHECK(mask_to_intervals(std::vector<bool>(50, false), 0.1, 0.1, 0.2).empty());
}

TEST_CASE("a single run maps to one interval in seconds") {
  std::vector<bool> mask(600, false);
  for (int t = 100; t <= 199; ++t) mask[static_cast<size_t>(t)] = true;
  const auto intervals = mask_to_intervals(mask, 0.015625, 0.1, 0.2);
  REQUIRE(intervals.size() == 1);
  CHECK(intervals[0].onset == Catch::Approx(1.5625));
  CHECK(intervals[0].offset == Catch::Approx(3.125));
}

TEST_CASE("runs separated by less than max_gap merge") {
  const double hop = 0.1;
  std::vector<bool> mask(40, false);
  for (int t = 10; t <= 19; ++t) mask[static_cast<size_t>(t)] = true;
  for (int t = 23; t <= 30; ++t) mask[static_cast<size_t>(t)] = true;
  // 3-frame gap, merge threshold 5 frames' worth
  const auto merged = mask_to_intervals(mask, hop, 0.0, 5 * hop);
  REQUIRE(merged.size() == 1);
  CHECK(merged[0].onset == Catch::Approx(1.0));
  CHECK(merged[0].offset == Catch::Approx(3.1));
  // a tighter merge threshold keeps them separate
  const auto split = mask_to_intervals(mask, hop, 0.0, 2 * hop);
  REQUIRE(split.size() == 2);
}

TEST_CASE("short merged runs are dropped by min_event") {
  const double hop = 0.1;
  std::vector<bool> mask(40, false);
  mask[5] = true;  // 0.1 s blip
  for (int t = 20; t <= 29; ++t) mask[static_cast<size_t>(t)] = true;
  const auto intervals = mask_to_intervals(mask, hop, 0.15, 0.0);
  REQUIRE(intervals.size() == 1);
  CHECK(intervals[0].onset == Catch::Approx(2.0));
}

TEST_CASE("approximate strong labels localize an energetic band") {
  const MelSpectrogram mel = banded_mel(200, 60, 120, 5);
  WeakClipLabel weak{"clip.wav", {"Tone"}};
  LabelingOptions opts;
  opts.nmf.max_iters = 200;
  const auto events = approximate_strong_labels(mel, weak, opts);
  REQUIRE_FALSE(events.empty());
  const double hop = mel.frame_hop_seconds;
  for (const StrongEvent& ev : events) {
    CHECK(ev.clip_id == "clip.wav");
    CHECK(ev.label == "Tone");
    CHECK(ev.source == "nmf");
    // detected interval stays near the active band
    CHECK(ev.onset >= 55 * hop);
    CHECK(ev.offset <= 125 * hop);
  }
  // union of intervals covers most of the band
  double covered = 0.0;
  for (const StrongEvent& ev : events) covered += ev.offset - ev.onset;
  CHECK(covered >= 0.8 * (120 - 60) * hop);
}

TEST_CASE("every interval is emitted once per weak tag") {
  const MelSpectrogram mel = banded_mel(120, 30, 70, 9);
  WeakClipLabel weak{"clip.wav", {"A", "B"}};
  LabelingOptions opts;
  opts.nmf.max_iters = 150;
  const auto events = approximate_strong_labels(mel, weak, opts);
  REQUIRE(events.size() % 2 == 0);
  for (size_t i = 0; i < events.size(); i += 2) {
    CHECK(events[i].onset == events[i + 1].onset);
    CHECK(events[i].offset == events[i + 1].offset);
    CHECK(events[i].label == "A");
    CHECK(events[i + 1].label == "B");
  }
}

TEST_CASE("an unreachable threshold falls back to one full-clip event per tag") {
  const MelSpectrogram mel = banded_mel(100, 20, 50, 13);
  WeakClipLabel weak{"clip.wav", {"A", "B"}};
  LabelingOptions opts;
  opts.threshold = 0.999999;  // curve exceeds this only at its peak frame
  opts.min_event_seconds = 10.0;  // and a single frame is always dropped
  opts.nmf.max_iters = 50;
  const auto events = approximate_strong_labels(mel, weak, opts);
  REQUIRE(events.size() == 2);
  const double clip_end = 100 * mel.frame_hop_seconds;
  for (const StrongEvent& ev : events) {
    CHECK(ev.onset == 0.0);
    CHECK(ev.offset == Catch::Approx(clip_end));
  }
}

TEST_CASE("emitted labels stay inside the clip and inside the weak tag set") {
  const MelSpectrogram mel = banded_mel(150, 40, 90, 21);
  WeakClipLabel weak{"clip.wav", {"X", "Y"}};
  LabelingOptions opts;
  opts.nmf.max_iters = 100;
  const auto events = approximate_strong_labels(mel, weak, opts);
  const std::set<std::string> tags(weak.tags.begin(), weak.tags.end());
  for (const StrongEvent& ev : events) {
    CHECK(tags.count(ev.label) == 1);
    CHECK(ev.onset >= 0.0);
    CHECK(ev.offset <= 150 * mel.frame_hop_seconds + 1e-9);
    CHECK(ev.onset < ev.offset);
  }
}

TEST_CASE("raising the threshold never increases the labeled duration") {
  const MelSpectrogram mel = banded_mel(200, 50, 130, 33, 0.05, 1.0);
  LabelingOptions opts;
  opts.nmf.R = 1;
  opts.nmf.max_iters = 150;
  opts.nmf.seed = splitmix64(opts.nmf.seed ^ fnv1a64("clip.wav"));
  const MatrixD m = mel.values.transpose().cast<double>();
  const NmfFactors factors = factorize(m, opts.nmf);
  const ActivationCurve curve = activation_curve(factors, mel.frame_hop_seconds);

  double prev = std::numeric_limits<double>::infinity();
  for (double theta : {0.05, 0.2, 0.4, 0.6, 0.8, 0.95}) {
    std::vector<bool> mask(curve.values.size());
    for (size_t i = 0; i < mask.size(); ++i) mask[i] = curve.values[i] >= theta;
    const auto intervals =
        mask_to_intervals(mask, curve.frame_hop_seconds, opts.min_event_seconds,
                          opts.max_gap_seconds);
    const double dur = labeled_duration(intervals);
    REQUIRE(dur <= prev + 1e-12);
    prev = dur;
  }
}

TEST_CASE("a threshold approaching zero labels the whole clip") {
  const MelSpectrogram mel = banded_mel(100, 30, 60, 41, 0.05);
  WeakClipLabel weak{"clip.wav", {"A"}};
  LabelingOptions opts;
  opts.threshold = 1e-12;  // every activation is positive
  opts.nmf.max_iters = 50;
  const auto events = approximate_strong_labels(mel, weak, opts);
  REQUIRE(events.size() == 1);
  CHECK(events[0].onset == 0.0);
  CHECK(events[0].offset == Catch::Approx(100 * mel.frame_hop_seconds));
}

TEST_CASE("labeling is deterministic in clip, tags and options") {
  const MelSpectrogram mel = banded_mel(120, 20, 80, 55);
  WeakClipLabel weak{"clip.wav", {"A"}};
  LabelingOptions opts;
  opts.nmf.max_iters = 100;
  const auto a = approximate_strong_labels(mel, weak, opts);
  const auto b = approximate_strong_labels(mel, weak, opts);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].onset == b[i].onset);
    CHECK(a[i].offset == b[i].offset);
  }
}

TEST_CASE("empty weak tags are rejected and zero mel propagates the NMF error") {
  MelSpectrogram mel;
  mel.values = MatrixF::Zero(50, 64);
  mel.frame_hop_seconds = 0.015625;
  LabelingOptions opts;
  WeakClipLabel no_tags{"clip.wav", {}};
  REQUIRE(thrown_code([&] { approximate_strong_labels(mel, no_tags, opts); }) ==
          Errc::empty_tags);
  WeakClipLabel tagged{"clip.wav", {"A"}};
  REQUIRE(thrown_code([&] { approximate_strong_labels(mel, tagged, opts); }) ==
          Errc::degenerate_input);
}

TEST_CASE("a zero-logit model tags every class at threshold 0.5") {
  const Vocab vocab = Vocab::from({"A", "B", "C"});
  nn::ModelParams<float> model = nn::build_model<float>(nn::Arch::proposed5, 3, 1);
  for (size_t i = 0; i < model.dense_w.numel(); ++i) model.dense_w[i] = 0.0f;
  for (size_t i = 0; i < model.dense_b.numel(); ++i) model.dense_b[i] = 0.0f;
  LogMelSpectrogram logmel;
  logmel.values = MatrixF::Zero(64, 64);
  logmel.frame_hop_seconds = 0.015625;
  const WeakClipLabel tags = tag_unlabeled(model, logmel, vocab, 0.5);
  CHECK(tags.tags == std::vector<std::string>{"A", "B", "C"});
}

TEST_CASE("a threshold above the max probability yields an empty tag set") {
  const Vocab vocab = Vocab::from({"A", "B"});
  nn::ModelParams<float> model = nn::build_model<float>(nn::Arch::proposed5, 2, 2);
  LogMelSpectrogram logmel;
  Rng rng(9);
  logmel.values.resize(64, 64);
  for (Eigen::Index i = 0; i < logmel.values.size(); ++i)
    logmel.values.data()[i] = static_cast<float>(rng.uniform(-1, 1));
  logmel.frame_hop_seconds = 0.015625;
  const nn::FramePosteriors post = nn::infer_posteriors(model, logmel.values, 0.015625);
  const float max_prob = post.values.maxCoeff();
  REQUIRE(max_prob < 1.0f);
  const WeakClipLabel tags =
      tag_unlabeled(model, logmel, vocab, static_cast<double>(max_prob) + 1e-6);
  CHECK(tags.tags.empty());
}

TEST_CASE("tagging rejects a vocabulary that disagrees with the model") {
  const Vocab vocab = Vocab::from({"A", "B", "C"});
  nn::ModelParams<float> model = nn::build_model<float>(nn::Arch::proposed5, 2, 1);
  LogMelSpectrogram logmel;
  logmel.values = MatrixF::Zero(64, 64);
  logmel.frame_hop_seconds = 0.015625;
  REQUIRE(thrown_code([&] { tag_unlabeled(model, logmel, vocab); }) == Errc::shape_mismatch);
}

TEST_CASE("synthetic tone clip labels overlap the true event (IoU >= 0.5)") {
  TempDir tmp("w2s_synth");
  SynthCorpusConfig cfg;
  cfg.n_clips = 1;
  cfg.clip_seconds = 4.0;
  cfg.classes = {{"Tone", Waveform::tone, 440.0}};
  cfg.events_min = cfg.events_max = 1;
  cfg.event_min_seconds = cfg.event_max_seconds = 1.0;
  cfg.snr_db = 20.0;
  cfg.seed = 99;
  const SynthCorpus corpus = generate_synth_corpus(cfg, tmp.path());
  const PlannedEvent truth = corpus.clips[0].events[0];

  const AudioClip clip = decode_wav_file(corpus.audio_dir / (corpus.clips[0].id + ".wav"));
  const ClipFeatures feats = extract_features(clip);
  WeakClipLabel weak{corpus.clips[0].id + ".wav", {"Tone"}};
  LabelingOptions opts;
  const auto events = approximate_strong_labels(feats.mel, weak, opts);
  REQUIRE_FALSE(events.empty());

  double inter = 0.0, uni = 0.0;
  double lo = truth.onset, hi = truth.offset;
  for (const StrongEvent& ev : events) {
    inter += std::max(0.0, std::min(ev.offset, truth.offset) - std::max(ev.onset, truth.onset));
    lo = std::min(lo, ev.onset);
    hi = std::max(hi, ev.offset);
  }
  uni = hi - lo;  // events never overlap each other after interval extraction
  const double iou = inter / uni;
  CHECK(iou >= 0.5);
}
