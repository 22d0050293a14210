#pragma once

// End-to-end orchestration of the data-combination experiments C1..C7:
// feature extraction, NMF weak-to-strong labeling, model tagging of unlabeled
// clips, training, detection and scoring. Stage outputs are content-addressed
// by a hash of (options, input digests); re-running an unchanged stage is a
// no-op and changing an upstream option invalidates exactly the downstream
// stages.

#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "sedkit/audio.hpp"
#include "sedkit/common.hpp"
#include "sedkit/evaluation.hpp"
#include "sedkit/features.hpp"
#include "sedkit/manifest.hpp"
#include "sedkit/matio.hpp"
#include "sedkit/nmf.hpp"
#include "sedkit/nn/model.hpp"
#include "sedkit/parallel.hpp"
#include "sedkit/synth.hpp"
#include "sedkit/trainer.hpp"
#include "sedkit/weak2strong.hpp"

namespace sedkit {

// ---- flat key=value config ----------------------------------------------------

inline std::map<std::string, std::string> parse_config_file(const std::filesystem::path& path) {
  std::map<std::string, std::string> out;
  for (const std::string& raw : detail::read_lines(path)) {
    std::string line = raw;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto trim = [](std::string s) {
      const size_t b = s.find_first_not_of(" \t");
      if (b == std::string::npos) return std::string();
      const size_t e = s.find_last_not_of(" \t");
      return s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      fail(Errc::parse_error, "expected 'key = value' in " + path.string() + ": " + raw);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) fail(Errc::parse_error, "empty key in " + path.string() + ": " + raw);
    out[key] = value;
  }
  return out;
}

struct PipelineConfig {
  // corpora
  std::filesystem::path weak_audio_dir, weak_manifest;
  std::filesystem::path strong_audio_dir, strong_manifest;
  std::filesystem::path unlabeled_audio_dir;
  std::filesystem::path eval_audio_dir, eval_manifest;
  std::vector<std::string> classes;

  FeatureOptions features;
  LabelingOptions label;  // includes its NmfOptions
  double tag_threshold = 0.5;
  TrainConfig train;
  std::string arch = "proposed5";
  DetectionOptions detect;
  double eval_onset_collar = 0.200;
  double eval_offset_collar = 0.200;
  double eval_offset_ratio = 0.2;
  double eval_segment_seconds = 1.0;

  std::string combo = "C1";
  std::filesystem::path out_dir;
  uint64_t seed = 0;
  std::filesystem::path tag_checkpoint;  // prerequisite for C4..C7
  bool bootstrap = false;                // C5/C7 may train their own tagging model
  int threads = 1;                       // per-clip stage parallelism

  // synth block (used by the synth subcommand)
  SynthCorpusConfig synth;
};

namespace detail {

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  fail(Errc::parse_error, "expected boolean for " + key + ", got '" + v + "'");
}

inline std::vector<SynthClassSpec> parse_synth_classes(const std::string& v) {
  std::vector<SynthClassSpec> out;
  for (const std::string& item : split(v, ',')) {
    const std::vector<std::string> parts = split(item, ':');
    if (parts.size() != 3)
      fail(Errc::parse_error, "expected name:family:f0 in synth.classes, got '" + item + "'");
    SynthClassSpec spec;
    spec.name = parts[0];
    spec.family = waveform_from_string(parts[1]);
    spec.f0 = parse_seconds(parts[2], "synth.classes");
    out.push_back(spec);
  }
  return out;
}

}  // namespace detail

inline PipelineConfig pipeline_config_from_map(const std::map<std::string, std::string>& kv) {
  PipelineConfig cfg;
  cfg.synth.classes = default_synth_classes();
  auto geti = [&](const std::string& v, const std::string& k) {
    return static_cast<int>(std::llround(detail::parse_seconds(v, k)));
  };
  for (const auto& [key, value] : kv) {
    if (key == "paths.weak_audio_dir") cfg.weak_audio_dir = value;
    else if (key == "paths.weak_manifest") cfg.weak_manifest = value;
    else if (key == "paths.strong_audio_dir") cfg.strong_audio_dir = value;
    else if (key == "paths.strong_manifest") cfg.strong_manifest = value;
    else if (key == "paths.unlabeled_audio_dir") cfg.unlabeled_audio_dir = value;
    else if (key == "paths.eval_audio_dir") cfg.eval_audio_dir = value;
    else if (key == "paths.eval_manifest") cfg.eval_manifest = value;
    else if (key == "classes") cfg.classes = detail::split(value, ',');
    else if (key == "combo") cfg.combo = value;
    else if (key == "out") cfg.out_dir = value;
    else if (key == "seed") cfg.seed = std::stoull(value);
    else if (key == "threads") cfg.threads = geti(value, key);
    else if (key == "tag_checkpoint") cfg.tag_checkpoint = value;
    else if (key == "bootstrap") cfg.bootstrap = detail::parse_bool(value, key);
    else if (key == "arch") cfg.arch = value;
    else if (key == "features.sample_rate") cfg.features.sample_rate = geti(value, key);
    else if (key == "features.n_fft") cfg.features.n_fft = geti(value, key);
    else if (key == "features.hop") cfg.features.hop = geti(value, key);
    else if (key == "features.n_mels") cfg.features.n_mels = geti(value, key);
    else if (key == "features.f_min") cfg.features.f_min = detail::parse_seconds(value, key);
    else if (key == "features.f_max") cfg.features.f_max = detail::parse_seconds(value, key);
    else if (key == "features.log_eps") cfg.features.log_eps = detail::parse_seconds(value, key);
    else if (key == "nmf.R") cfg.label.nmf.R = geti(value, key);
    else if (key == "nmf.max_iters") cfg.label.nmf.max_iters = geti(value, key);
    else if (key == "nmf.rel_tol") cfg.label.nmf.rel_tol = detail::parse_seconds(value, key);
    else if (key == "nmf.delta") cfg.label.nmf.delta = detail::parse_seconds(value, key);
    else if (key == "label.threshold") cfg.label.threshold = detail::parse_seconds(value, key);
    else if (key == "label.min_event_seconds")
      cfg.label.min_event_seconds = detail::parse_seconds(value, key);
    else if (key == "label.max_gap_seconds")
      cfg.label.max_gap_seconds = detail::parse_seconds(value, key);
    else if (key == "tag.threshold") cfg.tag_threshold = detail::parse_seconds(value, key);
    else if (key == "train.epochs") cfg.train.epochs = geti(value, key);
    else if (key == "train.batch_size") cfg.train.batch_size = geti(value, key);
    else if (key == "train.lr") cfg.train.lr = detail::parse_seconds(value, key);
    else if (key == "train.crop_frames") cfg.train.crop_frames = geti(value, key);
    else if (key == "train.threads") cfg.train.threads = geti(value, key);
    else if (key == "detect.threshold") cfg.detect.threshold = detail::parse_seconds(value, key);
    else if (key == "detect.median_width") cfg.detect.median_width = geti(value, key);
    else if (key == "detect.min_event_seconds")
      cfg.detect.min_event_seconds = detail::parse_seconds(value, key);
    else if (key == "detect.max_gap_seconds")
      cfg.detect.max_gap_seconds = detail::parse_seconds(value, key);
    else if (key == "eval.onset_collar") cfg.eval_onset_collar = detail::parse_seconds(value, key);
    else if (key == "eval.offset_collar")
      cfg.eval_offset_collar = detail::parse_seconds(value, key);
    else if (key == "eval.offset_ratio") cfg.eval_offset_ratio = detail::parse_seconds(value, key);
    else if (key == "eval.segment_seconds")
      cfg.eval_segment_seconds = detail::parse_seconds(value, key);
    else if (key == "synth.n_clips") cfg.synth.n_clips = geti(value, key);
    else if (key == "synth.clip_seconds") cfg.synth.clip_seconds = detail::parse_seconds(value, key);
    else if (key == "synth.events_min") cfg.synth.events_min = geti(value, key);
    else if (key == "synth.events_max") cfg.synth.events_max = geti(value, key);
    else if (key == "synth.snr_db") cfg.synth.snr_db = detail::parse_seconds(value, key);
    else if (key == "synth.sample_rate") cfg.synth.sample_rate = geti(value, key);
    else if (key == "synth.event_min_seconds")
      cfg.synth.event_min_seconds = detail::parse_seconds(value, key);
    else if (key == "synth.event_max_seconds")
      cfg.synth.event_max_seconds = detail::parse_seconds(value, key);
    else if (key == "synth.noise_rms") cfg.synth.noise_rms = detail::parse_seconds(value, key);
    else if (key == "synth.classes") cfg.synth.classes = detail::parse_synth_classes(value);
    else fail(Errc::parse_error, "unknown config key: " + key);
  }
  cfg.train.seed = cfg.seed;
  cfg.label.nmf.seed = cfg.seed;
  cfg.synth.seed = cfg.seed;
  return cfg;
}

inline PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  return pipeline_config_from_map(parse_config_file(path));
}

// ---- pipeline runner ------------------------------------------------------------

struct StageRecord {
  std::string stage;
  std::filesystem::path path;
  double seconds = 0.0;
};

struct RunManifest {
  std::vector<StageRecord> stages;
  std::filesystem::path report_path;
  std::filesystem::path checkpoint;
  std::vector<ComboScores> scores;
};

class PipelineRunner {
 public:
  explicit PipelineRunner(PipelineConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.out_dir.empty()) fail(Errc::bad_argument, "output directory not set");
    if (cfg_.classes.empty()) fail(Errc::bad_argument, "class vocabulary not set");
    // all stage randomness flows from the run seed
    cfg_.train.seed = cfg_.seed;
    cfg_.label.nmf.seed = cfg_.seed;
    vocab_ = Vocab::from(cfg_.classes);
  }

  const PipelineConfig& config() const { return cfg_; }
  const Vocab& vocab() const { return vocab_; }

  RunManifest run_combination() {
    const std::string& combo = cfg_.combo;
    if (combo.size() != 2 || combo[0] != 'C' || combo[1] < '1' || combo[1] > '7')
      fail(Errc::bad_argument, "combination must be C1..C7, got '" + combo + "'");

    const std::filesystem::path ckpt = train_for_combo(combo);
    const std::filesystem::path eval_features = features_stage("eval", cfg_.eval_audio_dir);
    const std::filesystem::path preds = detect_stage(ckpt, eval_features);
    const ComboScores scores = eval_stage(preds, eval_features);

    manifest_.scores.push_back(scores);
    manifest_.checkpoint = ckpt;
    manifest_.report_path = cfg_.out_dir / "report.tsv";
    write_report(manifest_.report_path, manifest_.scores);
    record("report", manifest_.report_path, 0.0);
    write_manifest_tsv();
    return manifest_;
  }

  // Exposed individually for the CLI subcommands.
  std::filesystem::path features_stage(const std::string& set_name,
                                       const std::filesystem::path& audio_dir) {
    require_dir(audio_dir, set_name + " audio directory");
    const std::vector<std::filesystem::path> wavs = list_wavs(audio_dir);
    uint64_t key = fnv1a64("features:" + feature_key_string());
    for (const auto& p : wavs) {
      key = fnv1a64(p.filename().string(), key);
      key = fnv1a64(std::to_string(file_digest(p)), key);
    }
    auto [dir, cached] = stage_dir("features-" + set_name, key);
    if (cached) {
      record("features:" + set_name, dir, 0.0);
      return dir;
    }
    const auto t0 = std::chrono::steady_clock::now();
    const MelFilterbank fb = build_mel_filterbank(cfg_.features);
    std::vector<std::string> duration_rows(wavs.size());
    parallel_for(wavs.size(), cfg_.threads, [&](size_t i) {
      AudioClip clip = decode_wav_file(wavs[i]);
      if (clip.sample_rate != cfg_.features.sample_rate)
        clip = resample(clip, cfg_.features.sample_rate);
      const Spectrogram spec = stft(clip, cfg_.features);
      const MelSpectrogram mel = apply_mel(spec, fb);
      const LogMelSpectrogram logmel = log_compress(mel, cfg_.features.log_eps);
      const std::string id = wavs[i].filename().string();
      write_matrix(dir / (id + ".mel"), mel.values);
      write_matrix(dir / (id + ".logmel"), logmel.values);
      duration_rows[i] = id + "\t" + format_seconds(clip.duration_seconds()) + "\n";
    });
    std::string durations;
    for (const std::string& row : duration_rows) durations += row;
    write_file_atomic(dir / "durations.tsv", durations);
    mark_done(dir, key);
    record("features:" + set_name, dir, elapsed(t0));
    return dir;
  }

  std::filesystem::path nmf_label_stage(const std::string& name,
                                        const std::filesystem::path& features_dir,
                                        const std::filesystem::path& weak_manifest) {
    uint64_t key = fnv1a64("nmf-label:" + label_key_string());
    key = fnv1a64(std::to_string(file_digest(weak_manifest)), key);
    key = fnv1a64(std::to_string(dir_digest(features_dir)), key);
    auto [dir, cached] = stage_dir("nmf-label-" + name, key);
    const std::filesystem::path out = dir / "approx_strong.tsv";
    if (cached) {
      record("nmf-label:" + name, out, 0.0);
      return out;
    }
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<WeakClipLabel> weak = load_weak_manifest(weak_manifest, vocab_);
    std::vector<std::vector<StrongEvent>> per_clip(weak.size());
    parallel_for(weak.size(), cfg_.threads, [&](size_t i) {
      MelSpectrogram mel;
      mel.values = read_matrix(features_dir / (weak[i].clip_id + ".mel"));
      mel.frame_hop_seconds = cfg_.features.frame_hop_seconds();
      per_clip[i] = approximate_strong_labels(mel, weak[i], cfg_.label);
    });
    std::vector<StrongEvent> events;
    for (auto& v : per_clip) events.insert(events.end(), v.begin(), v.end());
    write_strong_manifest(out, events, /*with_source=*/true);
    mark_done(dir, key);
    record("nmf-label:" + name, out, elapsed(t0));
    return out;
  }

  std::filesystem::path tag_stage(const std::filesystem::path& checkpoint,
                                  const std::filesystem::path& features_dir) {
    uint64_t key = fnv1a64("tag:" + std::to_string(cfg_.tag_threshold));
    key = fnv1a64(std::to_string(file_digest(checkpoint)), key);
    key = fnv1a64(std::to_string(dir_digest(features_dir)), key);
    auto [dir, cached] = stage_dir("tag", key);
    const std::filesystem::path out = dir / "tagged_weak.tsv";
    if (cached) {
      record("tag", out, 0.0);
      return out;
    }
    const auto t0 = std::chrono::steady_clock::now();
    nn::ModelParams<float> model =
        nn::load_checkpoint(checkpoint, nn::arch_from_string(cfg_.arch));
    const std::vector<std::pair<std::string, double>> clips = read_durations(features_dir);
    std::vector<WeakClipLabel> tagged(clips.size());
    parallel_for(clips.size(), cfg_.threads, [&](size_t i) {
      nn::ModelParams<float> local = model;  // BN buffers untouched in eval, copy stays cheap
      LogMelSpectrogram logmel;
      logmel.values = read_matrix(features_dir / (clips[i].first + ".logmel"));
      logmel.frame_hop_seconds = cfg_.features.frame_hop_seconds();
      tagged[i] = tag_unlabeled(local, logmel, vocab_, cfg_.tag_threshold);
      tagged[i].clip_id = clips[i].first;
    });
    std::vector<WeakClipLabel> keep;
    for (const WeakClipLabel& w : tagged)
      if (!w.tags.empty()) keep.push_back(w);
    write_weak_manifest(out, keep);
    mark_done(dir, key);
    record("tag", out, elapsed(t0));
    return out;
  }

  struct Supervision {
    std::filesystem::path features_dir;
    std::filesystem::path events_tsv;
  };

  std::filesystem::path train_stage(const std::string& name,
                                    const std::vector<Supervision>& sources) {
    uint64_t key = fnv1a64("train:" + cfg_.arch + ":" + train_key_string());
    for (const Supervision& s : sources) {
      key = fnv1a64(std::to_string(dir_digest(s.features_dir)), key);
      key = fnv1a64(std::to_string(file_digest(s.events_tsv)), key);
    }
    auto [dir, cached] = stage_dir("train-" + name, key);
    const std::filesystem::path ckpt = dir / "checkpoint.nmfc";
    if (cached) {
      record("train:" + name, ckpt, 0.0);
      return ckpt;
    }
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<TrainExample> dataset = build_dataset(sources);
    nn::ModelParams<float> model =
        nn::build_model<float>(nn::arch_from_string(cfg_.arch), vocab_.size(), cfg_.seed);
    TrainConfig tc = cfg_.train;
    tc.checkpoint_path = ckpt;
    const TrainReport report = train(model, dataset, tc);
    write_train_report(report, dir / "train.log", dir / "epochs.tsv");
    mark_done(dir, key);
    record("train:" + name, ckpt, elapsed(t0));
    return ckpt;
  }

  std::filesystem::path detect_stage(const std::filesystem::path& checkpoint,
                                     const std::filesystem::path& features_dir) {
    uint64_t key = fnv1a64("detect:" + detect_key_string());
    key = fnv1a64(std::to_string(file_digest(checkpoint)), key);
    key = fnv1a64(std::to_string(dir_digest(features_dir)), key);
    auto [dir, cached] = stage_dir("detect", key);
    const std::filesystem::path out = dir / "predictions.tsv";
    if (cached) {
      record("detect", out, 0.0);
      return out;
    }
    const auto t0 = std::chrono::steady_clock::now();
    nn::ModelParams<float> model =
        nn::load_checkpoint(checkpoint, nn::arch_from_string(cfg_.arch));
    const std::vector<std::pair<std::string, double>> clips = read_durations(features_dir);
    std::vector<std::vector<StrongEvent>> per_clip(clips.size());
    parallel_for(clips.size(), cfg_.threads, [&](size_t i) {
      nn::ModelParams<float> local = model;
      LogMelSpectrogram logmel;
      logmel.values = read_matrix(features_dir / (clips[i].first + ".logmel"));
      logmel.frame_hop_seconds = cfg_.features.frame_hop_seconds();
      const nn::FramePosteriors post =
          nn::infer_posteriors(local, logmel.values, logmel.frame_hop_seconds);
      per_clip[i] = posteriors_to_events(post, clips[i].first, vocab_, cfg_.detect);
    });
    std::vector<StrongEvent> events;
    for (auto& v : per_clip) events.insert(events.end(), v.begin(), v.end());
    write_strong_manifest(out, events, /*with_source=*/true);
    mark_done(dir, key);
    record("detect", out, elapsed(t0));
    return out;
  }

  ComboScores eval_stage(const std::filesystem::path& preds_tsv,
                         const std::filesystem::path& eval_features_dir) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<StrongEvent> refs = load_strong_manifest(cfg_.eval_manifest, vocab_);
    const std::vector<StrongEvent> preds = load_strong_manifest(preds_tsv, vocab_);
    std::map<std::string, double> durations;
    for (const auto& [id, dur] : read_durations(eval_features_dir)) durations[id] = dur;
    ComboScores scores;
    scores.combo = cfg_.combo;
    scores.event_based = event_based_f1(refs, preds, cfg_.eval_onset_collar,
                                        cfg_.eval_offset_collar, cfg_.eval_offset_ratio);
    scores.segment_based = segment_based_f1(refs, preds, durations, cfg_.eval_segment_seconds);
    record("eval", cfg_.eval_manifest, elapsed(t0));
    return scores;
  }

 private:
  std::filesystem::path train_for_combo(const std::string& combo) {
    if (combo == "C1") {
      const auto wf = features_stage("weak", cfg_.weak_audio_dir);
      const auto labels = nmf_label_stage("weak", wf, require_file(cfg_.weak_manifest, "weak manifest"));
      return train_stage("c1", {{wf, labels}});
    }
    if (combo == "C2") {
      const auto sf = features_stage("strong", cfg_.strong_audio_dir);
      return train_stage("c2", {{sf, require_file(cfg_.strong_manifest, "strong manifest")}});
    }
    if (combo == "C3") {
      const auto wf = features_stage("weak", cfg_.weak_audio_dir);
      const auto labels = nmf_label_stage("weak", wf, require_file(cfg_.weak_manifest, "weak manifest"));
      const auto sf = features_stage("strong", cfg_.strong_audio_dir);
      return train_stage("c3", {{wf, labels},
                                {sf, require_file(cfg_.strong_manifest, "strong manifest")}});
    }
    if (combo == "C4" || combo == "C6") {
      const auto ulabels = tagged_unlabeled_labels(tagging_checkpoint(combo));
      return train_stage(combo == "C4" ? "c4" : "c6", {ulabels});
    }
    if (combo == "C5") {
      const auto wf = features_stage("weak", cfg_.weak_audio_dir);
      const auto labels = nmf_label_stage("weak", wf, require_file(cfg_.weak_manifest, "weak manifest"));
      const auto ulabels = tagged_unlabeled_labels(tagging_checkpoint(combo));
      return train_stage("c5", {{wf, labels}, ulabels});
    }
    // C7
    const auto wf = features_stage("weak", cfg_.weak_audio_dir);
    const auto labels = nmf_label_stage("weak", wf, require_file(cfg_.weak_manifest, "weak manifest"));
    const auto sf = features_stage("strong", cfg_.strong_audio_dir);
    const auto ulabels = tagged_unlabeled_labels(tagging_checkpoint(combo));
    return train_stage("c7", {{wf, labels},
                              {sf, require_file(cfg_.strong_manifest, "strong manifest")},
                              ulabels});
  }

  // C4/C6 require an explicitly configured checkpoint; C5/C7 may bootstrap
  // one (C1 and C3 respectively) when enabled.
  std::filesystem::path tagging_checkpoint(const std::string& combo) {
    if (!cfg_.tag_checkpoint.empty()) return require_file(cfg_.tag_checkpoint, "tag checkpoint");
    if (combo == "C4" || combo == "C6")
      fail(Errc::missing_prerequisite,
           combo + " needs tag_checkpoint (a previously trained model)");
    if (!cfg_.bootstrap)
      fail(Errc::missing_prerequisite,
           combo + " needs tag_checkpoint, or enable bootstrap to train one");
    if (combo == "C5") {
      const auto wf = features_stage("weak", cfg_.weak_audio_dir);
      const auto labels = nmf_label_stage("weak", wf, require_file(cfg_.weak_manifest, "weak manifest"));
      return train_stage("c1", {{wf, labels}});
    }
    const auto wf = features_stage("weak", cfg_.weak_audio_dir);
    const auto labels = nmf_label_stage("weak", wf, require_file(cfg_.weak_manifest, "weak manifest"));
    const auto sf = features_stage("strong", cfg_.strong_audio_dir);
    return train_stage("c3", {{wf, labels},
                              {sf, require_file(cfg_.strong_manifest, "strong manifest")}});
  }

  Supervision tagged_unlabeled_labels(const std::filesystem::path& ckpt) {
    const auto uf = features_stage("unlabeled", cfg_.unlabeled_audio_dir);
    const auto tagged = tag_stage(ckpt, uf);
    const auto labels = nmf_label_stage("unlabeled", uf, tagged);
    return {uf, labels};
  }

  std::vector<TrainExample> build_dataset(const std::vector<Supervision>& sources) {
    std::vector<TrainExample> dataset;
    const double hop = cfg_.features.frame_hop_seconds();
    for (const Supervision& src : sources) {
      const std::vector<StrongEvent> events = load_strong_manifest(src.events_tsv, vocab_);
      std::map<std::string, std::vector<StrongEvent>> by_clip;
      for (const StrongEvent& ev : events) by_clip[ev.clip_id].push_back(ev);
      std::map<std::string, double> durations;
      for (const auto& [id, dur] : read_durations(src.features_dir)) durations[id] = dur;
      for (const auto& [clip_id, clip_events] : by_clip) {
        auto dit = durations.find(clip_id);
        if (dit == durations.end())
          fail(Errc::missing_prerequisite,
               "no features for labeled clip " + clip_id + " under " +
                   src.features_dir.string());
        for (const StrongEvent& ev : clip_events)
          if (ev.onset < 0.0 || ev.offset > dit->second + 1e-6)
            fail(Errc::bad_argument, "event outside clip bounds: " + clip_id + " [" +
                                         format_seconds(ev.onset) + ", " +
                                         format_seconds(ev.offset) + "] vs duration " +
                                         format_seconds(dit->second));
        TrainExample ex;
        ex.clip_id = clip_id;
        ex.logmel = read_matrix(src.features_dir / (clip_id + ".logmel"));
        ex.labels = rasterize_labels(clip_events, static_cast<int>(ex.logmel.rows()), hop, vocab_);
        dataset.push_back(std::move(ex));
      }
    }
    if (dataset.empty()) fail(Errc::bad_argument, "no labeled clips in training supervision");
    return dataset;
  }

  // ---- stage cache helpers ----

  std::pair<std::filesystem::path, bool> stage_dir(const std::string& name, uint64_t key) {
    namespace fs = std::filesystem;
    const fs::path dir = cfg_.out_dir / "stages" / (name + "-" + hex16(key));
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) fail(Errc::io_error, "cannot create " + dir.string() + ": " + ec.message());
    const bool cached = fs::exists(dir / ".done");
    return {dir, cached};
  }

  void mark_done(const std::filesystem::path& dir, uint64_t key) {
    write_file_atomic(dir / ".done", hex16(key) + "\n");
  }

  uint64_t file_digest(const std::filesystem::path& path) {
    const std::string key = path.string();
    auto it = digest_memo_.find(key);
    if (it != digest_memo_.end()) return it->second;
    const uint64_t d = fnv1a64(read_file(path));
    digest_memo_.emplace(key, d);
    return d;
  }

  uint64_t dir_digest(const std::filesystem::path& dir) {
    // stage outputs carry a .done stamp whose key already identifies content
    const std::filesystem::path stamp = dir / ".done";
    if (std::filesystem::exists(stamp)) return fnv1a64(read_file(stamp));
    return fnv1a64(dir.string());
  }

  std::vector<std::filesystem::path> list_wavs(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> wavs;
    for (const auto& entry : std::filesystem::directory_iterator(dir))
      if (entry.is_regular_file() && entry.path().extension() == ".wav")
        wavs.push_back(entry.path());
    std::sort(wavs.begin(), wavs.end());
    if (wavs.empty()) fail(Errc::bad_argument, "no .wav files under " + dir.string());
    return wavs;
  }

  std::vector<std::pair<std::string, double>> read_durations(
      const std::filesystem::path& features_dir) {
    std::vector<std::pair<std::string, double>> out;
    for (const std::string& line : detail::read_lines(features_dir / "durations.tsv")) {
      const std::vector<std::string> fields = detail::split(line, '\t');
      if (fields.size() != 2) fail(Errc::parse_error, "bad durations row: " + line);
      out.emplace_back(fields[0], detail::parse_seconds(fields[1], "durations.tsv"));
    }
    return out;
  }

  const std::filesystem::path& require_file(const std::filesystem::path& p,
                                            const std::string& what) {
    if (p.empty() || !std::filesystem::exists(p))
      fail(Errc::missing_prerequisite, what + " not found: " + p.string());
    return p;
  }

  void require_dir(const std::filesystem::path& p, const std::string& what) {
    if (p.empty() || !std::filesystem::is_directory(p))
      fail(Errc::missing_prerequisite, what + " not found: " + p.string());
  }

  // ---- option serialization for cache keys ----

  std::string feature_key_string() const {
    const FeatureOptions& f = cfg_.features;
    return std::to_string(f.sample_rate) + "," + std::to_string(f.n_fft) + "," +
           std::to_string(f.hop) + "," + std::to_string(f.n_mels) + "," +
           std::to_string(f.f_min) + "," + std::to_string(f.f_max) + "," +
           std::to_string(f.log_eps);
  }

  std::string label_key_string() const {
    const LabelingOptions& l = cfg_.label;
    return std::to_string(l.threshold) + "," + std::to_string(l.min_event_seconds) + "," +
           std::to_string(l.max_gap_seconds) + "," + std::to_string(l.nmf.R) + "," +
           std::to_string(l.nmf.max_iters) + "," + std::to_string(l.nmf.rel_tol) + "," +
           std::to_string(l.nmf.delta) + "," + std::to_string(l.nmf.seed);
  }

  std::string train_key_string() const {
    const TrainConfig& t = cfg_.train;
    std::string classes;
    for (const std::string& c : cfg_.classes) classes += c + "|";
    return std::to_string(t.epochs) + "," + std::to_string(t.batch_size) + "," +
           std::to_string(t.lr) + "," + std::to_string(t.crop_frames) + "," +
           std::to_string(t.seed) + "," + std::to_string(t.threads) + "," + classes;
  }

  std::string detect_key_string() const {
    const DetectionOptions& d = cfg_.detect;
    return std::to_string(d.threshold) + "," + std::to_string(d.median_width) + "," +
           std::to_string(d.min_event_seconds) + "," + std::to_string(d.max_gap_seconds);
  }

  void record(const std::string& stage, const std::filesystem::path& path, double seconds) {
    manifest_.stages.push_back({stage, path, seconds});
  }

  void write_manifest_tsv() {
    std::string out = "stage\tpath\tseconds\n";
    for (const StageRecord& r : manifest_.stages) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.3f", r.seconds);
      out += r.stage + "\t" + r.path.string() + "\t" + buf + "\n";
    }
    write_file_atomic(cfg_.out_dir / "manifest.tsv", out);
  }

  static double elapsed(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

  PipelineConfig cfg_;
  Vocab vocab_;
  RunManifest manifest_;
  std::unordered_map<std::string, uint64_t> digest_memo_;
};

}  // namespace sedkit
