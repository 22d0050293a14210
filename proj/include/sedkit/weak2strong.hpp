#pragma once

// Weak-to-strong label conversion: factorize the per-clip mel spectrogram,
// sum the activation rows of H, max-normalize, threshold, and emit one event
// per detected interval for every weak tag (activated frames are deemed to
// contain all of the clip's events). Also the reverse direction: weakly
// tagging unlabeled clips with a trained model.

#include <cmath>
#include <string>
#include <vector>

#include "sedkit/common.hpp"
#include "sedkit/features.hpp"
#include "sedkit/manifest.hpp"
#include "sedkit/nmf.hpp"
#include "sedkit/nn/model.hpp"
#include "sedkit/rng.hpp"

namespace sedkit {

struct ActivationCurve {
  std::vector<double> values;  // per frame, in [0,1], max = 1 unless all-zero
  double frame_hop_seconds = 0.0;
};

struct LabelingOptions {
  double threshold = 0.5;          // on the max-normalized activation curve
  double min_event_seconds = 0.1;  // drop merged runs shorter than this
  double max_gap_seconds = 0.2;    // merge runs separated by less than this
  NmfOptions nmf;                  // nmf.R == 0 -> one component per weak tag
};

// Per-frame total activation: column sums of H, divided by their max.
inline ActivationCurve activation_curve(const NmfFactors& factors, double frame_hop_seconds) {
  ActivationCurve curve;
  curve.frame_hop_seconds = frame_hop_seconds;
  curve.values.resize(static_cast<size_t>(factors.H.cols()));
  double peak = 0.0;
  for (Eigen::Index n = 0; n < factors.H.cols(); ++n) {
    const double v = factors.H.col(n).sum();
    curve.values[static_cast<size_t>(n)] = v;
    peak = std::max(peak, v);
  }
  if (peak > 0.0)
    for (double& v : curve.values) v /= peak;
  return curve;
}

struct Interval {
  double onset = 0.0;
  double offset = 0.0;
};

// Maximal runs of true frames; runs separated by gaps shorter than max_gap
// are merged, then merged runs shorter than min_event are dropped.
inline std::vector<Interval> mask_to_intervals(const std::vector<bool>& mask,
                                               double frame_hop_seconds,
                                               double min_event_seconds,
                                               double max_gap_seconds) {
  std::vector<std::pair<size_t, size_t>> runs;  // [first, last_exclusive) frames
  size_t i = 0;
  const size_t n = mask.size();
  while (i < n) {
    if (!mask[i]) {
      ++i;
      continue;
    }
    size_t j = i;
    while (j < n && mask[j]) ++j;
    runs.emplace_back(i, j);
    i = j;
  }
  std::vector<std::pair<size_t, size_t>> merged;
  for (const auto& run : runs) {
    if (!merged.empty() &&
        static_cast<double>(run.first - merged.back().second) * frame_hop_seconds <
            max_gap_seconds) {
      merged.back().second = run.second;
    } else {
      merged.push_back(run);
    }
  }
  std::vector<Interval> out;
  for (const auto& run : merged) {
    const double onset = static_cast<double>(run.first) * frame_hop_seconds;
    const double offset = static_cast<double>(run.second) * frame_hop_seconds;
    if (offset - onset < min_event_seconds) continue;
    out.push_back({onset, offset});
  }
  return out;
}

// NMF activation-thresholding. Falls back to one full-clip event per tag when
// no interval survives, so no training clip ends up label-empty.
inline std::vector<StrongEvent> approximate_strong_labels(const MelSpectrogram& clip_mel,
                                                          const WeakClipLabel& weak,
                                                          const LabelingOptions& opts) {
  if (weak.tags.empty()) fail(Errc::empty_tags, "clip " + weak.clip_id + " has no weak tags");
  NmfOptions nmf_opts = opts.nmf;
  if (nmf_opts.R <= 0) nmf_opts.R = static_cast<int>(weak.tags.size());
  // per-clip substream so results do not depend on processing order
  nmf_opts.seed = splitmix64(opts.nmf.seed ^ fnv1a64(weak.clip_id));

  const MatrixD m = clip_mel.values.transpose().cast<double>();  // L x N
  const NmfFactors factors = factorize(m, nmf_opts);
  const ActivationCurve curve = activation_curve(factors, clip_mel.frame_hop_seconds);

  std::vector<bool> mask(curve.values.size());
  for (size_t i = 0; i < curve.values.size(); ++i) mask[i] = curve.values[i] >= opts.threshold;
  std::vector<Interval> intervals =
      mask_to_intervals(mask, curve.frame_hop_seconds, opts.min_event_seconds,
                        opts.max_gap_seconds);
  if (intervals.empty()) {
    const double clip_end =
        static_cast<double>(curve.values.size()) * curve.frame_hop_seconds;
    intervals.push_back({0.0, clip_end});
  }

  std::vector<StrongEvent> events;
  for (const Interval& iv : intervals)
    for (const std::string& tag : weak.tags)
      events.push_back({weak.clip_id, iv.onset, iv.offset, tag, "nmf"});
  return events;
}

// Weakly tag an unlabeled clip: clip-level probability is the max frame
// posterior per class; classes at or above the threshold become tags. The tag
// set may be empty (such clips are excluded from retraining).
inline WeakClipLabel tag_unlabeled(nn::ModelParams<float>& model,
                                   const LogMelSpectrogram& clip_logmel, const Vocab& vocab,
                                   double tag_threshold = 0.5, int threads = 1) {
  if (model.num_classes != vocab.size())
    fail(Errc::shape_mismatch, "model has " + std::to_string(model.num_classes) +
                                   " classes, vocabulary has " + std::to_string(vocab.size()));
  const nn::FramePosteriors post =
      nn::infer_posteriors(model, clip_logmel.values, clip_logmel.frame_hop_seconds, threads);
  const std::vector<float> probs = nn::clip_probabilities(post);
  WeakClipLabel out;
  for (size_t k = 0; k < probs.size(); ++k)
    if (probs[k] >= tag_threshold) out.tags.push_back(vocab.names[k]);
  return out;
}

}  // namespace sedkit
