#pragma once

// Scoring: frame posteriors -> events (median filter, threshold, interval
// merge), event-based F1 with onset/offset collars (greedy one-to-one
// matching per clip and class), and segment-based F1 over 1 s tiles. Both
// metrics micro-average over classes; macro averaging is available as a flag.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "sedkit/common.hpp"
#include "sedkit/manifest.hpp"
#include "sedkit/nn/model.hpp"
#include "sedkit/weak2strong.hpp"

namespace sedkit {

struct DetectionOptions {
  double threshold = 0.5;
  int median_width = 5;  // odd
  double min_event_seconds = 0.1;
  double max_gap_seconds = 0.2;
};

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  int64_t tp = 0;
  int64_t fp = 0;
  int64_t fn = 0;
};

inline PRF prf_from_counts(int64_t tp, int64_t fp, int64_t fn) {
  PRF r;
  r.tp = tp;
  r.fp = fp;
  r.fn = fn;
  r.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  r.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  r.f1 = r.precision + r.recall > 0.0
             ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
             : 0.0;
  return r;
}

// Median filter with reflected boundaries: index -1 maps to 0, n to n-1, etc.
inline std::vector<double> median_filter(const std::vector<double>& x, int width) {
  if (width < 1 || width % 2 == 0) fail(Errc::bad_argument, "median width must be odd");
  const int n = static_cast<int>(x.size());
  if (n == 0 || width == 1) return x;
  std::vector<double> out(static_cast<size_t>(n));
  std::vector<double> window(static_cast<size_t>(width));
  const int r = width / 2;
  for (int i = 0; i < n; ++i) {
    for (int d = -r; d <= r; ++d) {
      int j = i + d;
      if (j < 0) j = -1 - j;
      if (j >= n) j = 2 * n - 1 - j;
      window[static_cast<size_t>(d + r)] = x[static_cast<size_t>(std::clamp(j, 0, n - 1))];
    }
    std::nth_element(window.begin(), window.begin() + r, window.end());
    out[static_cast<size_t>(i)] = window[static_cast<size_t>(r)];
  }
  return out;
}

inline std::vector<StrongEvent> posteriors_to_events(const nn::FramePosteriors& post,
                                                     const std::string& clip_id,
                                                     const Vocab& vocab,
                                                     const DetectionOptions& opts = {}) {
  if (!(opts.threshold > 0.0 && opts.threshold < 1.0))
    fail(Errc::bad_argument, "detection threshold must be in (0,1)");
  std::vector<StrongEvent> events;
  const int t_frames = static_cast<int>(post.values.rows());
  const int k_classes = static_cast<int>(post.values.cols());
  if (k_classes != vocab.size())
    fail(Errc::shape_mismatch, "posterior classes != vocabulary size");
  std::vector<double> track(static_cast<size_t>(t_frames));
  for (int k = 0; k < k_classes; ++k) {
    for (int t = 0; t < t_frames; ++t) track[static_cast<size_t>(t)] = post.values(t, k);
    const std::vector<double> smoothed = median_filter(track, opts.median_width);
    std::vector<bool> mask(smoothed.size());
    for (size_t t = 0; t < smoothed.size(); ++t) mask[t] = smoothed[t] >= opts.threshold;
    for (const Interval& iv :
         mask_to_intervals(mask, post.frame_hop_seconds, opts.min_event_seconds,
                           opts.max_gap_seconds))
      events.push_back({clip_id, iv.onset, iv.offset, vocab.names[static_cast<size_t>(k)],
                        "model"});
  }
  return events;
}

namespace detail {

struct EventRef {
  double onset, offset;
  bool matched = false;
};

inline bool collar_compatible(const EventRef& ref, const EventRef& pred, double onset_collar,
                              double offset_collar, double offset_ratio) {
  const double offset_tol = std::max(offset_collar, offset_ratio * (ref.offset - ref.onset));
  return std::abs(pred.onset - ref.onset) <= onset_collar &&
         std::abs(pred.offset - ref.offset) <= offset_tol;
}

inline std::map<std::pair<std::string, std::string>, std::vector<EventRef>> group_events(
    const std::vector<StrongEvent>& events) {
  std::map<std::pair<std::string, std::string>, std::vector<EventRef>> groups;
  for (const StrongEvent& ev : events)
    groups[{ev.clip_id, ev.label}].push_back({ev.onset, ev.offset});
  for (auto& [key, vec] : groups)
    std::sort(vec.begin(), vec.end(), [](const EventRef& a, const EventRef& b) {
      return a.onset != b.onset ? a.onset < b.onset : a.offset < b.offset;
    });
  return groups;
}

}  // namespace detail

// Greedy one-to-one matching per (clip, class): references in onset order,
// each taking the earliest-onset unmatched compatible prediction.
inline PRF event_based_f1(const std::vector<StrongEvent>& refs,
                          const std::vector<StrongEvent>& preds, double onset_collar = 0.200,
                          double offset_collar = 0.200, double offset_ratio = 0.2,
                          bool macro = false) {
  auto ref_groups = detail::group_events(refs);
  auto pred_groups = detail::group_events(preds);

  std::map<std::string, std::array<int64_t, 3>> per_class;  // tp, fp, fn
  std::set<std::pair<std::string, std::string>> keys;
  for (const auto& [k, v] : ref_groups) keys.insert(k);
  for (const auto& [k, v] : pred_groups) keys.insert(k);

  for (const auto& key : keys) {
    auto rit = ref_groups.find(key);
    auto pit = pred_groups.find(key);
    std::vector<detail::EventRef> empty;
    std::vector<detail::EventRef>& rs = rit == ref_groups.end() ? empty : rit->second;
    std::vector<detail::EventRef>& ps = pit == pred_groups.end() ? empty : pit->second;
    int64_t tp = 0;
    for (detail::EventRef& ref : rs) {
      for (detail::EventRef& pred : ps) {
        if (pred.matched) continue;
        if (detail::collar_compatible(ref, pred, onset_collar, offset_collar, offset_ratio)) {
          pred.matched = true;
          ref.matched = true;
          ++tp;
          break;
        }
      }
    }
    auto& c = per_class[key.second];
    c[0] += tp;
    c[1] += static_cast<int64_t>(ps.size()) - tp;
    c[2] += static_cast<int64_t>(rs.size()) - tp;
  }

  if (macro) {
    double f1_sum = 0.0, p_sum = 0.0, r_sum = 0.0;
    int64_t tp = 0, fp = 0, fn = 0;
    for (const auto& [cls, c] : per_class) {
      const PRF prf = prf_from_counts(c[0], c[1], c[2]);
      f1_sum += prf.f1;
      p_sum += prf.precision;
      r_sum += prf.recall;
      tp += c[0];
      fp += c[1];
      fn += c[2];
    }
    const double n = per_class.empty() ? 1.0 : static_cast<double>(per_class.size());
    PRF out = prf_from_counts(tp, fp, fn);
    out.precision = p_sum / n;
    out.recall = r_sum / n;
    out.f1 = f1_sum / n;
    return out;
  }
  int64_t tp = 0, fp = 0, fn = 0;
  for (const auto& [cls, c] : per_class) {
    tp += c[0];
    fp += c[1];
    fn += c[2];
  }
  return prf_from_counts(tp, fp, fn);
}

// Fixed-length segment tiling (last partial segment included); a segment is
// class-active when any event of that class intersects it.
inline PRF segment_based_f1(const std::vector<StrongEvent>& refs,
                            const std::vector<StrongEvent>& preds,
                            const std::map<std::string, double>& clip_durations,
                            double segment_seconds = 1.0) {
  if (!(segment_seconds > 0.0)) fail(Errc::bad_argument, "segment length must be positive");
  std::map<std::pair<std::string, std::string>, std::vector<detail::EventRef>> ref_groups =
      detail::group_events(refs);
  auto pred_groups = detail::group_events(preds);

  std::set<std::string> classes;
  for (const StrongEvent& e : refs) classes.insert(e.label);
  for (const StrongEvent& e : preds) classes.insert(e.label);

  int64_t tp = 0, fp = 0, fn = 0;
  for (const auto& [clip, duration] : clip_durations) {
    const int n_seg = static_cast<int>(std::ceil(duration / segment_seconds));
    for (const std::string& cls : classes) {
      auto rit = ref_groups.find({clip, cls});
      auto pit = pred_groups.find({clip, cls});
      for (int s = 0; s < n_seg; ++s) {
        const double s0 = s * segment_seconds;
        const double s1 = std::min(duration, s0 + segment_seconds);
        auto active = [&](const std::vector<detail::EventRef>* evs) {
          if (!evs) return false;
          for (const detail::EventRef& ev : *evs)
            if (ev.onset < s1 && ev.offset > s0) return true;
          return false;
        };
        const bool r = active(rit == ref_groups.end() ? nullptr : &rit->second);
        const bool p = active(pit == pred_groups.end() ? nullptr : &pit->second);
        if (r && p) ++tp;
        else if (p) ++fp;
        else if (r) ++fn;
      }
    }
  }
  return prf_from_counts(tp, fp, fn);
}

inline std::map<std::string, double> derive_durations(const std::vector<StrongEvent>& refs,
                                                      const std::vector<StrongEvent>& preds) {
  std::map<std::string, double> durations;
  for (const StrongEvent& e : refs)
    durations[e.clip_id] = std::max(durations[e.clip_id], e.offset);
  for (const StrongEvent& e : preds)
    durations[e.clip_id] = std::max(durations[e.clip_id], e.offset);
  return durations;
}

// ---- Table 2-style report: metric rows x combination columns ------------------

struct ComboScores {
  std::string combo;
  PRF event_based;
  PRF segment_based;
};

inline std::string render_report(const std::vector<ComboScores>& scores) {
  std::string out = "metric";
  for (const ComboScores& s : scores) out += "\t" + s.combo;
  out += "\n";
  char buf[32];
  out += "event_based_f1";
  for (const ComboScores& s : scores) {
    std::snprintf(buf, sizeof(buf), "\t%.4f", s.event_based.f1);
    out += buf;
  }
  out += "\nsegment_based_f1";
  for (const ComboScores& s : scores) {
    std::snprintf(buf, sizeof(buf), "\t%.4f", s.segment_based.f1);
    out += buf;
  }
  out += "\n";
  return out;
}

inline void write_report(const std::filesystem::path& path,
                         const std::vector<ComboScores>& scores) {
  write_file_atomic(path, render_report(scores));
}

// Returns combo -> (event F1, segment F1) at report precision.
inline std::map<std::string, std::pair<double, double>> parse_report(
    const std::filesystem::path& path) {
  std::vector<std::string> lines = detail::read_lines(path);
  if (lines.empty()) fail(Errc::parse_error, "empty report " + path.string());
  const std::vector<std::string> header = detail::split(lines[0], '\t');
  if (header.empty() || header[0] != "metric")
    fail(Errc::parse_error, "bad report header in " + path.string());
  std::map<std::string, std::pair<double, double>> out;
  for (size_t c = 1; c < header.size(); ++c) out[header[c]] = {0.0, 0.0};
  for (size_t li = 1; li < lines.size(); ++li) {
    const std::vector<std::string> fields = detail::split(lines[li], '\t');
    if (fields.size() != header.size())
      fail(Errc::parse_error, "ragged report row in " + path.string());
    for (size_t c = 1; c < fields.size(); ++c) {
      const double v = detail::parse_seconds(fields[c], path.string());
      if (fields[0] == "event_based_f1") out[header[c]].first = v;
      else if (fields[0] == "segment_based_f1") out[header[c]].second = v;
    }
  }
  return out;
}

}  // namespace sedkit
