#pragma once

// Independent brute-force oracles for the F1 metrics, shared by the unit
// tests and the acceptance suite.

#include <map>
#include <set>
#include <string>
#include <vector>

#include "sedkit/evaluation.hpp"
#include "sedkit/manifest.hpp"
#include "sedkit/rng.hpp"

namespace metric_oracle {

using sedkit::Rng;
using sedkit::StrongEvent;

// Maximum bipartite matching between refs and preds of one (clip, class)
// block under the collar compatibility relation, via augmenting paths.
inline int64_t max_matching_block(const std::vector<StrongEvent>& refs,
                                  const std::vector<StrongEvent>& preds, double onset_collar,
                                  double offset_collar, double offset_ratio) {
  const size_t nr = refs.size(), np = preds.size();
  std::vector<std::vector<size_t>> adj(nr);
  for (size_t r = 0; r < nr; ++r)
    for (size_t p = 0; p < np; ++p) {
      const double offset_tol =
          std::max(offset_collar, offset_ratio * (refs[r].offset - refs[r].onset));
      if (std::abs(preds[p].onset - refs[r].onset) <= onset_collar &&
          std::abs(preds[p].offset - refs[r].offset) <= offset_tol)
        adj[r].push_back(p);
    }
  std::vector<int> match_of_pred(np, -1);
  std::vector<char> visited;
  std::function<bool(size_t)> augment = [&](size_t r) -> bool {
    for (size_t p : adj[r]) {
      if (visited[p]) continue;
      visited[p] = 1;
      if (match_of_pred[p] < 0 || augment(static_cast<size_t>(match_of_pred[p]))) {
        match_of_pred[p] = static_cast<int>(r);
        return true;
      }
    }
    return false;
  };
  int64_t matched = 0;
  for (size_t r = 0; r < nr; ++r) {
    visited.assign(np, 0);
    if (augment(r)) ++matched;
  }
  return matched;
}

// Optimal TP count over all (clip, class) blocks.
inline int64_t optimal_event_tp(const std::vector<StrongEvent>& refs,
                                const std::vector<StrongEvent>& preds, double onset_collar = 0.2,
                                double offset_collar = 0.2, double offset_ratio = 0.2) {
  std::map<std::pair<std::string, std::string>, std::pair<std::vector<StrongEvent>,
                                                          std::vector<StrongEvent>>> blocks;
  for (const StrongEvent& e : refs) blocks[{e.clip_id, e.label}].first.push_back(e);
  for (const StrongEvent& e : preds) blocks[{e.clip_id, e.label}].second.push_back(e);
  int64_t total = 0;
  for (const auto& [key, block] : blocks)
    total += max_matching_block(block.first, block.second, onset_collar, offset_collar,
                                offset_ratio);
  return total;
}

// Per-segment double-loop oracle for segment-based counts.
inline sedkit::PRF segment_oracle(const std::vector<StrongEvent>& refs,
                                  const std::vector<StrongEvent>& preds,
                                  const std::map<std::string, double>& durations,
                                  double segment_seconds = 1.0) {
  std::set<std::string> classes;
  for (const StrongEvent& e : refs) classes.insert(e.label);
  for (const StrongEvent& e : preds) classes.insert(e.label);
  int64_t tp = 0, fp = 0, fn = 0;
  for (const auto& [clip, duration] : durations) {
    const int n_seg = static_cast<int>(std::ceil(duration / segment_seconds));
    for (const std::string& cls : classes) {
      for (int s = 0; s < n_seg; ++s) {
        const double s0 = s * segment_seconds;
        const double s1 = std::min(duration, s0 + segment_seconds);
        bool r_active = false, p_active = false;
        for (const StrongEvent& e : refs)
          if (e.clip_id == clip && e.label == cls && e.onset < s1 && e.offset > s0)
            r_active = true;
        for (const StrongEvent& e : preds)
          if (e.clip_id == clip && e.label == cls && e.onset < s1 && e.offset > s0)
            p_active = true;
        if (r_active && p_active) ++tp;
        else if (p_active) ++fp;
        else if (r_active) ++fn;
      }
    }
  }
  return sedkit::prf_from_counts(tp, fp, fn);
}

// Random small instance: up to max_events refs and preds over two classes in
// one 10 s clip, with some preds jittered near refs so matches exist.
struct Instance {
  std::vector<StrongEvent> refs, preds;
};

inline Instance random_instance(uint64_t seed, int max_events = 6) {
  Rng rng(seed);
  Instance inst;
  const std::vector<std::string> classes = {"A", "B"};
  const int n_refs = static_cast<int>(rng.uniform_int(0, max_events));
  for (int i = 0; i < n_refs; ++i) {
    StrongEvent ev;
    ev.clip_id = "clip";
    ev.onset = rng.uniform(0.0, 8.0);
    ev.offset = ev.onset + rng.uniform(0.2, 2.0);
    ev.label = classes[static_cast<size_t>(rng.uniform_int(0, 1))];
    inst.refs.push_back(ev);
  }
  const int n_preds = static_cast<int>(rng.uniform_int(0, max_events));
  for (int i = 0; i < n_preds; ++i) {
    StrongEvent ev;
    ev.clip_id = "clip";
    if (!inst.refs.empty() && rng.uniform01() < 0.7) {
      const StrongEvent& base =
          inst.refs[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(inst.refs.size()) - 1))];
      ev.onset = std::max(0.0, base.onset + rng.uniform(-0.3, 0.3));
      ev.offset = std::max(ev.onset + 0.05, base.offset + rng.uniform(-0.3, 0.3));
      ev.label = rng.uniform01() < 0.9 ? base.label : classes[static_cast<size_t>(rng.uniform_int(0, 1))];
    } else {
      ev.onset = rng.uniform(0.0, 8.0);
      ev.offset = ev.onset + rng.uniform(0.2, 2.0);
      ev.label = classes[static_cast<size_t>(rng.uniform_int(0, 1))];
    }
    inst.preds.push_back(ev);
  }
  return inst;
}

}  // namespace metric_oracle
