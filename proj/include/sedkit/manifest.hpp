#pragma once

// Label domain: class vocabulary, weak (clip-level) and strong (timed) labels,
// and their TSV manifest formats.
//
//   weak:   filename<TAB>label1,label2,...
//   strong: filename<TAB>onset<TAB>offset<TAB>label[<TAB>source]
//
// UTF-8, '\n' line endings, '.' decimal separator. A header row whose first
// field is literally "filename" is skipped. The optional strong-manifest
// source column records label provenance (nmf, model, ground_truth).

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "sedkit/common.hpp"

namespace sedkit {

struct Vocab {
  std::vector<std::string> names;
  std::unordered_map<std::string, int> ids;

  static Vocab from(std::vector<std::string> class_names) {
    Vocab v;
    v.names = std::move(class_names);
    for (size_t i = 0; i < v.names.size(); ++i) {
      if (!v.ids.emplace(v.names[i], static_cast<int>(i)).second)
        fail(Errc::bad_argument, "duplicate class name: " + v.names[i]);
    }
    return v;
  }

  bool empty() const { return names.empty(); }
  int size() const { return static_cast<int>(names.size()); }
  bool contains(const std::string& name) const { return ids.count(name) != 0; }
  int id(const std::string& name) const {
    auto it = ids.find(name);
    if (it == ids.end()) fail(Errc::unknown_class, name);
    return it->second;
  }
};

struct WeakClipLabel {
  std::string clip_id;
  std::vector<std::string> tags;  // unique, in first-seen order
};

struct StrongEvent {
  std::string clip_id;
  double onset = 0.0;   // seconds
  double offset = 0.0;  // seconds, > onset
  std::string label;
  std::string source;  // "", "nmf", "model" or "ground_truth"
};

namespace detail {

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  size_t start = 0;
  for (;;) {
    size_t pos = s.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::string data = read_file(path);
  std::vector<std::string> lines;
  size_t start = 0;
  while (start < data.size()) {
    size_t pos = data.find('\n', start);
    std::string line =
        pos == std::string::npos ? data.substr(start) : data.substr(start, pos - start);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return lines;
}

inline double parse_seconds(const std::string& s, const std::string& context) {
  const char* begin = s.c_str();
  char* end = nullptr;
  double v = std::strtod(begin, &end);
  if (end == begin || end != begin + s.size())
    fail(Errc::parse_error, "non-numeric time '" + s + "' in " + context);
  if (!std::isfinite(v)) fail(Errc::parse_error, "non-finite time in " + context);
  return v;
}

}  // namespace detail

// ---- weak manifests ---------------------------------------------------------

inline std::vector<WeakClipLabel> load_weak_manifest(const std::filesystem::path& path,
                                                     const Vocab& vocab) {
  std::vector<WeakClipLabel> out;
  std::unordered_set<std::string> seen;
  bool first = true;
  for (const std::string& line : detail::read_lines(path)) {
    std::vector<std::string> fields = detail::split(line, '\t');
    if (first && !fields.empty() && fields[0] == "filename") {
      first = false;
      continue;
    }
    first = false;
    if (fields.size() != 2)
      fail(Errc::parse_error, "expected 2 tab-separated fields, got " +
                                  std::to_string(fields.size()) + ": " + line);
    WeakClipLabel label;
    label.clip_id = fields[0];
    if (!seen.insert(label.clip_id).second)
      fail(Errc::duplicate_clip, "duplicate filename " + label.clip_id + " in " + path.string());
    for (const std::string& tag : detail::split(fields[1], ',')) {
      if (tag.empty()) continue;
      if (!vocab.empty() && !vocab.contains(tag))
        fail(Errc::unknown_class, "unknown class '" + tag + "' for clip " + label.clip_id);
      if (std::find(label.tags.begin(), label.tags.end(), tag) == label.tags.end())
        label.tags.push_back(tag);
    }
    if (label.tags.empty())
      fail(Errc::empty_tags, "clip " + label.clip_id + " has no tags");
    out.push_back(std::move(label));
  }
  return out;
}

inline void write_weak_manifest(const std::filesystem::path& path,
                                const std::vector<WeakClipLabel>& labels) {
  std::string data;
  for (const WeakClipLabel& l : labels) {
    data += l.clip_id;
    data += '\t';
    for (size_t i = 0; i < l.tags.size(); ++i) {
      if (i) data += ',';
      data += l.tags[i];
    }
    data += '\n';
  }
  write_file_atomic(path, data);
}

// ---- strong manifests -------------------------------------------------------

inline std::vector<StrongEvent> load_strong_manifest(const std::filesystem::path& path,
                                                     const Vocab& vocab) {
  std::vector<StrongEvent> out;
  bool first = true;
  for (const std::string& line : detail::read_lines(path)) {
    std::vector<std::string> fields = detail::split(line, '\t');
    if (first && !fields.empty() && fields[0] == "filename") {
      first = false;
      continue;
    }
    first = false;
    if (fields.size() != 4 && fields.size() != 5)
      fail(Errc::parse_error, "expected 4 or 5 tab-separated fields: " + line);
    StrongEvent ev;
    ev.clip_id = fields[0];
    ev.onset = detail::parse_seconds(fields[1], path.string());
    ev.offset = detail::parse_seconds(fields[2], path.string());
    ev.label = fields[3];
    if (fields.size() == 5) {
      ev.source = fields[4];
      if (ev.source != "nmf" && ev.source != "model" && ev.source != "ground_truth")
        fail(Errc::parse_error, "unknown source '" + ev.source + "' in " + path.string());
    }
    if (ev.onset < 0.0)
      fail(Errc::parse_error, "negative onset for clip " + ev.clip_id);
    if (ev.onset >= ev.offset)
      fail(Errc::parse_error, "onset >= offset (zero-length event) for clip " + ev.clip_id);
    if (!vocab.empty() && !vocab.contains(ev.label))
      fail(Errc::unknown_class, "unknown class '" + ev.label + "' for clip " + ev.clip_id);
    out.push_back(std::move(ev));
  }
  return out;
}

inline std::string format_seconds(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

inline void write_strong_manifest(const std::filesystem::path& path,
                                  const std::vector<StrongEvent>& events,
                                  bool with_source = false) {
  std::string data;
  for (const StrongEvent& ev : events) {
    data += ev.clip_id;
    data += '\t';
    data += format_seconds(ev.onset);
    data += '\t';
    data += format_seconds(ev.offset);
    data += '\t';
    data += ev.label;
    if (with_source) {
      data += '\t';
      data += ev.source.empty() ? "ground_truth" : ev.source;
    }
    data += '\n';
  }
  write_file_atomic(path, data);
}

}  // namespace sedkit
