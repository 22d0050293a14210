// Command-line front end: synth / features / nmf-label / train / tag /
// detect / eval / run. Every subcommand reads an optional config file and
// applies flag overrides on top.

#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "sedkit/pipeline.hpp"

namespace {

struct GlobalArgs {
  std::string config;
  std::string out;
  int64_t seed = -1;
  int threads = 0;
};

sedkit::PipelineConfig resolve_config(const GlobalArgs& g) {
  sedkit::PipelineConfig cfg;
  if (!g.config.empty()) cfg = sedkit::load_pipeline_config(g.config);
  if (!g.out.empty()) cfg.out_dir = g.out;
  if (g.seed >= 0) {
    cfg.seed = static_cast<uint64_t>(g.seed);
    cfg.train.seed = cfg.seed;
    cfg.label.nmf.seed = cfg.seed;
    cfg.synth.seed = cfg.seed;
  }
  if (g.threads > 0) cfg.threads = g.threads;
  return cfg;
}

void add_globals(CLI::App* cmd, GlobalArgs& g) {
  cmd->add_option("--config", g.config, "config file (key = value)");
  cmd->add_option("--out", g.out, "output directory");
  cmd->add_option("--seed", g.seed, "override the run seed");
  cmd->add_option("--threads", g.threads, "per-clip worker threads");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NMF-CNN sound event detection toolkit"};
  app.require_subcommand(1);

  GlobalArgs g;

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus with ground truth");
  add_globals(synth, g);
  int synth_clips = -1;
  double synth_seconds = -1.0;
  synth->add_option("--n-clips", synth_clips, "number of clips");
  synth->add_option("--clip-seconds", synth_seconds, "clip length in seconds");

  // features
  auto* features = app.add_subcommand("features", "extract mel/log-mel feature caches");
  add_globals(features, g);
  std::string feat_audio_dir, feat_set = "set";
  features->add_option("--audio-dir", feat_audio_dir, "directory of .wav clips")->required();
  features->add_option("--set-name", feat_set, "label for the feature set");

  // nmf-label
  auto* nmflabel = app.add_subcommand("nmf-label",
                                      "convert weak labels to approximate strong labels");
  add_globals(nmflabel, g);
  std::string nl_audio_dir, nl_weak;
  nmflabel->add_option("--audio-dir", nl_audio_dir, "directory of .wav clips")->required();
  nmflabel->add_option("--weak", nl_weak, "weak manifest TSV")->required();

  // train
  auto* traincmd = app.add_subcommand("train", "train a model on strong-labeled features");
  add_globals(traincmd, g);
  std::string tr_audio_dir, tr_strong;
  traincmd->add_option("--audio-dir", tr_audio_dir, "directory of .wav clips")->required();
  traincmd->add_option("--strong", tr_strong, "strong manifest TSV")->required();

  // tag
  auto* tagcmd = app.add_subcommand("tag", "weakly tag unlabeled clips with a trained model");
  add_globals(tagcmd, g);
  std::string tg_audio_dir, tg_ckpt;
  tagcmd->add_option("--audio-dir", tg_audio_dir, "directory of .wav clips")->required();
  tagcmd->add_option("--ckpt", tg_ckpt, "model checkpoint")->required();

  // detect
  auto* detectcmd = app.add_subcommand("detect", "run detection and emit an event manifest");
  add_globals(detectcmd, g);
  std::string dt_audio_dir, dt_ckpt;
  detectcmd->add_option("--audio-dir", dt_audio_dir, "directory of .wav clips")->required();
  detectcmd->add_option("--ckpt", dt_ckpt, "model checkpoint")->required();

  // eval
  auto* evalcmd = app.add_subcommand("eval", "score predictions against references");
  add_globals(evalcmd, g);
  std::string ev_refs, ev_preds, ev_durations;
  evalcmd->add_option("--refs", ev_refs, "reference strong manifest")->required();
  evalcmd->add_option("--preds", ev_preds, "predicted strong manifest")->required();
  evalcmd->add_option("--durations", ev_durations, "optional clip durations TSV");

  // run
  auto* runcmd = app.add_subcommand("run", "run a full data-combination experiment");
  add_globals(runcmd, g);
  std::string combo;
  bool bootstrap = false;
  runcmd->add_option("--combo", combo, "combination C1..C7");
  runcmd->add_flag("--bootstrap", bootstrap, "let C5/C7 train their tagging model");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    sedkit::PipelineConfig cfg = resolve_config(g);

    if (synth->parsed()) {
      if (cfg.out_dir.empty()) sedkit::fail(sedkit::Errc::bad_argument, "--out is required");
      if (synth_clips >= 0) cfg.synth.n_clips = synth_clips;
      if (synth_seconds > 0) cfg.synth.clip_seconds = synth_seconds;
      const sedkit::SynthCorpus corpus = sedkit::generate_synth_corpus(cfg.synth, cfg.out_dir);
      std::printf("wrote %zu clips under %s\n", corpus.clips.size(),
                  corpus.audio_dir.string().c_str());
      return 0;
    }

    if (evalcmd->parsed()) {
      const sedkit::Vocab vocab =
          cfg.classes.empty() ? sedkit::Vocab{} : sedkit::Vocab::from(cfg.classes);
      const auto refs = sedkit::load_strong_manifest(ev_refs, vocab);
      const auto preds = sedkit::load_strong_manifest(ev_preds, vocab);
      std::map<std::string, double> durations;
      if (!ev_durations.empty()) {
        for (const std::string& line : sedkit::detail::read_lines(ev_durations)) {
          const auto fields = sedkit::detail::split(line, '\t');
          if (fields.size() != 2)
            sedkit::fail(sedkit::Errc::parse_error, "bad durations row: " + line);
          durations[fields[0]] = sedkit::detail::parse_seconds(fields[1], ev_durations);
        }
      } else {
        durations = sedkit::derive_durations(refs, preds);
      }
      const sedkit::PRF ev = sedkit::event_based_f1(refs, preds, cfg.eval_onset_collar,
                                                    cfg.eval_offset_collar, cfg.eval_offset_ratio);
      const sedkit::PRF seg =
          sedkit::segment_based_f1(refs, preds, durations, cfg.eval_segment_seconds);
      std::printf("event_based_f1\t%.4f\t(P %.4f, R %.4f, tp %lld fp %lld fn %lld)\n", ev.f1,
                  ev.precision, ev.recall, static_cast<long long>(ev.tp),
                  static_cast<long long>(ev.fp), static_cast<long long>(ev.fn));
      std::printf("segment_based_f1\t%.4f\t(P %.4f, R %.4f, tp %lld fp %lld fn %lld)\n", seg.f1,
                  seg.precision, seg.recall, static_cast<long long>(seg.tp),
                  static_cast<long long>(seg.fp), static_cast<long long>(seg.fn));
      return 0;
    }

    if (cfg.out_dir.empty()) sedkit::fail(sedkit::Errc::bad_argument, "--out is required");

    if (features->parsed()) {
      cfg.classes = cfg.classes.empty() ? std::vector<std::string>{"_"} : cfg.classes;
      sedkit::PipelineRunner runner(cfg);
      const auto dir = runner.features_stage(feat_set, feat_audio_dir);
      std::printf("features: %s\n", dir.string().c_str());
      return 0;
    }
    if (nmflabel->parsed()) {
      sedkit::PipelineRunner runner(cfg);
      const auto fdir = runner.features_stage("weak", nl_audio_dir);
      const auto labels = runner.nmf_label_stage("weak", fdir, nl_weak);
      std::printf("approximate strong labels: %s\n", labels.string().c_str());
      return 0;
    }
    if (traincmd->parsed()) {
      sedkit::PipelineRunner runner(cfg);
      const auto fdir = runner.features_stage("train", tr_audio_dir);
      const auto ckpt = runner.train_stage("cli", {{fdir, tr_strong}});
      std::printf("checkpoint: %s\n", ckpt.string().c_str());
      return 0;
    }
    if (tagcmd->parsed()) {
      sedkit::PipelineRunner runner(cfg);
      const auto fdir = runner.features_stage("unlabeled", tg_audio_dir);
      const auto tagged = runner.tag_stage(tg_ckpt, fdir);
      std::printf("tagged weak manifest: %s\n", tagged.string().c_str());
      return 0;
    }
    if (detectcmd->parsed()) {
      sedkit::PipelineRunner runner(cfg);
      const auto fdir = runner.features_stage("detect", dt_audio_dir);
      const auto preds = runner.detect_stage(dt_ckpt, fdir);
      std::printf("predictions: %s\n", preds.string().c_str());
      return 0;
    }
    if (runcmd->parsed()) {
      if (!combo.empty()) cfg.combo = combo;
      if (bootstrap) cfg.bootstrap = true;
      sedkit::PipelineRunner runner(cfg);
      const sedkit::RunManifest manifest = runner.run_combination();
      for (const sedkit::ComboScores& s : manifest.scores)
        std::printf("%s\tevent_based_f1 %.4f\tsegment_based_f1 %.4f\n", s.combo.c_str(),
                    s.event_based.f1, s.segment_based.f1);
      std::printf("report: %s\n", manifest.report_path.string().c_str());
      return 0;
    }
  } catch (const sedkit::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
