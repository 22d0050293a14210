#pragma once

// Mini-batch training over approximate-strong-labeled log-mel features:
// per-epoch shuffling, one random fixed-length crop per clip per epoch,
// per-bin feature standardization frozen into the checkpoint, frame targets
// max-pooled x8 to the trunk's output rate, and Adam updates.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "sedkit/common.hpp"
#include "sedkit/manifest.hpp"
#include "sedkit/matio.hpp"
#include "sedkit/nn/model.hpp"
#include "sedkit/rng.hpp"

namespace sedkit {

struct TrainConfig {
  int epochs = 30;
  int batch_size = 16;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int crop_frames = 480;  // must be divisible by 8
  uint64_t seed = 0;
  int threads = 1;
  std::filesystem::path checkpoint_path;
};

struct TrainExample {
  std::string clip_id;
  MatrixF logmel;  // T x 64
  MatrixF labels;  // T x K in {0,1}
};

struct TrainReport {
  std::vector<double> epoch_loss;
  std::filesystem::path checkpoint;
  double wall_seconds = 0.0;
  uint64_t seed = 0;
};

// frame t is positive for class k iff [t*hop, (t+1)*hop) intersects an event
// of class k
inline MatrixF rasterize_labels(const std::vector<StrongEvent>& events, int frames, double hop,
                                const Vocab& vocab) {
  MatrixF m = MatrixF::Zero(frames, vocab.size());
  for (const StrongEvent& ev : events) {
    const int k = vocab.id(ev.label);
    int t0 = static_cast<int>(std::floor(ev.onset / hop));
    // frame t intersects iff t*hop < offset and (t+1)*hop > onset
    if ((t0 + 1) * hop <= ev.onset) ++t0;
    t0 = std::max(0, t0);
    for (int t = t0; t < frames && t * hop < ev.offset; ++t) m(t, k) = 1.0f;
  }
  return m;
}

struct FeatureStats {
  std::vector<float> mean, stddev;  // per mel bin
};

inline FeatureStats compute_feature_stats(const std::vector<TrainExample>& dataset,
                                          double std_floor = 1e-6) {
  FeatureStats s;
  s.mean.assign(nn::kMelBins, 0.0f);
  s.stddev.assign(nn::kMelBins, 1.0f);
  std::vector<double> sum(nn::kMelBins, 0.0), sq(nn::kMelBins, 0.0);
  size_t rows = 0;
  for (const TrainExample& ex : dataset) {
    for (Eigen::Index t = 0; t < ex.logmel.rows(); ++t)
      for (int b = 0; b < nn::kMelBins; ++b) {
        const double v = ex.logmel(t, b);
        sum[static_cast<size_t>(b)] += v;
        sq[static_cast<size_t>(b)] += v * v;
      }
    rows += static_cast<size_t>(ex.logmel.rows());
  }
  if (rows == 0) return s;
  for (int b = 0; b < nn::kMelBins; ++b) {
    const double mean = sum[static_cast<size_t>(b)] / static_cast<double>(rows);
    const double var =
        std::max(0.0, sq[static_cast<size_t>(b)] / static_cast<double>(rows) - mean * mean);
    s.mean[static_cast<size_t>(b)] = static_cast<float>(mean);
    s.stddev[static_cast<size_t>(b)] = static_cast<float>(std::max(std_floor, std::sqrt(var)));
  }
  return s;
}

namespace detail {

template <typename T>
std::vector<nn::Tensor<T>*> learnable_params(nn::ModelParams<T>& m) {
  std::vector<nn::Tensor<T>*> out;
  for (size_t l = 0; l < m.conv_w.size(); ++l) {
    out.push_back(&m.conv_w[l]);
    out.push_back(&m.conv_b[l]);
    out.push_back(&m.bn_gain[l]);
    out.push_back(&m.bn_bias[l]);
  }
  out.push_back(&m.dense_w);
  out.push_back(&m.dense_b);
  return out;
}

template <typename T>
std::vector<const nn::Tensor<T>*> grad_tensors(const nn::ModelGrads<T>& g) {
  std::vector<const nn::Tensor<T>*> out;
  for (size_t l = 0; l < g.conv_w.size(); ++l) {
    out.push_back(&g.conv_w[l]);
    out.push_back(&g.conv_b[l]);
    out.push_back(&g.bn_gain[l]);
    out.push_back(&g.bn_bias[l]);
  }
  out.push_back(&g.dense_w);
  out.push_back(&g.dense_b);
  return out;
}

}  // namespace detail

template <typename T>
struct AdamState {
  std::vector<nn::Tensor<T>> m, v;
  int64_t step = 0;

  explicit AdamState(nn::ModelParams<T>& model) {
    for (nn::Tensor<T>* p : detail::learnable_params(model)) {
      m.emplace_back(p->shape);
      v.emplace_back(p->shape);
    }
  }

  void update(nn::ModelParams<T>& model, const nn::ModelGrads<T>& grads, const TrainConfig& cfg) {
    ++step;
    const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
    const T bc1 = static_cast<T>(1.0 - std::pow(cfg.beta1, static_cast<double>(step)));
    const T bc2 = static_cast<T>(1.0 - std::pow(cfg.beta2, static_cast<double>(step)));
    const T lr = static_cast<T>(cfg.lr), eps = static_cast<T>(cfg.adam_eps);
    std::vector<nn::Tensor<T>*> params = detail::learnable_params(model);
    std::vector<const nn::Tensor<T>*> gs = detail::grad_tensors(grads);
    for (size_t i = 0; i < params.size(); ++i) {
      nn::Tensor<T>& p = *params[i];
      const nn::Tensor<T>& g = *gs[i];
      for (size_t j = 0; j < p.numel(); ++j) {
        m[i][j] = b1 * m[i][j] + (T(1) - b1) * g[j];
        v[i][j] = b2 * v[i][j] + (T(1) - b2) * g[j] * g[j];
        const T mhat = m[i][j] / bc1;
        const T vhat = v[i][j] / bc2;
        p[j] -= lr * mhat / (std::sqrt(vhat) + eps);
      }
    }
  }
};

// Max-pool frame targets x8 to the trunk output rate: an output frame is
// positive if any covered input frame is positive.
inline void pool_labels_x8(const MatrixF& labels, int crop_start, int crop_frames,
                           nn::Tensor<float>& target, int batch_index) {
  const int k_classes = static_cast<int>(labels.cols());
  const int t_out = crop_frames / nn::kTimePoolFactor;
  for (int to = 0; to < t_out; ++to)
    for (int k = 0; k < k_classes; ++k) {
      float v = 0.0f;
      for (int d = 0; d < nn::kTimePoolFactor; ++d) {
        const int t = crop_start + to * nn::kTimePoolFactor + d;
        if (t < labels.rows() && labels(t, k) > 0.0f) {
          v = 1.0f;
          break;
        }
      }
      target.at3(batch_index, to, k) = v;
    }
}

inline TrainReport train(nn::ModelParams<float>& model, const std::vector<TrainExample>& dataset,
                         const TrainConfig& cfg) {
  if (dataset.empty()) fail(Errc::bad_argument, "empty training dataset");
  if (cfg.epochs < 1) fail(Errc::bad_argument, "epochs must be >= 1");
  if (cfg.batch_size < 1) fail(Errc::bad_argument, "batch_size must be >= 1");
  if (cfg.crop_frames < nn::kTimePoolFactor || cfg.crop_frames % nn::kTimePoolFactor != 0)
    fail(Errc::bad_argument, "crop_frames must be a positive multiple of 8");
  for (const TrainExample& ex : dataset) {
    if (ex.logmel.cols() != nn::kMelBins)
      fail(Errc::shape_mismatch, "clip " + ex.clip_id + " has " +
                                     std::to_string(ex.logmel.cols()) + " mel bins");
    if (ex.labels.rows() != ex.logmel.rows() || ex.labels.cols() != model.num_classes)
      fail(Errc::shape_mismatch, "clip " + ex.clip_id + " label matrix is " +
                                     std::to_string(ex.labels.rows()) + "x" +
                                     std::to_string(ex.labels.cols()));
  }

  const auto t_start = std::chrono::steady_clock::now();
  const FeatureStats stats = compute_feature_stats(dataset);
  model.feat_mean.assign(stats.mean.begin(), stats.mean.end());
  model.feat_std.assign(stats.stddev.begin(), stats.stddev.end());

  AdamState<float> adam(model);
  const int n_clips = static_cast<int>(dataset.size());
  const int crop = cfg.crop_frames;
  const int t_out = crop / nn::kTimePoolFactor;

  TrainReport report;
  report.seed = cfg.seed;
  report.checkpoint = cfg.checkpoint_path;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng ep_rng = Rng(cfg.seed).fork("epoch:" + std::to_string(epoch));
    std::vector<int> order(static_cast<size_t>(n_clips));
    for (int i = 0; i < n_clips; ++i) order[static_cast<size_t>(i)] = i;
    for (int i = n_clips - 1; i > 0; --i)
      std::swap(order[static_cast<size_t>(i)],
                order[static_cast<size_t>(ep_rng.uniform_int(0, i))]);

    double loss_sum = 0.0;
    for (int begin = 0; begin < n_clips; begin += cfg.batch_size) {
      const int b_size = std::min(cfg.batch_size, n_clips - begin);
      nn::Tensor<float> input({b_size, 1, crop, nn::kMelBins});
      nn::Tensor<float> target({b_size, t_out, model.num_classes});
      for (int b = 0; b < b_size; ++b) {
        const TrainExample& ex = dataset[static_cast<size_t>(order[static_cast<size_t>(begin + b)])];
        const int t_clip = static_cast<int>(ex.logmel.rows());
        const int start =
            t_clip > crop ? static_cast<int>(ep_rng.uniform_int(0, t_clip - crop)) : 0;
        for (int t = 0; t < crop; ++t) {
          if (start + t < t_clip) {
            for (int f = 0; f < nn::kMelBins; ++f)
              input.at(b, 0, t, f) = (ex.logmel(start + t, f) -
                                      model.feat_mean[static_cast<size_t>(f)]) /
                                     model.feat_std[static_cast<size_t>(f)];
          }  // zero padding past the clip end
        }
        pool_labels_x8(ex.labels, start, crop, target, b);
      }

      nn::ForwardState<float> state;
      nn::forward(model, input, nn::BnMode::train, &state, cfg.threads);
      nn::Tensor<float> p = nn::sigmoid(state.logits);
      nn::Tensor<float> grad_logits;
      const float loss = nn::bce_loss(p, target, &grad_logits);
      if (!std::isfinite(loss))
        fail(Errc::non_finite, "non-finite loss at epoch " + std::to_string(epoch) +
                                   ", batch starting at clip " + std::to_string(begin));
      nn::ModelGrads<float> grads = nn::backward(model, state, grad_logits, cfg.threads);
      adam.update(model, grads, cfg);
      loss_sum += static_cast<double>(loss) * b_size;
    }
    report.epoch_loss.push_back(loss_sum / n_clips);
    if (!cfg.checkpoint_path.empty()) save_checkpoint(model, cfg.checkpoint_path);
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return report;
}

inline void write_train_report(const TrainReport& report, const std::filesystem::path& log_path,
                               const std::filesystem::path& tsv_path) {
  std::string log;
  log += "seed=" + std::to_string(report.seed) + "\n";
  log += "epochs=" + std::to_string(report.epoch_loss.size()) + "\n";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", report.wall_seconds);
  log += std::string("wall_seconds=") + buf + "\n";
  if (!report.epoch_loss.empty()) {
    std::snprintf(buf, sizeof(buf), "%.6f", report.epoch_loss.back());
    log += std::string("final_loss=") + buf + "\n";
  }
  log += "checkpoint=" + report.checkpoint.string() + "\n";
  write_file_atomic(log_path, log);

  std::string tsv = "epoch\tloss\n";
  for (size_t e = 0; e < report.epoch_loss.size(); ++e) {
    std::snprintf(buf, sizeof(buf), "%zu\t%.6f\n", e + 1, report.epoch_loss[e]);
    tsv += buf;
  }
  write_file_atomic(tsv_path, tsv);
}

}  // namespace sedkit
