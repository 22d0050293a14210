#pragma once

// The two CNN trunks (4 single-conv 5x5 blocks vs 4 double-conv 3x3 blocks,
// 2x2 max pooling after blocks 1-3) with a shared head: frequency mean ->
// time-distributed dense -> sigmoid frame posteriors. Clip probability is the
// per-class max over frames.
//
// Checkpoint container: magic "NMFC", u8 version=1, u8 arch tag, u32 classes,
// u32 tensor count; per tensor u16 name length + name, u8 ndim, u32 dims,
// float32 LE values. BN running statistics and the trainer's feature
// standardization vectors ride along as ordinary tensors.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sedkit/common.hpp"
#include "sedkit/matio.hpp"
#include "sedkit/nn/layers.hpp"
#include "sedkit/nn/tensor.hpp"
#include "sedkit/rng.hpp"

namespace sedkit::nn {

enum class Arch : uint8_t { proposed5 = 0, kong9 = 1 };

inline std::string arch_name(Arch a) { return a == Arch::proposed5 ? "proposed5" : "kong9"; }

inline Arch arch_from_string(const std::string& s) {
  if (s == "proposed5") return Arch::proposed5;
  if (s == "kong9") return Arch::kong9;
  fail(Errc::bad_argument, "unknown architecture: " + s);
}

struct LayerSpec {
  std::string name;  // conv tensor prefix; BN uses "bn" + suffix
  int in_ch = 0;
  int out_ch = 0;
  int ksize = 0;
  bool pool_after = false;
};

inline std::vector<LayerSpec> arch_layers(Arch arch) {
  if (arch == Arch::proposed5) {
    return {{"conv1", 1, 64, 5, true},
            {"conv2", 64, 128, 5, true},
            {"conv3", 128, 256, 5, true},
            {"conv4", 256, 512, 5, false}};
  }
  return {{"conv1a", 1, 64, 3, false},    {"conv1b", 64, 64, 3, true},
          {"conv2a", 64, 128, 3, false},  {"conv2b", 128, 128, 3, true},
          {"conv3a", 128, 256, 3, false}, {"conv3b", 256, 256, 3, true},
          {"conv4a", 256, 512, 3, false}, {"conv4b", 512, 512, 3, false}};
}

inline constexpr int kMelBins = 64;
inline constexpr int kTrunkChannels = 512;
inline constexpr int kTimePoolFactor = 8;  // three 2x2 poolings

template <typename T>
struct ModelParams {
  Arch arch = Arch::proposed5;
  int num_classes = 0;
  std::vector<Tensor<T>> conv_w, conv_b;
  std::vector<Tensor<T>> bn_gain, bn_bias, bn_rmean, bn_rvar;
  Tensor<T> dense_w, dense_b;       // (K, 512), (K)
  std::vector<T> feat_mean, feat_std;  // per mel bin, applied before the trunk
};

template <typename T>
ModelParams<T> build_model(Arch arch, int num_classes, uint64_t seed) {
  if (num_classes < 1) fail(Errc::bad_argument, "need at least one class");
  ModelParams<T> m;
  m.arch = arch;
  m.num_classes = num_classes;
  Rng rng(seed);
  for (const LayerSpec& spec : arch_layers(arch)) {
    Tensor<T> w({spec.out_ch, spec.in_ch, spec.ksize, spec.ksize});
    const double bound =
        std::sqrt(6.0 / (static_cast<double>(spec.in_ch) * spec.ksize * spec.ksize));
    for (size_t i = 0; i < w.numel(); ++i) w[i] = static_cast<T>(rng.uniform(-bound, bound));
    m.conv_w.push_back(std::move(w));
    m.conv_b.emplace_back(std::vector<int>{spec.out_ch});
    m.bn_gain.emplace_back(std::vector<int>{spec.out_ch}, T(1));
    m.bn_bias.emplace_back(std::vector<int>{spec.out_ch});
    m.bn_rmean.emplace_back(std::vector<int>{spec.out_ch});
    m.bn_rvar.emplace_back(std::vector<int>{spec.out_ch}, T(1));
  }
  m.dense_w = Tensor<T>({num_classes, kTrunkChannels});
  const double bound = std::sqrt(6.0 / kTrunkChannels);
  for (size_t i = 0; i < m.dense_w.numel(); ++i)
    m.dense_w[i] = static_cast<T>(rng.uniform(-bound, bound));
  m.dense_b = Tensor<T>({num_classes});
  m.feat_mean.assign(kMelBins, T(0));
  m.feat_std.assign(kMelBins, T(1));
  return m;
}

// ---- forward / backward -------------------------------------------------------

template <typename T>
struct ForwardState {
  std::vector<Tensor<T>> conv_in;
  std::vector<Tensor<T>> conv_out;  // pre-BN
  std::vector<BnCache<T>> bn_cache;
  std::vector<Tensor<T>> relu_out;
  std::vector<Tensor<uint8_t>> pool_idx;
  std::vector<int> trunk_shape;  // shape of the tensor fed to freq_mean
  Tensor<T> head_in;             // (N, T', 512)
  Tensor<T> logits;              // (N, T', K)
};

// input (N, 1, T, 64); returns logits (N, floor(T/8), K). In train mode the
// full state is kept for backward and BN running stats are updated.
template <typename T>
Tensor<T> forward(ModelParams<T>& model, const Tensor<T>& input, BnMode mode,
                  ForwardState<T>* state = nullptr, int threads = 1) {
  if (input.ndim() != 4 || input.dim(1) != 1 || input.dim(3) != kMelBins)
    fail(Errc::shape_mismatch,
         "model input must be (N, 1, T, " + std::to_string(kMelBins) + "), got " +
             input.shape_str());
  if (input.dim(2) < kTimePoolFactor)
    fail(Errc::shape_mismatch, "need at least " + std::to_string(kTimePoolFactor) +
                                   " input frames, got " + std::to_string(input.dim(2)));
  const std::vector<LayerSpec> specs = arch_layers(model.arch);
  Tensor<T> x = input;
  for (size_t l = 0; l < specs.size(); ++l) {
    if (state) state->conv_in.push_back(x);
    Tensor<T> conv = conv2d_forward(x, model.conv_w[l], model.conv_b[l], threads);
    BnCache<T> cache;
    Tensor<T> bn = batchnorm_forward(conv, model.bn_gain[l], model.bn_bias[l], model.bn_rmean[l],
                                     model.bn_rvar[l], mode, &cache, T(0.9), T(1e-5), threads);
    if (state) {
      state->conv_out.push_back(std::move(conv));
      state->bn_cache.push_back(std::move(cache));
    }
    Tensor<T> act = relu_forward(bn);
    if (specs[l].pool_after) {
      PoolResult<T> pooled = maxpool2x2_forward(act);
      if (state) {
        state->relu_out.push_back(std::move(act));
        state->pool_idx.push_back(std::move(pooled.argmax));
      }
      x = std::move(pooled.out);
    } else {
      x = act;
      if (state) {
        state->relu_out.push_back(std::move(act));
        state->pool_idx.emplace_back();
      }
    }
  }
  Tensor<T> head = freq_mean_forward(x);
  Tensor<T> logits = dense_forward(head, model.dense_w, model.dense_b);
  if (state) {
    state->trunk_shape = x.shape;
    state->head_in = std::move(head);
    state->logits = logits;
  }
  return logits;
}

template <typename T>
struct ModelGrads {
  std::vector<Tensor<T>> conv_w, conv_b, bn_gain, bn_bias;
  Tensor<T> dense_w, dense_b;
};

template <typename T>
ModelGrads<T> backward(const ModelParams<T>& model, const ForwardState<T>& state,
                       const Tensor<T>& grad_logits, int threads = 1) {
  const std::vector<LayerSpec> specs = arch_layers(model.arch);
  ModelGrads<T> g;
  g.conv_w.resize(specs.size());
  g.conv_b.resize(specs.size());
  g.bn_gain.resize(specs.size());
  g.bn_bias.resize(specs.size());

  DenseGrads<T> dg = dense_backward(state.head_in, model.dense_w, grad_logits);
  g.dense_w = std::move(dg.weight);
  g.dense_b = std::move(dg.bias);
  Tensor<T> d = freq_mean_backward(dg.input, state.trunk_shape);
  for (int l = static_cast<int>(specs.size()) - 1; l >= 0; --l) {
    const size_t ul = static_cast<size_t>(l);
    if (specs[ul].pool_after)
      d = maxpool2x2_backward(d, state.pool_idx[ul], state.relu_out[ul].shape);
    d = relu_backward(state.relu_out[ul], d);
    BnGrads<T> bg = batchnorm_backward(state.conv_out[ul], model.bn_gain[ul], state.bn_cache[ul],
                                       d, threads);
    g.bn_gain[ul] = std::move(bg.gain);
    g.bn_bias[ul] = std::move(bg.bias);
    d = std::move(bg.input);
    Conv2dGrads<T> cg = conv2d_backward(state.conv_in[ul], model.conv_w[ul], d, l > 0, threads);
    g.conv_w[ul] = std::move(cg.kernel);
    g.conv_b[ul] = std::move(cg.bias);
    if (l > 0) d = std::move(cg.input);
  }
  return g;
}

// ---- inference ----------------------------------------------------------------

struct FramePosteriors {
  MatrixF values;  // T' x K, sigmoid outputs
  double frame_hop_seconds = 0.0;
};

// Standardizes the raw log-mel input with the model's stored per-bin
// statistics and runs an eval-mode forward pass.
inline FramePosteriors infer_posteriors(ModelParams<float>& model, const MatrixF& logmel,
                                        double frame_hop_seconds, int threads = 1) {
  if (logmel.cols() != kMelBins)
    fail(Errc::shape_mismatch, "log-mel input must have " + std::to_string(kMelBins) +
                                   " bins, got " + std::to_string(logmel.cols()));
  const int t_frames = static_cast<int>(logmel.rows());
  Tensor<float> input({1, 1, t_frames, kMelBins});
  for (int t = 0; t < t_frames; ++t)
    for (int b = 0; b < kMelBins; ++b)
      input.at(0, 0, t, b) =
          (logmel(t, b) - model.feat_mean[static_cast<size_t>(b)]) /
          model.feat_std[static_cast<size_t>(b)];
  Tensor<float> logits =
      forward<float>(model, input, BnMode::eval, nullptr, threads);
  Tensor<float> p = sigmoid(logits);
  FramePosteriors out;
  out.values.resize(logits.dim(1), logits.dim(2));
  for (int t = 0; t < logits.dim(1); ++t)
    for (int k = 0; k < logits.dim(2); ++k) out.values(t, k) = p.at3(0, t, k);
  out.frame_hop_seconds = frame_hop_seconds * kTimePoolFactor;
  return out;
}

inline std::vector<float> clip_probabilities(const FramePosteriors& p) {
  std::vector<float> probs(static_cast<size_t>(p.values.cols()), 0.0f);
  for (int k = 0; k < p.values.cols(); ++k)
    if (p.values.rows() > 0) probs[static_cast<size_t>(k)] = p.values.col(k).maxCoeff();
  return probs;
}

// ---- checkpoint container -------------------------------------------------------

inline constexpr char kCheckpointMagic[4] = {'N', 'M', 'F', 'C'};
inline constexpr uint8_t kCheckpointVersion = 1;

namespace detail {

template <typename T>
void for_each_tensor(ModelParams<T>& m,
                     const std::function<void(const std::string&, std::vector<int>&, T*)>& fn) {
  const std::vector<LayerSpec> specs = arch_layers(m.arch);
  for (size_t l = 0; l < specs.size(); ++l) {
    const std::string conv = specs[l].name;
    const std::string bn = "bn" + conv.substr(4);  // conv1 -> bn1, conv1a -> bn1a
    fn(conv + ".weight", m.conv_w[l].shape, m.conv_w[l].data());
    fn(conv + ".bias", m.conv_b[l].shape, m.conv_b[l].data());
    fn(bn + ".gain", m.bn_gain[l].shape, m.bn_gain[l].data());
    fn(bn + ".bias", m.bn_bias[l].shape, m.bn_bias[l].data());
    fn(bn + ".running_mean", m.bn_rmean[l].shape, m.bn_rmean[l].data());
    fn(bn + ".running_var", m.bn_rvar[l].shape, m.bn_rvar[l].data());
  }
  fn("dense.weight", m.dense_w.shape, m.dense_w.data());
  fn("dense.bias", m.dense_b.shape, m.dense_b.data());
  std::vector<int> feat_shape{kMelBins};
  fn("feat.mean", feat_shape, m.feat_mean.data());
  fn("feat.std", feat_shape, m.feat_std.data());
}

}  // namespace detail

template <typename T>
std::string encode_checkpoint(const ModelParams<T>& model) {
  std::string out;
  out.append(kCheckpointMagic, 4);
  put_u8(out, kCheckpointVersion);
  put_u8(out, static_cast<uint8_t>(model.arch));
  put_u32(out, static_cast<uint32_t>(model.num_classes));
  uint32_t count = 0;
  auto& m = const_cast<ModelParams<T>&>(model);
  detail::for_each_tensor<T>(m, [&](const std::string&, std::vector<int>&, T*) { ++count; });
  put_u32(out, count);
  detail::for_each_tensor<T>(m, [&](const std::string& name, std::vector<int>& shape, T* data) {
    put_u16(out, static_cast<uint16_t>(name.size()));
    out += name;
    put_u8(out, static_cast<uint8_t>(shape.size()));
    size_t numel = 1;
    for (int d : shape) {
      put_u32(out, static_cast<uint32_t>(d));
      numel *= static_cast<size_t>(d);
    }
    for (size_t i = 0; i < numel; ++i) put_f32(out, static_cast<float>(data[i]));
  });
  return out;
}

template <typename T>
void save_checkpoint(const ModelParams<T>& model, const std::filesystem::path& path) {
  write_file_atomic(path, encode_checkpoint(model));
}

inline ModelParams<float> decode_checkpoint(const std::string& bytes, const std::string& context,
                                            std::optional<Arch> expected_arch = std::nullopt) {
  ByteReader r(bytes);
  if (bytes.size() < 14) fail(Errc::format_error, "checkpoint too small: " + context);
  if (r.bytes(4) != std::string(kCheckpointMagic, 4))
    fail(Errc::format_error, "bad checkpoint magic in " + context);
  const uint8_t version = r.u8();
  if (version != kCheckpointVersion)
    fail(Errc::format_error, "unsupported checkpoint version " + std::to_string(version));
  const uint8_t arch_tag = r.u8();
  if (arch_tag > 1) fail(Errc::format_error, "unknown architecture tag " + std::to_string(arch_tag));
  const Arch arch = static_cast<Arch>(arch_tag);
  if (expected_arch && arch != *expected_arch)
    fail(Errc::shape_mismatch, "architecture mismatch: checkpoint is " + arch_name(arch) +
                                   ", expected " + arch_name(*expected_arch));
  const uint32_t num_classes = r.u32();
  if (num_classes == 0) fail(Errc::format_error, "checkpoint with zero classes");
  const uint32_t count = r.u32();

  struct Entry {
    std::vector<int> shape;
    std::vector<float> data;
  };
  std::map<std::string, Entry> entries;
  for (uint32_t i = 0; i < count; ++i) {
    const uint16_t name_len = r.u16();
    const std::string name = r.bytes(name_len);
    const uint8_t ndim = r.u8();
    Entry e;
    size_t numel = 1;
    for (uint8_t d = 0; d < ndim; ++d) {
      e.shape.push_back(static_cast<int>(r.u32()));
      numel *= static_cast<size_t>(e.shape.back());
    }
    e.data.resize(numel);
    if constexpr (std::endian::native == std::endian::little) {
      std::memcpy(e.data.data(), r.raw(numel * 4), numel * 4);
    } else {
      for (size_t j = 0; j < numel; ++j) e.data[j] = r.f32();
    }
    entries.emplace(name, std::move(e));
  }
  if (r.remaining() != 0)
    fail(Errc::format_error, "trailing bytes after checkpoint payload in " + context);

  ModelParams<float> model = build_model<float>(arch, static_cast<int>(num_classes), 0);
  detail::for_each_tensor<float>(
      model, [&](const std::string& name, std::vector<int>& shape, float* data) {
        auto it = entries.find(name);
        if (it == entries.end())
          fail(Errc::format_error, "checkpoint missing tensor '" + name + "' in " + context);
        if (it->second.shape != shape)
          fail(Errc::shape_mismatch, "checkpoint tensor '" + name + "' has wrong shape in " +
                                         context);
        std::copy(it->second.data.begin(), it->second.data.end(), data);
      });
  return model;
}

inline ModelParams<float> load_checkpoint(const std::filesystem::path& path,
                                          std::optional<Arch> expected_arch = std::nullopt) {
  return decode_checkpoint(read_file(path), path.string(), expected_arch);
}

}  // namespace sedkit::nn
