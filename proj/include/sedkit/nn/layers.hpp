#pragma once

// Layer kernels with analytic gradients: same-size conv2d (im2col + GEMM),
// batch norm, ReLU, 2x2 max pooling, a time-distributed dense layer, and the
// sigmoid/BCE head. Templated on the scalar so gradient checks can run in
// double while training runs in float.
//
// Threaded paths partition disjoint output ranges with a fixed reduction
// order, so results are bitwise-reproducible for a fixed thread count.

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sedkit/common.hpp"
#include "sedkit/nn/tensor.hpp"
#include "sedkit/parallel.hpp"

namespace sedkit::nn {

template <typename T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using EMap = Eigen::Map<EMat<T>>;
template <typename T>
using ECMap = Eigen::Map<const EMat<T>>;

namespace detail {

inline std::pair<int, int> chunk(int n, int parts, int idx) {
  const int64_t b = static_cast<int64_t>(n) * idx / parts;
  const int64_t e = static_cast<int64_t>(n) * (idx + 1) / parts;
  return {static_cast<int>(b), static_cast<int>(e)};
}

// Scatter input patches into a (C*KH*KW) x (H*W) matrix for one batch item.
template <typename T>
void im2col(const Tensor<T>& input, int n, int kh_size, int kw_size, int pad_h, int pad_w,
            std::vector<T>& col) {
  const int C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const size_t hw = static_cast<size_t>(H) * W;
  col.assign(static_cast<size_t>(C) * kh_size * kw_size * hw, T(0));
  for (int c = 0; c < C; ++c) {
    for (int kh = 0; kh < kh_size; ++kh) {
      for (int kw = 0; kw < kw_size; ++kw) {
        const size_t row = (static_cast<size_t>(c) * kh_size + kh) * kw_size + kw;
        T* dst_row = col.data() + row * hw;
        const int ow_begin = std::max(0, pad_w - kw);
        const int ow_end = std::min(W, W + pad_w - kw);
        if (ow_begin >= ow_end) continue;
        for (int oh = 0; oh < H; ++oh) {
          const int ih = oh + kh - pad_h;
          if (ih < 0 || ih >= H) continue;
          const T* src = &input.at(n, c, ih, ow_begin + kw - pad_w);
          std::copy(src, src + (ow_end - ow_begin), dst_row + static_cast<size_t>(oh) * W + ow_begin);
        }
      }
    }
  }
}

// Accumulate a (C*KH*KW) x (H*W) gradient matrix back into input layout.
template <typename T>
void col2im_add(const std::vector<T>& col, int n, int kh_size, int kw_size, int pad_h, int pad_w,
                Tensor<T>& grad_input, int c) {
  const int H = grad_input.dim(2), W = grad_input.dim(3);
  const size_t hw = static_cast<size_t>(H) * W;
  for (int kh = 0; kh < kh_size; ++kh) {
    for (int kw = 0; kw < kw_size; ++kw) {
      const size_t row = (static_cast<size_t>(c) * kh_size + kh) * kw_size + kw;
      const T* src_row = col.data() + row * hw;
      const int ow_begin = std::max(0, pad_w - kw);
      const int ow_end = std::min(W, W + pad_w - kw);
      if (ow_begin >= ow_end) continue;
      for (int oh = 0; oh < H; ++oh) {
        const int ih = oh + kh - pad_h;
        if (ih < 0 || ih >= H) continue;
        T* dst = &grad_input.at(n, c, ih, ow_begin + kw - pad_w);
        const T* src = src_row + static_cast<size_t>(oh) * W + ow_begin;
        for (int i = 0; i < ow_end - ow_begin; ++i) dst[i] += src[i];
      }
    }
  }
}

template <typename T>
void check_conv_shapes(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>* bias) {
  if (input.ndim() != 4 || kernel.ndim() != 4)
    fail(Errc::shape_mismatch, "conv2d expects 4-D input and kernel");
  if (input.dim(1) != kernel.dim(1))
    fail(Errc::shape_mismatch, "conv2d channel mismatch: input " + input.shape_str() +
                                   ", kernel " + kernel.shape_str());
  if (kernel.dim(2) % 2 == 0 || kernel.dim(3) % 2 == 0)
    fail(Errc::shape_mismatch, "conv2d kernel dims must be odd");
  if (bias && static_cast<int>(bias->numel()) != kernel.dim(0))
    fail(Errc::shape_mismatch, "conv2d bias size != out channels");
}

}  // namespace detail

// ---- conv2d (stride 1, zero padding, output spatial size == input) ----------

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                         int threads = 1) {
  detail::check_conv_shapes(input, kernel, &bias);
  const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const int OC = kernel.dim(0), KH = kernel.dim(2), KW = kernel.dim(3);
  const int pad_h = (KH - 1) / 2, pad_w = (KW - 1) / 2;
  const size_t hw = static_cast<size_t>(H) * W;
  const size_t k = static_cast<size_t>(C) * KH * KW;

  Tensor<T> out({N, OC, H, W});
  ECMap<T> kmat(kernel.data(), OC, static_cast<Eigen::Index>(k));
  const int workers = std::max(1, std::min(threads, N));
  parallel_workers(workers, [&](int t) {
    std::vector<T> col;
    auto [n0, n1] = detail::chunk(N, workers, t);
    for (int n = n0; n < n1; ++n) {
      detail::im2col(input, n, KH, KW, pad_h, pad_w, col);
      ECMap<T> cmat(col.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(hw));
      EMap<T> omat(&out.at(n, 0, 0, 0), OC, static_cast<Eigen::Index>(hw));
      omat.noalias() = kmat * cmat;
      for (int oc = 0; oc < OC; ++oc) omat.row(oc).array() += bias[static_cast<size_t>(oc)];
    }
  });
  return out;
}

template <typename T>
struct Conv2dGrads {
  Tensor<T> input;   // empty when not requested
  Tensor<T> kernel;
  Tensor<T> bias;
};

template <typename T>
Conv2dGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& kernel,
                               const Tensor<T>& grad_out, bool need_grad_input = true,
                               int threads = 1) {
  detail::check_conv_shapes<T>(input, kernel, nullptr);
  const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const int OC = kernel.dim(0), KH = kernel.dim(2), KW = kernel.dim(3);
  if (grad_out.shape != std::vector<int>{N, OC, H, W})
    fail(Errc::shape_mismatch, "conv2d_backward grad_out " + grad_out.shape_str());
  const int pad_h = (KH - 1) / 2, pad_w = (KW - 1) / 2;
  const size_t hw = static_cast<size_t>(H) * W;
  const size_t k = static_cast<size_t>(C) * KH * KW;

  Conv2dGrads<T> g;
  g.kernel = Tensor<T>(kernel.shape);
  g.bias = Tensor<T>({OC});
  if (need_grad_input) g.input = Tensor<T>(input.shape);

  for (int oc = 0; oc < OC; ++oc) {
    T acc = T(0);
    for (int n = 0; n < N; ++n) {
      const T* p = &grad_out.at(n, oc, 0, 0);
      for (size_t i = 0; i < hw; ++i) acc += p[i];
    }
    g.bias[static_cast<size_t>(oc)] = acc;
  }

  ECMap<T> kmat(kernel.data(), OC, static_cast<Eigen::Index>(k));
  EMap<T> gkmat(g.kernel.data(), OC, static_cast<Eigen::Index>(k));
  std::vector<T> col, colgrad(need_grad_input ? k * hw : 0);
  const int workers = std::max(1, threads);
  // fixed-height row blocks keep every per-block GEMM identical regardless of
  // the thread count, so results are bitwise thread-count-invariant
  constexpr int kOcBlock = 16;
  constexpr int kKBlock = 256;
  const size_t oc_blocks = (static_cast<size_t>(OC) + kOcBlock - 1) / kOcBlock;
  const size_t k_blocks = (k + kKBlock - 1) / kKBlock;
  for (int n = 0; n < N; ++n) {
    detail::im2col(input, n, KH, KW, pad_h, pad_w, col);
    ECMap<T> cmat(col.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(hw));
    ECMap<T> gomat(&grad_out.at(n, 0, 0, 0), OC, static_cast<Eigen::Index>(hw));
    parallel_for(oc_blocks, workers, [&](size_t b) {
      const int r0 = static_cast<int>(b) * kOcBlock;
      const int r1 = std::min(OC, r0 + kOcBlock);
      gkmat.middleRows(r0, r1 - r0).noalias() +=
          gomat.middleRows(r0, r1 - r0) * cmat.transpose();
    });
    if (need_grad_input) {
      EMap<T> cgmat(colgrad.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(hw));
      parallel_for(k_blocks, workers, [&](size_t b) {
        const int r0 = static_cast<int>(b) * kKBlock;
        const int r1 = std::min(static_cast<int>(k), r0 + kKBlock);
        cgmat.middleRows(r0, r1 - r0).noalias() =
            kmat.transpose().middleRows(r0, r1 - r0) * gomat;
      });
      parallel_for(static_cast<size_t>(C), workers, [&](size_t c) {
        detail::col2im_add(colgrad, n, KH, KW, pad_h, pad_w, g.input, static_cast<int>(c));
      });
    }
  }
  return g;
}

// ---- batch norm --------------------------------------------------------------

enum class BnMode { train, eval };

template <typename T>
struct BnCache {
  std::vector<T> mean, inv_std;  // per channel, batch statistics
};

template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& input, const Tensor<T>& gain, const Tensor<T>& bias,
                            Tensor<T>& running_mean, Tensor<T>& running_var, BnMode mode,
                            BnCache<T>* cache = nullptr, T momentum = T(0.9), T eps = T(1e-5),
                            int threads = 1) {
  if (input.ndim() != 4) fail(Errc::shape_mismatch, "batchnorm expects 4-D input");
  const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  if (static_cast<int>(gain.numel()) != C || static_cast<int>(bias.numel()) != C ||
      static_cast<int>(running_mean.numel()) != C || static_cast<int>(running_var.numel()) != C)
    fail(Errc::shape_mismatch, "batchnorm parameter size != channels");
  const size_t m = static_cast<size_t>(N) * H * W;
  if (mode == BnMode::train && m <= 1)
    fail(Errc::bad_argument, "batchnorm train mode needs more than one element per channel");
  const size_t hw = static_cast<size_t>(H) * W;

  Tensor<T> out(input.shape);
  if (cache) {
    cache->mean.assign(static_cast<size_t>(C), T(0));
    cache->inv_std.assign(static_cast<size_t>(C), T(0));
  }
  parallel_for(static_cast<size_t>(C), threads, [&](size_t c) {
    T mu, istd;
    if (mode == BnMode::train) {
      double sum = 0.0, sq = 0.0;
      for (int n = 0; n < N; ++n) {
        const T* p = &input.at(n, static_cast<int>(c), 0, 0);
        for (size_t i = 0; i < hw; ++i) {
          const double x = static_cast<double>(p[i]);
          sum += x;
          sq += x * x;
        }
      }
      const double mean = sum / static_cast<double>(m);
      const double var = std::max(0.0, sq / static_cast<double>(m) - mean * mean);
      mu = static_cast<T>(mean);
      istd = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
      running_mean[c] = momentum * running_mean[c] + (T(1) - momentum) * mu;
      running_var[c] = momentum * running_var[c] + (T(1) - momentum) * static_cast<T>(var);
    } else {
      mu = running_mean[c];
      istd = T(1) / std::sqrt(running_var[c] + eps);
    }
    if (cache) {
      cache->mean[c] = mu;
      cache->inv_std[c] = istd;
    }
    const T g = gain[c], b = bias[c];
    for (int n = 0; n < N; ++n) {
      const T* p = &input.at(n, static_cast<int>(c), 0, 0);
      T* q = &out.at(n, static_cast<int>(c), 0, 0);
      for (size_t i = 0; i < hw; ++i) q[i] = g * (p[i] - mu) * istd + b;
    }
  });
  return out;
}

template <typename T>
struct BnGrads {
  Tensor<T> input, gain, bias;
};

// Backward through train-mode normalization (batch statistics).
template <typename T>
BnGrads<T> batchnorm_backward(const Tensor<T>& input, const Tensor<T>& gain,
                              const BnCache<T>& cache, const Tensor<T>& grad_out,
                              int threads = 1) {
  const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  if (!grad_out.same_shape(input)) fail(Errc::shape_mismatch, "batchnorm_backward shapes");
  const size_t hw = static_cast<size_t>(H) * W;
  const T m = static_cast<T>(static_cast<double>(N) * H * W);

  BnGrads<T> g;
  g.input = Tensor<T>(input.shape);
  g.gain = Tensor<T>({C});
  g.bias = Tensor<T>({C});
  parallel_for(static_cast<size_t>(C), threads, [&](size_t c) {
    const T mu = cache.mean[c], istd = cache.inv_std[c];
    double s1 = 0.0, s2 = 0.0;
    for (int n = 0; n < N; ++n) {
      const T* go = &grad_out.at(n, static_cast<int>(c), 0, 0);
      const T* x = &input.at(n, static_cast<int>(c), 0, 0);
      for (size_t i = 0; i < hw; ++i) {
        s1 += static_cast<double>(go[i]);
        s2 += static_cast<double>(go[i]) * static_cast<double>((x[i] - mu) * istd);
      }
    }
    g.bias[c] = static_cast<T>(s1);
    g.gain[c] = static_cast<T>(s2);
    const T k = gain[c] * istd / m;
    for (int n = 0; n < N; ++n) {
      const T* go = &grad_out.at(n, static_cast<int>(c), 0, 0);
      const T* x = &input.at(n, static_cast<int>(c), 0, 0);
      T* gi = &g.input.at(n, static_cast<int>(c), 0, 0);
      for (size_t i = 0; i < hw; ++i) {
        const T xhat = (x[i] - mu) * istd;
        gi[i] = k * (m * go[i] - static_cast<T>(s1) - xhat * static_cast<T>(s2));
      }
    }
  });
  return g;
}

// ---- relu ---------------------------------------------------------------------

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& in) {
  Tensor<T> out(in.shape);
  for (size_t i = 0; i < in.numel(); ++i) out[i] = in[i] > T(0) ? in[i] : T(0);
  return out;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& out, const Tensor<T>& grad_out) {
  if (!out.same_shape(grad_out)) fail(Errc::shape_mismatch, "relu_backward shapes");
  Tensor<T> g(out.shape);
  for (size_t i = 0; i < out.numel(); ++i) g[i] = out[i] > T(0) ? grad_out[i] : T(0);
  return g;
}

// ---- 2x2 max pooling (floor semantics, first-occurrence tie break) -----------

template <typename T>
struct PoolResult {
  Tensor<T> out;
  Tensor<uint8_t> argmax;  // 2*dy + dx of the winning cell
};

template <typename T>
PoolResult<T> maxpool2x2_forward(const Tensor<T>& in) {
  if (in.ndim() != 4) fail(Errc::shape_mismatch, "maxpool expects 4-D input");
  const int N = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
  const int OH = H / 2, OW = W / 2;
  PoolResult<T> r{Tensor<T>({N, C, OH, OW}), Tensor<uint8_t>({N, C, OH, OW})};
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int oh = 0; oh < OH; ++oh)
        for (int ow = 0; ow < OW; ++ow) {
          T best = in.at(n, c, 2 * oh, 2 * ow);
          uint8_t idx = 0;
          for (int d = 1; d < 4; ++d) {
            const T v = in.at(n, c, 2 * oh + d / 2, 2 * ow + d % 2);
            if (v > best) {
              best = v;
              idx = static_cast<uint8_t>(d);
            }
          }
          r.out.at(n, c, oh, ow) = best;
          r.argmax.at(n, c, oh, ow) = idx;
        }
  return r;
}

template <typename T>
Tensor<T> maxpool2x2_backward(const Tensor<T>& grad_out, const Tensor<uint8_t>& argmax,
                              const std::vector<int>& in_shape) {
  Tensor<T> g(in_shape);
  const int N = grad_out.dim(0), C = grad_out.dim(1), OH = grad_out.dim(2), OW = grad_out.dim(3);
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int oh = 0; oh < OH; ++oh)
        for (int ow = 0; ow < OW; ++ow) {
          const uint8_t d = argmax.at(n, c, oh, ow);
          g.at(n, c, 2 * oh + d / 2, 2 * ow + d % 2) += grad_out.at(n, c, oh, ow);
        }
  return g;
}

// ---- frequency mean: (N, C, H, W) -> (N, H, C) --------------------------------

template <typename T>
Tensor<T> freq_mean_forward(const Tensor<T>& in) {
  const int N = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
  Tensor<T> out({N, H, C});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int h = 0; h < H; ++h) {
        const T* p = &in.at(n, c, h, 0);
        T acc = T(0);
        for (int w = 0; w < W; ++w) acc += p[w];
        out.at3(n, h, c) = acc / static_cast<T>(W);
      }
  return out;
}

template <typename T>
Tensor<T> freq_mean_backward(const Tensor<T>& grad_out, const std::vector<int>& in_shape) {
  Tensor<T> g(in_shape);
  const int N = in_shape[0], C = in_shape[1], H = in_shape[2], W = in_shape[3];
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int h = 0; h < H; ++h) {
        const T v = grad_out.at3(n, h, c) / static_cast<T>(W);
        T* p = &g.at(n, c, h, 0);
        for (int w = 0; w < W; ++w) p[w] = v;
      }
  return g;
}

// ---- time-distributed dense: (N, T, F) x (K, F)' + b -> (N, T, K) -------------

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& in, const Tensor<T>& weight, const Tensor<T>& bias) {
  if (in.ndim() != 3 || weight.ndim() != 2 || in.dim(2) != weight.dim(1))
    fail(Errc::shape_mismatch, "dense_forward shapes: in " + in.shape_str() + ", weight " +
                                   weight.shape_str());
  const int rows = in.dim(0) * in.dim(1), F = in.dim(2), K = weight.dim(0);
  Tensor<T> out({in.dim(0), in.dim(1), K});
  ECMap<T> x(in.data(), rows, F);
  ECMap<T> w(weight.data(), K, F);
  EMap<T> o(out.data(), rows, K);
  o.noalias() = x * w.transpose();
  for (int r = 0; r < rows; ++r)
    for (int k = 0; k < K; ++k) o(r, k) += bias[static_cast<size_t>(k)];
  return out;
}

template <typename T>
struct DenseGrads {
  Tensor<T> input, weight, bias;
};

template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& in, const Tensor<T>& weight,
                             const Tensor<T>& grad_out) {
  const int rows = in.dim(0) * in.dim(1), F = in.dim(2), K = weight.dim(0);
  if (grad_out.shape != std::vector<int>{in.dim(0), in.dim(1), K})
    fail(Errc::shape_mismatch, "dense_backward grad_out " + grad_out.shape_str());
  DenseGrads<T> g;
  g.input = Tensor<T>(in.shape);
  g.weight = Tensor<T>(weight.shape);
  g.bias = Tensor<T>({K});
  ECMap<T> x(in.data(), rows, F);
  ECMap<T> w(weight.data(), K, F);
  ECMap<T> go(grad_out.data(), rows, K);
  EMap<T>(g.input.data(), rows, F).noalias() = go * w;
  EMap<T>(g.weight.data(), K, F).noalias() = go.transpose() * x;
  for (int k = 0; k < K; ++k) {
    T acc = T(0);
    for (int r = 0; r < rows; ++r) acc += go(r, k);
    g.bias[static_cast<size_t>(k)] = acc;
  }
  return g;
}

// ---- sigmoid / binary cross entropy -------------------------------------------

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& z) {
  Tensor<T> p(z.shape);
  for (size_t i = 0; i < z.numel(); ++i) p[i] = T(1) / (T(1) + std::exp(-z[i]));
  return p;
}

// loss = -mean_i [ y ln p + (1-y) ln(1-p) ], p clamped to [1e-7, 1-1e-7];
// gradient w.r.t. the pre-sigmoid logits is (p - y) / count.
template <typename T>
T bce_loss(const Tensor<T>& p, const Tensor<T>& y, Tensor<T>* grad_logits = nullptr) {
  if (!p.same_shape(y)) fail(Errc::shape_mismatch, "bce_loss shapes differ");
  if (p.numel() == 0) fail(Errc::bad_argument, "bce_loss on empty tensors");
  const T lo = T(1e-7), hi = T(1) - T(1e-7);
  const size_t count = p.numel();
  double loss = 0.0;
  if (grad_logits) *grad_logits = Tensor<T>(p.shape);
  for (size_t i = 0; i < count; ++i) {
    const T pc = std::clamp(p[i], lo, hi);
    loss -= static_cast<double>(y[i]) * std::log(static_cast<double>(pc)) +
            (1.0 - static_cast<double>(y[i])) * std::log(1.0 - static_cast<double>(pc));
    if (grad_logits) (*grad_logits)[i] = (p[i] - y[i]) / static_cast<T>(count);
  }
  return static_cast<T>(loss / static_cast<double>(count));
}

}  // namespace sedkit::nn
