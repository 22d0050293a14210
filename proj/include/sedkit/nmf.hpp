#pragma once

// Non-negative matrix factorization M ~ W*H by Lee-Seung multiplicative
// updates on the squared Frobenius objective:
//
//   H <- H .* (W'M) ./ (W'WH + delta)
//   W <- W .* (MH') ./ (WHH' + delta)
//
// The objective is non-increasing under these updates; the delta guard keeps
// dead components at the floor instead of dividing by zero.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sedkit/common.hpp"
#include "sedkit/rng.hpp"

namespace sedkit {

using MatrixD = Eigen::MatrixXd;

struct NmfOptions {
  int R = 1;                // component count; pipeline may override per clip
  int max_iters = 500;
  double rel_tol = 1e-5;    // stop when per-iteration relative improvement falls below
  uint64_t seed = 0;
  double delta = 1e-12;     // denominator guard
  bool record_history = false;
};

struct NmfFactors {
  MatrixD W;  // L x R dictionary
  MatrixD H;  // R x N activations
  int R = 0;
  double final_error = 0.0;  // ||M - WH||_F
  int iterations_run = 0;
  std::vector<double> error_history;  // per iteration, when recorded
};

inline double reconstruction_error(const MatrixD& M, const MatrixD& W, const MatrixD& H) {
  if (W.rows() != M.rows() || H.cols() != M.cols() || W.cols() != H.rows())
    fail(Errc::shape_mismatch,
         "reconstruction_error: M is " + std::to_string(M.rows()) + "x" +
             std::to_string(M.cols()) + ", W*H is " + std::to_string(W.rows()) + "x" +
             std::to_string(H.cols()) + " (inner " + std::to_string(W.cols()) + "/" +
             std::to_string(H.rows()) + ")");
  return (M - W * H).norm();
}

inline NmfFactors factorize(const MatrixD& M, const NmfOptions& opts) {
  if (opts.R < 1) fail(Errc::bad_argument, "R must be >= 1");
  if (opts.max_iters < 1) fail(Errc::bad_argument, "max_iters must be >= 1");
  if (!(opts.rel_tol > 0.0)) fail(Errc::bad_argument, "rel_tol must be > 0");
  if (!M.allFinite()) fail(Errc::non_finite, "input matrix has non-finite entries");
  if (M.minCoeff() < 0.0) fail(Errc::bad_argument, "input matrix has negative entries");
  if (M.size() == 0 || M.maxCoeff() == 0.0)
    fail(Errc::degenerate_input, "all-zero input has no meaningful factorization");

  const Eigen::Index L = M.rows();
  const Eigen::Index N = M.cols();
  const int R = opts.R;

  NmfFactors out;
  out.R = R;
  out.W.resize(L, R);
  out.H.resize(R, N);

  // i.i.d. uniform(0,1] scaled so the initial product sits near M's magnitude
  Rng rng(opts.seed);
  const double scale = std::sqrt(M.mean() / R);
  for (Eigen::Index i = 0; i < L; ++i)
    for (int r = 0; r < R; ++r) out.W(i, r) = scale * rng.uniform_open0();
  for (int r = 0; r < R; ++r)
    for (Eigen::Index j = 0; j < N; ++j) out.H(r, j) = scale * rng.uniform_open0();

  MatrixD& W = out.W;
  MatrixD& H = out.H;
  double prev_err = (M - W * H).norm();
  if (opts.record_history) out.error_history.push_back(prev_err);
  out.final_error = prev_err;
  if (prev_err == 0.0) return out;

  for (int it = 1; it <= opts.max_iters; ++it) {
    {
      const MatrixD WtM = W.transpose() * M;                    // R x N
      const MatrixD WtWH = (W.transpose() * W) * H;             // R x N
      H.array() *= WtM.array() / (WtWH.array() + opts.delta);
    }
    {
      const MatrixD MHt = M * H.transpose();                    // L x R
      const MatrixD WHHt = W * (H * H.transpose());             // L x R
      W.array() *= MHt.array() / (WHHt.array() + opts.delta);
    }
    const double err = (M - W * H).norm();
    out.iterations_run = it;
    if (opts.record_history) out.error_history.push_back(err);
    out.final_error = err;
    if (err == 0.0) break;
    if ((prev_err - err) / prev_err < opts.rel_tol) break;
    prev_err = err;
  }
  return out;
}

}  // namespace sedkit
