#pragma once

// Shared helpers for the Catch2 suites.

#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "sedkit/common.hpp"

namespace testutil {

template <typename Fn>
sedkit::Errc thrown_code(Fn&& fn) {
  try {
    fn();
  } catch (const sedkit::Error& e) {
    return e.code();
  } catch (const std::exception& e) {
    FAIL("expected sedkit::Error, got: " << e.what());
  }
  FAIL("expected an exception, none thrown");
  return sedkit::Errc::io_error;
}

// Fresh scratch directory under the build tree, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    dir_ = std::filesystem::temp_directory_path() /
           ("sedkit_test_" + tag + "_" + std::to_string(counter()++));
    std::filesystem::remove_all(dir_);
    std::filesystem::create_directories(dir_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(dir_, ec);
  }
  const std::filesystem::path& path() const { return dir_; }

 private:
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::filesystem::path dir_;
};

// Amplitude of the projection of x onto a complex exponential at f_hz.
inline double tone_amplitude(const std::vector<float>& x, int rate, double f_hz) {
  double re = 0.0, im = 0.0;
  for (size_t n = 0; n < x.size(); ++n) {
    const double ang = 2.0 * M_PI * f_hz * static_cast<double>(n) / rate;
    re += x[n] * std::cos(ang);
    im -= x[n] * std::sin(ang);
  }
  return 2.0 * std::hypot(re, im) / static_cast<double>(x.size());
}

// Naive DFT peak bin over an N-sample window.
inline int dft_peak_bin(const std::vector<float>& x, size_t n_window) {
  const size_t n = std::min(n_window, x.size());
  int best_bin = 0;
  double best_mag = -1.0;
  for (size_t k = 1; k < n / 2; ++k) {
    double re = 0.0, im = 0.0;
    for (size_t i = 0; i < n; ++i) {
      const double ang = 2.0 * M_PI * static_cast<double>(k) * static_cast<double>(i) /
                         static_cast<double>(n);
      re += x[i] * std::cos(ang);
      im -= x[i] * std::sin(ang);
    }
    const double mag = re * re + im * im;
    if (mag > best_mag) {
      best_mag = mag;
      best_bin = static_cast<int>(k);
    }
  }
  return best_bin;
}

}  // namespace testutil
