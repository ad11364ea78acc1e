#pragma once

#include <unistd.h>

#include <cmath>
#include <complex>
#include <cstdlib>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "sdrbed/error.hpp"

namespace testsupport {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "sdrbed-test-XXXXXX").string();
    if (!mkdtemp(tmpl.data())) std::abort();
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::string& path() const { return path_; }
  std::string operator/(const std::string& name) const { return (std::filesystem::path(path_) / name).string(); }

 private:
  std::string path_;
};

/// Kind of the sdrbed::Error thrown by f, or nullopt-like sentinel when none.
template <typename F>
std::string thrown_kind(F&& f) {
  try {
    f();
  } catch (const sdrbed::Error& e) {
    return std::string(e.name());
  }
  return "none";
}

/// Direct DFT bin magnitude at frequency f (Hz), no windowing.
inline double dft_mag(const std::vector<std::complex<double>>& x, double rate, double f) {
  std::complex<double> acc = 0;
  const double w = -2.0 * std::numbers::pi * f / rate;
  for (std::size_t n = 0; n < x.size(); ++n) acc += x[n] * std::polar(1.0, w * static_cast<double>(n));
  return std::abs(acc) / static_cast<double>(x.size());
}

/// Index of the largest |X[k]| of an N-point DFT computed naively.
inline std::size_t dft_peak_bin(const std::vector<std::complex<double>>& x) {
  const std::size_t n = x.size();
  std::size_t best = 0;
  double best_mag = -1;
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc = 0;
    for (std::size_t i = 0; i < n; ++i)
      acc += x[i] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * i % n) / static_cast<double>(n));
    if (std::abs(acc) > best_mag) {
      best_mag = std::abs(acc);
      best = k;
    }
  }
  return best;
}

/// Signed frequency of DFT bin k.
inline double bin_freq(std::size_t k, std::size_t n, double rate) {
  const double kk = k < n / 2 ? static_cast<double>(k) : static_cast<double>(k) - static_cast<double>(n);
  return kk * rate / static_cast<double>(n);
}

}  // namespace testsupport
