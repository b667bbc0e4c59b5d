#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

namespace rwre {

/// Running sums for a sample mean and its standard error.
struct Moments {
  double sum = 0;
  double sum_sq = 0;
  std::int64_t n = 0;

  void add(double x) {
    sum += x;
    sum_sq += x * x;
    ++n;
  }
  Moments& operator+=(const Moments& o) {
    sum += o.sum;
    sum_sq += o.sum_sq;
    n += o.n;
    return *this;
  }
  double mean() const { return n ? sum / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN(); }
  double variance() const {
    if (n < 2) return 0;
    const double m = mean();
    return std::max(0.0, (sum_sq - static_cast<double>(n) * m * m) / static_cast<double>(n - 1));
  }
  double std_error() const { return n ? std::sqrt(variance() / static_cast<double>(n)) : 0; }
};

}  // namespace rwre
