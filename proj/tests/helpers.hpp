#pragma once

#include <cmath>

#include "varnet/rng.hpp"
#include "varnet/tensor.hpp"

// Shared fixtures for the unit tests: seeded random images, coil stacks and
// normalized sensitivity maps.

namespace testutil {

using varnet::cx;
using varnet::CxImage;
using varnet::CxStack;
using varnet::RealImage;

inline CxImage random_image(long h, long w, varnet::Rng& rng) {
  CxImage x(h, w);
  for (auto& v : x) v = cx(rng.normal(), rng.normal());
  return x;
}

inline RealImage random_real_image(long h, long w, varnet::Rng& rng, double lo = 0.0,
                                   double hi = 1.0) {
  RealImage x(h, w);
  for (auto& v : x) v = rng.uniform(lo, hi);
  return x;
}

inline CxStack random_stack(long n, long h, long w, varnet::Rng& rng) {
  CxStack s(n, h, w);
  for (auto& v : s) v = cx(rng.normal(), rng.normal());
  return s;
}

// Random maps normalized so that sum_i |S_i|^2 = 1 at every pixel.
inline CxStack random_normalized_maps(long n, long h, long w, varnet::Rng& rng) {
  CxStack s = random_stack(n, h, w, rng);
  for (long r = 0; r < h; ++r)
    for (long c = 0; c < w; ++c) {
      double norm = 0;
      for (long i = 0; i < n; ++i) norm += std::norm(s(i, r, c));
      const double scale = 1.0 / std::sqrt(norm);
      for (long i = 0; i < n; ++i) s(i, r, c) *= scale;
    }
  return s;
}

template <typename A>
double max_abs_diff(const A& a, const A& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

template <typename A>
double rel_error(const A& a, const A& b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += std::norm(a[i] - b[i]);
    den += std::norm(b[i]);
  }
  return den == 0 ? std::sqrt(num) : std::sqrt(num / den);
}

}  // namespace testutil
