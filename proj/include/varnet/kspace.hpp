#pragma once

#include <functional>
#include <sstream>

#include "varnet/fft.hpp"
#include "varnet/mask.hpp"
#include "varnet/tensor.hpp"

// Linear operators of the multi-coil acquisition model and the classical
// compressed-sensing gradient-descent baseline. All functions are pure.

namespace varnet {

// E: per-coil image x_i = S_i * x.
inline CoilImages expand(const CxImage& x, const SensitivityMaps& maps) {
  if (maps.rows() != x.rows() || maps.cols() != x.cols())
    throw InvalidInput("expand: image and sensitivity map shapes differ");
  CoilImages out(maps.n(), maps.rows(), maps.cols());
  for (long i = 0; i < maps.n(); ++i)
    for (long r = 0; r < maps.rows(); ++r)
      for (long c = 0; c < maps.cols(); ++c) out(i, r, c) = maps(i, r, c) * x(r, c);
  return out;
}

// R: combined image sum_i conj(S_i) * x_i.
inline CxImage reduce(const CoilImages& xs, const SensitivityMaps& maps) {
  if (!xs.same_shape(maps))
    throw InvalidInput("reduce: coil images and sensitivity map shapes differ");
  CxImage out(xs.rows(), xs.cols());
  for (long i = 0; i < xs.n(); ++i)
    for (long r = 0; r < xs.rows(); ++r)
      for (long c = 0; c < xs.cols(); ++c)
        out(r, c) += std::conj(maps(i, r, c)) * xs(i, r, c);
  return out;
}

// Per-pixel root-sum-of-squares across coils.
inline RealImage rss(const CoilImages& xs) {
  RealImage out(xs.rows(), xs.cols());
  for (long i = 0; i < xs.n(); ++i)
    for (long r = 0; r < xs.rows(); ++r)
      for (long c = 0; c < xs.cols(); ++c) out(r, c) += std::norm(xs(i, r, c));
  for (auto& v : out) v = std::sqrt(v);
  return out;
}

// A = M o F o E
inline MultiCoilKspace forward_A(const CxImage& x, const SensitivityMaps& maps,
                                 const SamplingMask& m) {
  return apply_mask(fft2c(expand(x, maps)), m);
}

// A* = R o F^-1 o M
inline CxImage adjoint_A(const MultiCoilKspace& k, const SensitivityMaps& maps,
                         const SamplingMask& m) {
  if (!k.same_shape(maps))
    throw InvalidInput("adjoint_A: k-space and sensitivity map shapes differ");
  return reduce(ifft2c(apply_mask(k, m)), maps);
}

// Map-free reconstruction for reporting: rss of per-coil inverse transforms.
inline RealImage zero_filled_rss(const MultiCoilKspace& k) {
  return rss(ifft2c(k));
}

// Regularizer gradients Phi for the CS baseline.
inline CxImage reg_grad_none(const CxImage& x) {
  return CxImage(x.rows(), x.cols());
}

inline CxImage reg_grad_tikhonov(const CxImage& x) { return x; }

// Gradient descent on 1/2 ||A(x) - k~||^2 + lambda * Psi(x), starting from the
// adjoint reconstruction x0 = A*(k~). `eta` holds per-step sizes; the last
// entry repeats when there are more steps than entries.
inline CxImage cs_gradient_descent(const MultiCoilKspace& kspace, const SensitivityMaps& maps,
                                   const SamplingMask& m, double lambda,
                                   const std::vector<double>& eta,
                                   const std::function<CxImage(const CxImage&)>& reg_grad,
                                   int steps) {
  if (steps < 0) throw InvalidParams("cs_gradient_descent: steps must be >= 0");
  if (eta.empty()) throw InvalidParams("cs_gradient_descent: empty step-size schedule");
  for (double e : eta)
    if (e <= 0) throw InvalidParams("cs_gradient_descent: step sizes must be positive");

  CxImage x = adjoint_A(kspace, maps, m);
  const double limit = 1e6 * std::max(norm2(x), 1e-30);

  for (int t = 0; t < steps; ++t) {
    const double step = eta[std::min<std::size_t>(t, eta.size() - 1)];
    MultiCoilKspace residual = forward_A(x, maps, m);
    for (std::size_t i = 0; i < residual.size(); ++i) residual[i] -= kspace[i];
    CxImage grad = adjoint_A(residual, maps, m);
    if (lambda != 0.0) {
      CxImage pen = reg_grad(x);
      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += lambda * pen[i];
    }
    for (std::size_t i = 0; i < x.size(); ++i) x[i] -= step * grad[i];

    if (norm2(x) > limit || !all_finite(x)) {
      std::ostringstream os;
      os << "cs_gradient_descent: diverged at step " << t + 1 << " of " << steps
         << " (iterate norm exceeded 1e6 x initial)";
      throw DivergenceError(os.str());
    }
  }
  return x;
}

inline CxImage cs_gradient_descent(const MultiCoilKspace& kspace, const SensitivityMaps& maps,
                                   const SamplingMask& m, double lambda, double eta,
                                   const std::function<CxImage(const CxImage&)>& reg_grad,
                                   int steps) {
  return cs_gradient_descent(kspace, maps, m, lambda, std::vector<double>{eta}, reg_grad, steps);
}

}  // namespace varnet
