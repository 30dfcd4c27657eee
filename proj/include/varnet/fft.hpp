#pragma once

#include <unsupported/Eigen/FFT>

#include "varnet/tensor.hpp"

// Centered, orthonormal 2D Fourier transforms.
//
// Convention: fft2c(x) = shift(FFT2(unshift(x))) / sqrt(H*W), where the
// zero-frequency bin sits at (floor(H/2), floor(W/2)). ifft2c inverts it with
// the same scaling, so both directions preserve the l2 norm exactly up to
// roundoff (Parseval) and compose to the identity.

namespace varnet {

namespace detail {

// Circular roll of a 2D complex image by (dr, dc).
inline CxImage roll2(const CxImage& x, long dr, long dc) {
  const long h = x.rows(), w = x.cols();
  CxImage out(h, w);
  dr = ((dr % h) + h) % h;
  dc = ((dc % w) + w) % w;
  for (long r = 0; r < h; ++r) {
    const long rr = (r + dr) % h;
    for (long c = 0; c < w; ++c) out(rr, (c + dc) % w) = x(r, c);
  }
  return out;
}

inline CxImage fftshift2(const CxImage& x) {
  return roll2(x, x.rows() / 2, x.cols() / 2);
}

inline CxImage ifftshift2(const CxImage& x) {
  return roll2(x, x.rows() - x.rows() / 2, x.cols() - x.cols() / 2);
}

// Unscaled 2D DFT (rows then columns); inverse when `inverse` is set.
inline CxImage dft2(const CxImage& x, bool inverse) {
  const long h = x.rows(), w = x.cols();
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::Unscaled);

  CxImage tmp(h, w);
  std::vector<cx> in(w), out(w);
  for (long r = 0; r < h; ++r) {
    for (long c = 0; c < w; ++c) in[c] = x(r, c);
    if (inverse)
      fft.inv(out, in);
    else
      fft.fwd(out, in);
    for (long c = 0; c < w; ++c) tmp(r, c) = out[c];
  }

  CxImage res(h, w);
  std::vector<cx> cin(h), cout(h);
  for (long c = 0; c < w; ++c) {
    for (long r = 0; r < h; ++r) cin[r] = tmp(r, c);
    if (inverse)
      fft.inv(cout, cin);
    else
      fft.fwd(cout, cin);
    for (long r = 0; r < h; ++r) res(r, c) = cout[r];
  }
  return res;
}

}  // namespace detail

inline CxImage fft2c(const CxImage& img) {
  if (!all_finite(img)) throw InvalidInput("fft2c: non-finite input");
  CxImage k = detail::fftshift2(detail::dft2(detail::ifftshift2(img), false));
  const double scale = 1.0 / std::sqrt(double(img.rows()) * double(img.cols()));
  for (auto& v : k) v *= scale;
  return k;
}

inline CxImage ifft2c(const CxImage& ksp) {
  if (!all_finite(ksp)) throw InvalidInput("ifft2c: non-finite input");
  CxImage x = detail::fftshift2(detail::dft2(detail::ifftshift2(ksp), true));
  const double scale = 1.0 / std::sqrt(double(ksp.rows()) * double(ksp.cols()));
  for (auto& v : x) v *= scale;
  return x;
}

inline CxStack fft2c(const CxStack& s) {
  CxStack out(s.n(), s.rows(), s.cols());
  CxImage plane(s.rows(), s.cols());
  for (long i = 0; i < s.n(); ++i) {
    std::copy(s.plane(i), s.plane(i) + s.rows() * s.cols(), plane.data());
    CxImage k = fft2c(plane);
    std::copy(k.begin(), k.end(), out.plane(i));
  }
  return out;
}

inline CxStack ifft2c(const CxStack& s) {
  CxStack out(s.n(), s.rows(), s.cols());
  CxImage plane(s.rows(), s.cols());
  for (long i = 0; i < s.n(); ++i) {
    std::copy(s.plane(i), s.plane(i) + s.rows() * s.cols(), plane.data());
    CxImage x = ifft2c(plane);
    std::copy(x.begin(), x.end(), out.plane(i));
  }
  return out;
}

}  // namespace varnet
