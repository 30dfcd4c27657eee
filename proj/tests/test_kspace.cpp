#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "varnet/kspace.hpp"

using namespace varnet;
using testutil::rel_error;

TEST_CASE("expand with a single unit map is the identity") {
  Rng rng(31);
  CxImage x = testutil::random_image(6, 7, rng);
  SensitivityMaps s(1, 6, 7);
  for (auto& v : s) v = 1.0;

  CoilImages e = expand(x, s);
  REQUIRE(e.n() == 1);
  for (long r = 0; r < 6; ++r)
    for (long c = 0; c < 7; ++c) REQUIRE(e(0, r, c) == x(r, c));

  CxImage back = reduce(e, s);
  for (std::size_t i = 0; i < x.size(); ++i) REQUIRE(std::abs(back[i] - x[i]) < 1e-15);
}

TEST_CASE("uniform maps scale each coil by 1/sqrt(N)") {
  Rng rng(32);
  const long n = 4;
  CxImage x = testutil::random_image(5, 5, rng);
  SensitivityMaps s(n, 5, 5);
  for (auto& v : s) v = 1.0 / std::sqrt(double(n));
  CoilImages e = expand(x, s);
  for (long i = 0; i < n; ++i)
    for (long r = 0; r < 5; ++r)
      for (long c = 0; c < 5; ++c)
        REQUIRE(std::abs(e(i, r, c) - x(r, c) / std::sqrt(double(n))) < 1e-15);
}

TEST_CASE("reduce of expand is the identity for normalized maps") {
  Rng rng(33);
  for (long n : {1L, 3L, 8L}) {
    CxImage x = testutil::random_image(12, 10, rng);
    SensitivityMaps s = testutil::random_normalized_maps(n, 12, 10, rng);
    CxImage back = reduce(expand(x, s), x.rows() == 12 ? s : s);
    REQUIRE(rel_error(back, x) < 1e-6);
  }
}

TEST_CASE("reduce of expand with unnormalized maps applies sum |S_i|^2") {
  Rng rng(34);
  const long n = 5;
  CxImage x = testutil::random_image(9, 8, rng);
  SensitivityMaps s = testutil::random_stack(n, 9, 8, rng);

  CxImage got = reduce(expand(x, s), s);

  // Elementwise oracle.
  for (long r = 0; r < 9; ++r)
    for (long c = 0; c < 8; ++c) {
      double w = 0;
      for (long i = 0; i < n; ++i) w += std::norm(s(i, r, c));
      REQUIRE(std::abs(got(r, c) - w * x(r, c)) < 1e-12 * std::max(1.0, std::abs(x(r, c)) * w));
    }
}

TEST_CASE("rss basics and brute-force oracle") {
  CoilImages xs(2, 1, 1);
  xs(0, 0, 0) = cx(3, 0);
  xs(1, 0, 0) = cx(0, 4);
  REQUIRE(rss(xs)(0, 0) == Catch::Approx(5.0).margin(1e-12));

  Rng rng(35);
  CoilImages one = testutil::random_stack(1, 4, 4, rng);
  RealImage r1 = rss(one);
  for (long r = 0; r < 4; ++r)
    for (long c = 0; c < 4; ++c)
      REQUIRE(r1(r, c) == Catch::Approx(std::abs(one(0, r, c))).margin(1e-12));

  CoilImages many = testutil::random_stack(6, 7, 5, rng);
  RealImage rm = rss(many);
  for (long r = 0; r < 7; ++r)
    for (long c = 0; c < 5; ++c) {
      double acc = 0;
      for (long i = 0; i < 6; ++i) {
        const cx v = many(i, r, c);
        acc += v.real() * v.real() + v.imag() * v.imag();
      }
      REQUIRE(std::abs(rm(r, c) - std::sqrt(acc)) < 1e-6);
      REQUIRE(rm(r, c) >= 0.0);
    }
}

TEST_CASE("rss of expand equals |x| for normalized maps") {
  Rng rng(36);
  CxImage x = testutil::random_image(8, 8, rng);
  SensitivityMaps s = testutil::random_normalized_maps(4, 8, 8, rng);
  RealImage m = rss(expand(x, s));
  for (long r = 0; r < 8; ++r)
    for (long c = 0; c < 8; ++c) REQUIRE(std::abs(m(r, c) - std::abs(x(r, c))) < 1e-10);
}

TEST_CASE("forward operator with a full mask is fft of expand, zero maps to zero") {
  Rng rng(37);
  CxImage x = testutil::random_image(10, 12, rng);
  SensitivityMaps s = testutil::random_normalized_maps(3, 10, 12, rng);
  SamplingMask full = full_mask(12);

  MultiCoilKspace a = forward_A(x, s, full);
  MultiCoilKspace b = fft2c(expand(x, s));
  REQUIRE(testutil::max_abs_diff(a, b) == 0.0);

  CxImage zero(10, 12);
  MultiCoilKspace kz = forward_A(zero, s, full);
  for (const auto& v : kz) REQUIRE(v == cx(0, 0));

  // Unsampled columns exactly zero.
  SamplingMask m = equispaced_mask(12, 3, 2, 0);
  MultiCoilKspace ku = forward_A(x, s, m);
  for (long i = 0; i < 3; ++i)
    for (long r = 0; r < 10; ++r)
      for (long c = 0; c < 12; ++c)
        if (!m.columns[c]) REQUIRE(ku(i, r, c) == cx(0, 0));
}

TEST_CASE("adjoint identity over 100 random draws") {
  Rng rng(38);
  for (int trial = 0; trial < 100; ++trial) {
    const long n = 1 + trial % 4;
    const long h = 4 + (trial * 7) % 13;
    const long w = 4 + (trial * 5) % 17;
    CxImage x = testutil::random_image(h, w, rng);
    CxStack y = testutil::random_stack(n, h, w, rng);
    SensitivityMaps s = testutil::random_stack(n, h, w, rng);
    SamplingMask m = (trial % 3 == 0)
                         ? full_mask(w)
                         : (trial % 3 == 1 ? equispaced_mask(w, 2 + trial % 3, int(w / 4), 0)
                                           : random_mask(w, 2.5, 0.2, trial));

    const cx lhs = cdot(forward_A(x, s, m), y);

    CoilImages ys(n, h, w);
    std::copy(y.begin(), y.end(), ys.begin());
    const CxImage aty = adjoint_A(ys, s, m);
    const cx rhs = cdot(x, aty);
    // <A x, y> = <x, A* y>; conjugate-linear in the first slot, so compare
    // conj(lhs) to conj(rhs) componentwise (equivalently lhs to rhs).
    const double scale = std::max({std::abs(lhs), std::abs(rhs), 1e-12});
    REQUIRE(std::abs(lhs.real() - rhs.real()) / scale < 1e-5);
    REQUIRE(std::abs(lhs.imag() - rhs.imag()) / scale < 1e-5);
  }
}

TEST_CASE("adjoint of forward with full mask and normalized maps is identity") {
  Rng rng(39);
  CxImage x = testutil::random_image(14, 9, rng);
  SensitivityMaps s = testutil::random_normalized_maps(4, 14, 9, rng);
  SamplingMask full = full_mask(9);
  CxImage back = adjoint_A(forward_A(x, s, full), s, full);
  REQUIRE(rel_error(back, x) < 1e-10);

  MultiCoilKspace kz(4, 14, 9);
  CxImage z = adjoint_A(kz, s, full);
  for (const auto& v : z) REQUIRE(v == cx(0, 0));
}

TEST_CASE("operators are linear") {
  Rng rng(40);
  const long n = 3, h = 8, w = 10;
  SensitivityMaps s = testutil::random_normalized_maps(n, h, w, rng);
  SamplingMask m = equispaced_mask(w, 2, 2, 0);
  CxImage x1 = testutil::random_image(h, w, rng), x2 = testutil::random_image(h, w, rng);
  const cx a(1.5, -0.5), b(0.25, 2.0);

  CxImage combo(h, w);
  for (std::size_t i = 0; i < combo.size(); ++i) combo[i] = a * x1[i] + b * x2[i];

  MultiCoilKspace lhs = forward_A(combo, s, m);
  MultiCoilKspace f1 = forward_A(x1, s, m), f2 = forward_A(x2, s, m);
  double worst = 0;
  for (std::size_t i = 0; i < lhs.size(); ++i)
    worst = std::max(worst, std::abs(lhs[i] - (a * f1[i] + b * f2[i])));
  REQUIRE(worst < 1e-10);
}

TEST_CASE("cs gradient descent: zero steps returns the adjoint reconstruction") {
  Rng rng(41);
  const long n = 3, h = 12, w = 16;
  CxImage x = testutil::random_image(h, w, rng);
  SensitivityMaps s = testutil::random_normalized_maps(n, h, w, rng);
  SamplingMask m = equispaced_mask(w, 2, 4, 0);
  MultiCoilKspace k = forward_A(x, s, m);

  CxImage r0 = cs_gradient_descent(k, s, m, 0.0, 1.0, reg_grad_none, 0);
  CxImage zf = adjoint_A(k, s, m);
  REQUIRE(testutil::max_abs_diff(r0, zf) == 0.0);
}

TEST_CASE("cs gradient descent recovers exactly under full sampling") {
  Rng rng(42);
  const long n = 4, h = 10, w = 10;
  CxImage x = testutil::random_image(h, w, rng);
  SensitivityMaps s = testutil::random_normalized_maps(n, h, w, rng);
  SamplingMask full = full_mask(w);
  MultiCoilKspace k = forward_A(x, s, full);

  CxImage rec = cs_gradient_descent(k, s, full, 0.0, 1.0, reg_grad_none, 1);
  REQUIRE(rel_error(rec, x) < 1e-9);
}

TEST_CASE("cs gradient descent residual is monotone non-increasing") {
  Rng rng(43);
  const long n = 4, h = 24, w = 24;
  CxImage x = testutil::random_image(h, w, rng);
  SensitivityMaps s = testutil::random_normalized_maps(n, h, w, rng);
  SamplingMask m = equispaced_mask(w, 4, 6, 0);
  MultiCoilKspace k = forward_A(x, s, m);

  auto residual_norm = [&](const CxImage& xi) {
    MultiCoilKspace r = forward_A(xi, s, m);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] -= k[i];
    return norm2(r);
  };

  double prev = residual_norm(adjoint_A(k, s, m));
  for (int t = 1; t <= 50; ++t) {
    CxImage xt = cs_gradient_descent(k, s, m, 0.0, 0.5, reg_grad_none, t);
    const double cur = residual_norm(xt);
    REQUIRE(cur <= prev * (1.0 + 1e-12) + 1e-15);
    prev = cur;
  }
}

TEST_CASE("cs gradient descent reports divergence with an oversized step") {
  Rng rng(44);
  const long n = 2, h = 8, w = 8;
  CxImage x = testutil::random_image(h, w, rng);
  SensitivityMaps s = testutil::random_normalized_maps(n, h, w, rng);
  SamplingMask full = full_mask(w);
  MultiCoilKspace k = forward_A(x, s, full);

  REQUIRE_THROWS_AS(cs_gradient_descent(k, s, full, 0.0, 10.0, reg_grad_none, 200),
                    DivergenceError);
  try {
    cs_gradient_descent(k, s, full, 0.0, 10.0, reg_grad_none, 200);
  } catch (const DivergenceError& e) {
    REQUIRE(std::string(e.what()).find("step") != std::string::npos);
  }
}

TEST_CASE("cs gradient descent with Tikhonov term converges under full sampling") {
  Rng rng(45);
  const long n = 2, h = 8, w = 8;
  CxImage x = testutil::random_image(h, w, rng);
  SensitivityMaps s = testutil::random_normalized_maps(n, h, w, rng);
  SamplingMask full = full_mask(w);
  MultiCoilKspace k = forward_A(x, s, full);

  // Fixed point of (A*A + lambda I) x = A* k is x / (1 + lambda) under full
  // sampling with normalized maps.
  const double lambda = 0.5;
  CxImage rec = cs_gradient_descent(k, s, full, lambda, 0.5, reg_grad_tikhonov, 400);
  CxImage expect(h, w);
  for (std::size_t i = 0; i < x.size(); ++i) expect[i] = x[i] / (1.0 + lambda);
  REQUIRE(rel_error(rec, expect) < 1e-6);
}

TEST_CASE("zero-filled rss equals ground truth for noiseless full sampling") {
  Rng rng(46);
  CxImage x = testutil::random_image(16, 16, rng);
  SensitivityMaps s = testutil::random_normalized_maps(5, 16, 16, rng);
  MultiCoilKspace k = forward_A(x, s, full_mask(16));
  RealImage zf = zero_filled_rss(k);
  for (long r = 0; r < 16; ++r)
    for (long c = 0; c < 16; ++c)
      REQUIRE(std::abs(zf(r, c) - std::abs(x(r, c))) < 1e-9);
}
