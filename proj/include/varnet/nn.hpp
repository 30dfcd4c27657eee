#pragma once

#include <optional>
#include <string>
#include <vector>

#include "varnet/autodiff.hpp"
#include "varnet/rng.hpp"

// Encoder-decoder CNN used by both the cascade refinement and the sensitivity
// estimation: conv blocks (two 3x3 convs, instance norm, leaky ReLU), 2x2
// average-pool downsampling, 2x2 transposed-conv upsampling with skip
// concatenation, final 1x1 conv. Convs inside blocks carry no bias (the
// instance norm absorbs it); only the final 1x1 conv has one.

namespace varnet::nn {

using ad::Tensor;
using ad::Var;

struct Param {
  std::string name;
  Var var;
};

inline Var make_weight(std::vector<long> shape, long fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = 1.0 / std::sqrt(double(fan_in));
  for (long i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-bound, bound);
  return ad::leaf(std::move(t), true);
}

// Per-channel normalization over the spatial axes (biased variance).
inline Var instance_norm(const Var& x, double eps = 1e-5) {
  const auto& shape = x->val.shape();
  Var m = ad::reduce_mean(x, {-2, -1}, true);
  Var xc = ad::sub(x, ad::broadcast_to(m, shape));
  Var v = ad::reduce_mean(ad::square(xc), {-2, -1}, true);
  Var s = ad::sqrt_v(ad::add_scalar(v, eps));
  return ad::div(xc, ad::broadcast_to(s, shape));
}

struct Conv2d {
  Var w;
  Var b;  // null when the conv has no bias
  long pad = 0;

  Conv2d() = default;
  Conv2d(long cin, long cout, long k, bool bias, Rng& rng) : pad(k / 2) {
    w = make_weight({cout, cin, k, k}, cin * k * k, rng);
    if (bias) b = make_weight({cout}, cin * k * k, rng);
  }

  Var forward(const Var& x) const { return ad::conv2d(x, w, b, pad); }

  void collect(std::vector<Param>& out, const std::string& prefix) const {
    out.push_back({prefix + ".w", w});
    if (b) out.push_back({prefix + ".b", b});
  }
};

struct ConvBlock {
  Conv2d c1, c2;

  ConvBlock() = default;
  ConvBlock(long cin, long cout, Rng& rng)
      : c1(cin, cout, 3, false, rng), c2(cout, cout, 3, false, rng) {}

  Var forward(const Var& x) const {
    Var h = ad::leaky_relu(instance_norm(c1.forward(x)), 0.2);
    return ad::leaky_relu(instance_norm(c2.forward(h)), 0.2);
  }

  void collect(std::vector<Param>& out, const std::string& prefix) const {
    c1.collect(out, prefix + ".conv1");
    c2.collect(out, prefix + ".conv2");
  }
};

struct TransposeConvBlock {
  Var w;  // [Cin, Cout, 2, 2]

  TransposeConvBlock() = default;
  TransposeConvBlock(long cin, long cout, Rng& rng) {
    w = make_weight({cin, cout, 2, 2}, cin * 4, rng);
  }

  Var forward(const Var& x) const {
    return ad::leaky_relu(instance_norm(ad::conv_transpose2x2(x, w)), 0.2);
  }

  void collect(std::vector<Param>& out, const std::string& prefix) const {
    out.push_back({prefix + ".w", w});
  }
};

class Unet {
 public:
  Unet() = default;
  Unet(long in_ch, long out_ch, long chans, long pools, Rng& rng)
      : in_ch_(in_ch), out_ch_(out_ch), chans_(chans), pools_(pools) {
    if (chans < 1 || pools < 1) throw InvalidParams("Unet: chans and pools must be >= 1");
    long ch = chans;
    down_.emplace_back(in_ch, ch, rng);
    for (long i = 1; i < pools; ++i) {
      down_.emplace_back(ch, ch * 2, rng);
      ch *= 2;
    }
    bottleneck_ = ConvBlock(ch, ch * 2, rng);
    long up = ch * 2;
    for (long i = 0; i < pools; ++i) {
      up_t_.emplace_back(up, up / 2, rng);
      up_conv_.emplace_back(up, up / 2, rng);
      up /= 2;
    }
    final_ = Conv2d(chans, out_ch, 1, true, rng);
  }

  // x: [in_ch, H, W] -> [out_ch, H, W]; arbitrary sizes handled by internal
  // zero padding to a multiple of 2^pools.
  Var forward(const Var& x) const {
    const long h = x->val.dim(-2), w = x->val.dim(-1);
    const long mult = 1L << pools_;
    const long th = (h + mult - 1) / mult * mult;
    const long tw = (w + mult - 1) / mult * mult;
    const long pt = (th - h) / 2, pl = (tw - w) / 2;

    Var cur = (th == h && tw == w) ? x : ad::pad2d(x, pt, th - h - pt, pl, tw - w - pl);

    std::vector<Var> skips;
    for (const auto& block : down_) {
      cur = block.forward(cur);
      skips.push_back(cur);
      cur = ad::avg_pool2(cur);
    }
    cur = bottleneck_.forward(cur);
    for (long i = 0; i < pools_; ++i) {
      cur = up_t_[i].forward(cur);
      cur = ad::concat({cur, skips[pools_ - 1 - i]}, 0);
      cur = up_conv_[i].forward(cur);
    }
    cur = final_.forward(cur);

    if (th != h || tw != w) cur = ad::crop2d(cur, pt, pl, h, w);
    return cur;
  }

  void collect(std::vector<Param>& out, const std::string& prefix) const {
    for (std::size_t i = 0; i < down_.size(); ++i)
      down_[i].collect(out, prefix + ".down" + std::to_string(i));
    bottleneck_.collect(out, prefix + ".bottleneck");
    for (std::size_t i = 0; i < up_t_.size(); ++i) {
      up_t_[i].collect(out, prefix + ".up" + std::to_string(i) + ".t");
      up_conv_[i].collect(out, prefix + ".up" + std::to_string(i) + ".conv");
    }
    final_.collect(out, prefix + ".final");
  }

  long param_count() const {
    std::vector<Param> ps;
    collect(ps, "");
    long n = 0;
    for (const auto& p : ps) n += p.var->val.numel();
    return n;
  }

 private:
  long in_ch_ = 0, out_ch_ = 0, chans_ = 0, pools_ = 0;
  std::vector<ConvBlock> down_;
  ConvBlock bottleneck_;
  std::vector<TransposeConvBlock> up_t_;
  std::vector<ConvBlock> up_conv_;
  Conv2d final_;
};

// U-Net on a complex image [1, 2, H, W], with per-channel shift/scale
// normalization applied before the network and undone after.
class NormUnet {
 public:
  NormUnet() = default;
  NormUnet(long chans, long pools, Rng& rng) : unet_(2, 2, chans, pools, rng) {}

  Var forward(const Var& x) const {
    const long h = x->val.dim(-2), w = x->val.dim(-1);
    Var x3 = ad::reshape(x, {2, h, w});
    Var m = ad::reduce_mean(x3, {-2, -1}, true);
    Var mb = ad::broadcast_to(m, x3->val.shape());
    Var xc = ad::sub(x3, mb);
    Var v = ad::reduce_mean(ad::square(xc), {-2, -1}, true);
    Var s = ad::sqrt_v(ad::add_scalar(v, 1e-6));
    Var sb = ad::broadcast_to(s, x3->val.shape());
    Var y = unet_.forward(ad::div(xc, sb));
    Var out = ad::add(ad::mul(y, sb), mb);
    return ad::reshape(out, {1, 2, h, w});
  }

  void collect(std::vector<Param>& out, const std::string& prefix) const {
    unet_.collect(out, prefix);
  }

  long param_count() const { return unet_.param_count(); }

 private:
  Unet unet_;
};

}  // namespace varnet::nn
