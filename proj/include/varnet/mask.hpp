#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "varnet/errors.hpp"
#include "varnet/rng.hpp"
#include "varnet/tensor.hpp"

// Cartesian column-undersampling patterns. A mask selects full k-space
// columns (phase-encode lines); the same mask applies to every coil.

namespace varnet {

enum class MaskKind { Equispaced, Random, Full };

inline const char* to_string(MaskKind k) {
  switch (k) {
    case MaskKind::Equispaced: return "equispaced";
    case MaskKind::Random: return "random";
    case MaskKind::Full: return "full";
  }
  return "?";
}

struct SamplingMask {
  std::vector<std::uint8_t> columns;  // 0/1 per k-space column
  MaskKind kind = MaskKind::Full;
  int acs_width = 0;  // width of the contiguous centered ACS block

  // Generation parameters, kept for provenance and spec round-trips.
  int accel_r = 0;
  int lines_l = 0;
  int offset = 0;
  double accel_a = 0.0;
  double frac_f = 0.0;
  std::uint64_t seed = 0;

  long width() const { return static_cast<long>(columns.size()); }

  long sampled_count() const {
    return std::accumulate(columns.begin(), columns.end(), 0L);
  }

  double measured_acceleration() const {
    const long s = sampled_count();
    return s == 0 ? 0.0 : double(width()) / double(s);
  }

  // First column of the centered ACS block: floor((W - l) / 2).
  long acs_start() const { return (width() - acs_width) / 2; }

  std::string spec_string() const {
    std::ostringstream os;
    switch (kind) {
      case MaskKind::Equispaced:
        os << "equispaced:r=" << accel_r << ",l=" << lines_l << ",offset=" << offset;
        break;
      case MaskKind::Random:
        os << "random:a=" << accel_a << ",f=" << frac_f << ",seed=" << seed;
        break;
      case MaskKind::Full:
        os << "full";
        break;
    }
    return os.str();
  }
};

// l low-frequency lines from the center plus every r-th remaining line.
// offset selects which residue class (mod r) is kept outside the ACS block.
inline SamplingMask equispaced_mask(long width, int r, int l, int offset = 0) {
  if (width < 1) throw InvalidParams("equispaced_mask: width must be >= 1");
  if (r < 1) throw InvalidParams("equispaced_mask: acceleration r must be >= 1");
  if (l < 0 || l > width) throw InvalidParams("equispaced_mask: ACS lines l out of range [0, W]");
  if (offset < 0 || offset >= r) throw InvalidParams("equispaced_mask: offset out of range [0, r)");

  SamplingMask m;
  m.kind = MaskKind::Equispaced;
  m.columns.assign(width, 0);
  m.acs_width = l;
  m.accel_r = r;
  m.lines_l = l;
  m.offset = offset;

  const long start = (width - l) / 2;
  for (long c = start; c < start + l; ++c) m.columns[c] = 1;
  for (long c = 0; c < width; ++c)
    if (c % r == offset) m.columns[c] = 1;

  if (m.sampled_count() == 0) throw InvalidParams("equispaced_mask: empty mask");
  return m;
}

// Centered ACS block of round(f*W) lines; remaining lines kept independently
// with probability p = (W/a - f*W) / (W - f*W), so the expected overall
// acceleration equals a.
inline SamplingMask random_mask(long width, double a, double f, std::uint64_t seed) {
  if (width < 1) throw InvalidParams("random_mask: width must be >= 1");
  if (a <= 1.0) throw InvalidParams("random_mask: acceleration a must be > 1");
  if (f <= 0.0 || f >= 1.0) throw InvalidParams("random_mask: ACS fraction f must be in (0, 1)");
  const double acs_cols = f * double(width);
  if (double(width) / a < acs_cols)
    throw InvalidParams("random_mask: infeasible, W/a < f*W (ACS alone exceeds the budget)");

  SamplingMask m;
  m.kind = MaskKind::Random;
  m.columns.assign(width, 0);
  m.acs_width = static_cast<int>(std::lround(acs_cols));
  m.accel_a = a;
  m.frac_f = f;
  m.seed = seed;

  const long start = (width - m.acs_width) / 2;
  for (long c = start; c < start + m.acs_width; ++c) m.columns[c] = 1;

  double p = (double(width) / a - acs_cols) / (double(width) - acs_cols);
  p = std::clamp(p, 0.0, 1.0);

  Rng rng(seed);
  for (long c = 0; c < width; ++c) {
    if (c >= start && c < start + m.acs_width) continue;
    if (rng.uniform() < p) m.columns[c] = 1;
  }

  if (m.sampled_count() == 0) throw InvalidParams("random_mask: empty mask");
  return m;
}

inline SamplingMask full_mask(long width, int declared_acs = -1) {
  if (width < 1) throw InvalidParams("full_mask: width must be >= 1");
  SamplingMask m;
  m.kind = MaskKind::Full;
  m.columns.assign(width, 1);
  m.acs_width = declared_acs < 0 ? static_cast<int>(width) : declared_acs;
  return m;
}

// M_center: keep only the contiguous centered ACS block.
inline SamplingMask center_mask(const SamplingMask& m) {
  if (m.acs_width < 0 || m.acs_width > m.width())
    throw InvalidInput("center_mask: mask carries no valid ACS metadata");
  SamplingMask out = m;
  std::fill(out.columns.begin(), out.columns.end(), std::uint8_t(0));
  const long start = m.acs_start();
  for (long c = start; c < start + m.acs_width; ++c) out.columns[c] = 1;
  return out;
}

inline MultiCoilKspace apply_mask(const MultiCoilKspace& k, const SamplingMask& m) {
  if (k.cols() != m.width())
    throw InvalidInput("apply_mask: k-space width does not match mask width");
  MultiCoilKspace out = k;
  for (long i = 0; i < k.n(); ++i)
    for (long r = 0; r < k.rows(); ++r)
      for (long c = 0; c < k.cols(); ++c)
        if (!m.columns[c]) out(i, r, c) = 0.0;
  return out;
}

inline CxImage apply_mask(const CxImage& k, const SamplingMask& m) {
  if (k.cols() != m.width())
    throw InvalidInput("apply_mask: k-space width does not match mask width");
  CxImage out = k;
  for (long r = 0; r < k.rows(); ++r)
    for (long c = 0; c < k.cols(); ++c)
      if (!m.columns[c]) out(r, c) = 0.0;
  return out;
}

namespace detail {

inline std::vector<std::pair<std::string, std::string>> parse_kv(const std::string& s) {
  std::vector<std::pair<std::string, std::string>> kv;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == item.size())
      throw InvalidParams("mask spec: expected key=value, got '" + item + "'");
    kv.emplace_back(item.substr(0, eq), item.substr(eq + 1));
  }
  return kv;
}

}  // namespace detail

// Parse a mask spec string like "equispaced:r=4,l=30,offset=0",
// "random:a=4,f=0.08,seed=42" or "full". The width comes from the data.
struct MaskSpec {
  MaskKind kind = MaskKind::Full;
  int r = 4, l = 0, offset = 0;
  double a = 4.0, f = 0.08;
  std::uint64_t seed = 0;
  int full_acs = -1;

  SamplingMask make(long width) const {
    switch (kind) {
      case MaskKind::Equispaced: return equispaced_mask(width, r, l, offset);
      case MaskKind::Random: return random_mask(width, a, f, seed);
      case MaskKind::Full: return full_mask(width, full_acs);
    }
    throw InvalidParams("mask spec: unknown kind");
  }

  // Same pattern family, different random seed (equispaced/full unchanged).
  SamplingMask make(long width, std::uint64_t derived_seed) const {
    if (kind != MaskKind::Random) return make(width);
    return random_mask(width, a, f, derived_seed);
  }
};

inline MaskSpec parse_mask_spec(const std::string& spec) {
  MaskSpec out;
  const auto colon = spec.find(':');
  const std::string kind = spec.substr(0, colon);
  const std::string rest = colon == std::string::npos ? "" : spec.substr(colon + 1);

  auto to_int = [&](const std::string& v, const char* what) {
    try {
      return std::stoll(v);
    } catch (...) {
      throw InvalidParams(std::string("mask spec: bad ") + what + " value '" + v + "'");
    }
  };
  auto to_double = [&](const std::string& v, const char* what) {
    try {
      return std::stod(v);
    } catch (...) {
      throw InvalidParams(std::string("mask spec: bad ") + what + " value '" + v + "'");
    }
  };

  if (kind == "equispaced") {
    out.kind = MaskKind::Equispaced;
    bool have_r = false, have_l = false;
    for (const auto& [k, v] : detail::parse_kv(rest)) {
      if (k == "r") { out.r = int(to_int(v, "r")); have_r = true; }
      else if (k == "l") { out.l = int(to_int(v, "l")); have_l = true; }
      else if (k == "offset") out.offset = int(to_int(v, "offset"));
      else throw InvalidParams("mask spec: unknown key '" + k + "' for equispaced mask");
    }
    if (!have_r || !have_l)
      throw InvalidParams("mask spec: equispaced mask requires r= and l=");
  } else if (kind == "random") {
    out.kind = MaskKind::Random;
    bool have_a = false, have_f = false;
    for (const auto& [k, v] : detail::parse_kv(rest)) {
      if (k == "a") { out.a = to_double(v, "a"); have_a = true; }
      else if (k == "f") { out.f = to_double(v, "f"); have_f = true; }
      else if (k == "seed") out.seed = std::uint64_t(to_int(v, "seed"));
      else throw InvalidParams("mask spec: unknown key '" + k + "' for random mask");
    }
    if (!have_a || !have_f)
      throw InvalidParams("mask spec: random mask requires a= and f=");
  } else if (kind == "full") {
    out.kind = MaskKind::Full;
    if (!rest.empty()) {
      for (const auto& [k, v] : detail::parse_kv(rest)) {
        if (k == "l") out.full_acs = int(to_int(v, "l"));
        else throw InvalidParams("mask spec: unknown key '" + k + "' for full mask");
      }
    }
  } else {
    throw InvalidParams("mask spec: unknown kind '" + kind +
                        "' (expected equispaced, random or full)");
  }
  return out;
}

}  // namespace varnet
