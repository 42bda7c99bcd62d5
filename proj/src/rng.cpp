#include "resem/rng.hpp"

#include <cmath>

#include "resem/errors.hpp"

namespace resem {
namespace {

constexpr unsigned __int128 kPcgMult =
    (static_cast<unsigned __int128>(0x2360ed051fc65da4ULL) << 64) |
    0x4385df649fccf645ULL;

std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t rotr64(std::uint64_t v, unsigned rot) {
  return (v >> rot) | (v << ((64u - rot) & 63u));
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream) {
  // Mix seed and stream through splitmix64 so nearby values give unrelated
  // state/increment pairs; the increment selects the PCG stream.
  std::uint64_t s = seed;
  const std::uint64_t s0 = splitmix64(s);
  const std::uint64_t s1 = splitmix64(s);
  std::uint64_t t = stream ^ 0xda3e39cb94b95bdbULL;
  const std::uint64_t i0 = splitmix64(t);
  const std::uint64_t i1 = splitmix64(t);

  const unsigned __int128 initstate =
      (static_cast<unsigned __int128>(s0) << 64) | s1;
  const unsigned __int128 initseq =
      (static_cast<unsigned __int128>(i0) << 64) | i1;

  inc_ = (initseq << 1) | 1;
  state_ = 0;
  next_u64();
  state_ += initstate;
  next_u64();
}

std::uint64_t RngStream::next_u64() {
  state_ = state_ * kPcgMult + inc_;
  const std::uint64_t xored =
      static_cast<std::uint64_t>(state_ >> 64) ^ static_cast<std::uint64_t>(state_);
  const unsigned rot = static_cast<unsigned>(state_ >> 122);
  return rotr64(xored, rot);
}

double RngStream::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::next_gaussian() {
  if (has_cached_gaussian_) {
    has_cached_gaussian_ = false;
    return cached_gaussian_;
  }
  // u1 in (0,1] so the log is finite.
  const double u1 = 1.0 - next_double();
  const double u2 = next_double();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * M_PI * u2;
  cached_gaussian_ = r * std::sin(theta);
  has_cached_gaussian_ = true;
  return r * std::cos(theta);
}

std::uint64_t RngStream::next_below(std::uint64_t bound) {
  if (bound == 0) throw DomainError("RngStream::next_below: bound must be positive");
  // Lemire's multiply-shift rejection.
  std::uint64_t x = next_u64();
  unsigned __int128 m = static_cast<unsigned __int128>(x) * bound;
  std::uint64_t low = static_cast<std::uint64_t>(m);
  if (low < bound) {
    const std::uint64_t threshold = (0 - bound) % bound;
    while (low < threshold) {
      x = next_u64();
      m = static_cast<unsigned __int128>(x) * bound;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

}  // namespace resem
