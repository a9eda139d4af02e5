#include "freespec/rng.hpp"

#include <cmath>

namespace freespec {
namespace {

inline uint64_t mulhilo(uint64_t a, uint64_t b, uint64_t* hi) {
  __uint128_t p = static_cast<__uint128_t>(a) * b;
  *hi = static_cast<uint64_t>(p >> 64);
  return static_cast<uint64_t>(p);
}

inline void round_once(std::array<uint64_t, 4>& x, const std::array<uint64_t, 2>& k) {
  uint64_t hi0, hi1;
  uint64_t lo0 = mulhilo(Philox4x64::kM0, x[0], &hi0);
  uint64_t lo1 = mulhilo(Philox4x64::kM1, x[2], &hi1);
  x = {hi1 ^ x[1] ^ k[0], lo1, hi0 ^ x[3] ^ k[1], lo0};
}

// splitmix64 finalizer, used for key derivation only.
inline uint64_t mix64(uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr double kTwoPi = 6.283185307179586476925286766559;

inline double u64_to_open_unit(uint64_t x) {
  // (0,1): never 0, so log() in Box-Muller is safe.
  return (static_cast<double>(x >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace

std::array<uint64_t, 4> Philox4x64::block(const std::array<uint64_t, 2>& key,
                                          const std::array<uint64_t, 4>& counter) {
  std::array<uint64_t, 4> x = counter;
  std::array<uint64_t, 2> k = key;
  round_once(x, k);
  for (int r = 1; r < 10; ++r) {
    k[0] += kW0;
    k[1] += kW1;
    round_once(x, k);
  }
  return x;
}

RngStream::RngStream(uint64_t master_seed, std::initializer_list<uint64_t> ids) {
  derive_key(master_seed, ids.begin(), ids.size());
}

RngStream::RngStream(uint64_t master_seed, const std::vector<uint64_t>& ids) {
  derive_key(master_seed, ids.data(), ids.size());
}

void RngStream::derive_key(uint64_t master_seed, const uint64_t* ids, size_t n) {
  uint64_t s = mix64(master_seed + 0x9E3779B97F4A7C15ULL);
  for (size_t i = 0; i < n; ++i) {
    s = mix64(s ^ mix64(ids[i] + 0xBF58476D1CE4E5B9ULL));
  }
  key_[0] = s;
  key_[1] = mix64(s + 0x9E3779B97F4A7C15ULL);
}

uint64_t RngStream::next_u64() {
  if (buf_pos_ == 4) {
    // Sequential lane: counter = (block, 0, 0, 0).
    buf_ = Philox4x64::block(key_, {block_index_++, 0, 0, 0});
    buf_pos_ = 0;
  }
  return buf_[buf_pos_++];
}

double RngStream::uniform() { return u64_to_open_unit(next_u64()); }

double RngStream::gaussian() {
  if (has_cached_gaussian_) {
    has_cached_gaussian_ = false;
    return cached_gaussian_;
  }
  double u1 = uniform();
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  cached_gaussian_ = r * std::sin(kTwoPi * u2);
  has_cached_gaussian_ = true;
  return r * std::cos(kTwoPi * u2);
}

double RngStream::gaussian_at(uint64_t index) const {
  // Indexed lane: counter = (index, 0, 0, 1); one block per gaussian.
  std::array<uint64_t, 4> w = Philox4x64::block(key_, {index, 0, 0, 1});
  double u1 = u64_to_open_unit(w[0]);
  double u2 = u64_to_open_unit(w[1]);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

}  // namespace freespec
