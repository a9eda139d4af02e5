#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace freespec {

// Philox 4x64 with 10 rounds: counter-based, so any block is computable
// directly from (key, counter) without sequencing through earlier draws.
struct Philox4x64 {
  static constexpr uint64_t kM0 = 0xD2E7470EE14C6C93ULL;
  static constexpr uint64_t kM1 = 0xCA5A826395121157ULL;
  static constexpr uint64_t kW0 = 0x9E3779B97F4A7C15ULL;
  static constexpr uint64_t kW1 = 0xBB67AE8584CAA73BULL;

  static std::array<uint64_t, 4> block(const std::array<uint64_t, 2>& key,
                                       const std::array<uint64_t, 4>& counter);
};

// One independent substream of the experiment-wide generator.  The key is a
// hash of (master_seed, id path); the 256-bit counter space is split into a
// sequential lane (uniform/gaussian draws in order) and an indexed lane
// (gaussian_at, random access by element index).
class RngStream {
 public:
  static constexpr const char* kAlgorithm = "philox4x64-10";

  RngStream(uint64_t master_seed, std::initializer_list<uint64_t> ids);
  RngStream(uint64_t master_seed, const std::vector<uint64_t>& ids);

  uint64_t next_u64();
  double uniform();   // open interval (0,1), 53-bit resolution
  double gaussian();  // standard normal, Box-Muller over sequential uniforms

  // Standard normal addressed by index; independent of sequential state.
  double gaussian_at(uint64_t index) const;

  const std::array<uint64_t, 2>& key() const { return key_; }

 private:
  void derive_key(uint64_t master_seed, const uint64_t* ids, size_t n);

  std::array<uint64_t, 2> key_{};
  uint64_t block_index_ = 0;
  std::array<uint64_t, 4> buf_{};
  int buf_pos_ = 4;
  double cached_gaussian_ = 0.0;
  bool has_cached_gaussian_ = false;
};

}  // namespace freespec
