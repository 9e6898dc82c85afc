#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

namespace w2s {

// SplitMix64 output function (Stafford variant 13).
std::uint64_t mix64(std::uint64_t x);

std::uint64_t fnv1a64(std::string_view s);

// Stream key for one use of randomness:
//   mix64(mix64(master ^ fnv1a64(role)) + (index + 1) * 0x9E3779B97F4A7C15)
std::uint64_t derive_seed(std::uint64_t master, std::string_view role, std::uint64_t index = 0);

// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
// Counter words 0-1 hold the block index, words 2-3 the substream.
class Philox4x32 {
 public:
  using Block = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  Philox4x32(std::uint64_t key, std::uint64_t substream);

  static Block bijection(Block counter, Key key);

  // Writes n 64-bit words (two per block) and advances the block counter.
  void fill(std::uint64_t* out, std::size_t n);
  std::uint64_t block_index() const { return block_; }

 private:
  Key key_;
  std::uint64_t substream_;
  std::uint64_t block_ = 0;
};

// Uniform and standard normal draws from one Philox stream. Not shareable
// between threads; may be moved.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed, std::uint64_t substream = 0);

  std::uint64_t next_u64();
  double uniform();  // open interval (0, 1)
  void fill_uniform(double* out, std::size_t n);
  std::uint64_t below(std::uint64_t n);  // uniform on {0, ..., n-1}
  double normal();
  void fill_normal(double* out, std::size_t n);

  template <typename Derived>
  void fill_normal(Derived& dense) {
    fill_normal(dense.data(), static_cast<std::size_t>(dense.size()));
  }

 private:
  void refill_words();
  void refill_normals();

  Philox4x32 gen_;
  std::vector<std::uint64_t> words_;
  std::size_t word_pos_ = 0;
  std::vector<double> normals_;
  std::size_t normal_pos_ = 0;
};

}  // namespace w2s
