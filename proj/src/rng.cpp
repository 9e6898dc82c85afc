#include "w2s/rng.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Core>

#include "w2s/errors.hpp"

namespace w2s {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;
constexpr std::size_t kWordBlock = 256;
constexpr Eigen::Index kPolarPairs = 256;

}  // namespace

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view role, std::uint64_t index) {
  return mix64(mix64(master ^ fnv1a64(role)) + (index + 1) * kGolden);
}

Philox4x32::Philox4x32(std::uint64_t key, std::uint64_t substream)
    : key_{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)},
      substream_(substream) {}

Philox4x32::Block Philox4x32::bijection(Block c, Key k) {
  for (int r = 0; r < 10; ++r) {
    const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * c[0];
    const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * c[2];
    c = {static_cast<std::uint32_t>(p1 >> 32) ^ c[1] ^ k[0], static_cast<std::uint32_t>(p1),
         static_cast<std::uint32_t>(p0 >> 32) ^ c[3] ^ k[1], static_cast<std::uint32_t>(p0)};
    k[0] += 0x9E3779B9u;
    k[1] += 0xBB67AE85u;
  }
  return c;
}

void Philox4x32::fill(std::uint64_t* out, std::size_t n) {
  const auto s0 = static_cast<std::uint32_t>(substream_);
  const auto s1 = static_cast<std::uint32_t>(substream_ >> 32);
  std::size_t i = 0;
  for (; i + 1 < n; i += 2) {
    const Block b = bijection({static_cast<std::uint32_t>(block_),
                               static_cast<std::uint32_t>(block_ >> 32), s0, s1},
                              key_);
    ++block_;
    out[i] = (std::uint64_t{b[1]} << 32) | b[0];
    out[i + 1] = (std::uint64_t{b[3]} << 32) | b[2];
  }
  if (i < n) {
    const Block b = bijection({static_cast<std::uint32_t>(block_),
                               static_cast<std::uint32_t>(block_ >> 32), s0, s1},
                              key_);
    ++block_;
    out[i] = (std::uint64_t{b[1]} << 32) | b[0];
  }
}

RandomStream::RandomStream(std::uint64_t seed, std::uint64_t substream)
    : gen_(seed, substream) {}

void RandomStream::refill_words() {
  words_.resize(kWordBlock);
  gen_.fill(words_.data(), kWordBlock);
  word_pos_ = 0;
}

std::uint64_t RandomStream::next_u64() {
  if (word_pos_ >= words_.size()) refill_words();
  return words_[word_pos_++];
}

double RandomStream::uniform() {
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

void RandomStream::fill_uniform(double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = uniform();
}

std::uint64_t RandomStream::below(std::uint64_t n) {
  if (n == 0) throw UsageError("below: empty range");
  // Lemire's nearly divisionless method.
  unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
  auto low = static_cast<std::uint64_t>(m);
  if (low < n) {
    const std::uint64_t threshold = (0 - n) % n;
    while (low < threshold) {
      m = static_cast<unsigned __int128>(next_u64()) * n;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

// Marsaglia polar method over a block of candidate pairs.
void RandomStream::refill_normals() {
  std::uint64_t raw[2 * kPolarPairs];
  Eigen::ArrayXd v1(kPolarPairs), v2(kPolarPairs);
  normals_.resize(2 * kPolarPairs);
  std::size_t got = 0;
  while (got == 0) {
    gen_.fill(raw, 2 * kPolarPairs);
    for (Eigen::Index i = 0; i < kPolarPairs; ++i) {
      v1(i) = (static_cast<double>(static_cast<std::int64_t>(raw[2 * i]) >> 11) + 0.5) * 0x1.0p-52;
      v2(i) = (static_cast<double>(static_cast<std::int64_t>(raw[2 * i + 1]) >> 11) + 0.5) *
              0x1.0p-52;
    }
    const Eigen::ArrayXd s = v1.square() + v2.square();
    const Eigen::ArrayXd safe = (s < 1.0).select(s, 0.5);
    const Eigen::ArrayXd f = (-2.0 * safe.log() / safe).sqrt();
    for (Eigen::Index i = 0; i < kPolarPairs; ++i) {
      normals_[got] = v1(i) * f(i);
      normals_[got + 1] = v2(i) * f(i);
      got += s(i) < 1.0 ? 2 : 0;
    }
  }
  normals_.resize(got);
  normal_pos_ = 0;
}

double RandomStream::normal() {
  if (normal_pos_ >= normals_.size()) refill_normals();
  return normals_[normal_pos_++];
}

void RandomStream::fill_normal(double* out, std::size_t n) {
  std::size_t i = 0;
  while (i < n) {
    if (normal_pos_ >= normals_.size()) refill_normals();
    const std::size_t take = std::min(n - i, normals_.size() - normal_pos_);
    std::copy_n(normals_.data() + normal_pos_, take, out + i);
    normal_pos_ += take;
    i += take;
  }
}

}  // namespace w2s
