#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace mtgrl {

using Rng = std::mt19937_64;

/// Independent generator keyed by a tuple of integers, e.g.
/// (global seed, task id, step id). Same key, same stream.
inline Rng make_stream(std::initializer_list<std::uint64_t> key) {
  std::vector<std::uint32_t> words;
  words.reserve(key.size() * 2 + 1);
  words.push_back(0x6d74u);
  for (std::uint64_t k : key) {
    words.push_back(static_cast<std::uint32_t>(k & 0xffffffffu));
    words.push_back(static_cast<std::uint32_t>(k >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

/// Stream salts that keep derived generators apart.
namespace stream {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kTask = 2;
inline constexpr std::uint64_t kSplit = 3;
inline constexpr std::uint64_t kProbe = 4;
inline constexpr std::uint64_t kPartition = 5;
}  // namespace stream

}  // namespace mtgrl
