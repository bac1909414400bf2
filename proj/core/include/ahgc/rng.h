#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace ahgc {

// SplitMix64 finalizer; used to derive independent seeds.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash_name(std::string_view name) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Named substream of a master seed, optionally indexed (record id, epoch, ...).
// Every random consumer in the pipeline draws from its own substream so that
// stages can be run separately and still reproduce the full pipeline.
constexpr std::uint64_t substream_seed(std::uint64_t seed, std::string_view stream,
                                       std::uint64_t a = 0, std::uint64_t b = 0,
                                       std::uint64_t c = 0) noexcept {
  std::uint64_t h = mix64(seed ^ hash_name(stream));
  h = mix64(h ^ a);
  h = mix64(h ^ (b + 0x632be59bd9b4e019ULL));
  return mix64(h ^ (c + 0x2545f4914f6cdd1dULL));
}

using Rng = std::mt19937_64;

}  // namespace ahgc
