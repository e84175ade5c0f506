#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace usf {

// Bad inputs (shapes, labels, malformed files, option values). CLI maps
// these to exit code 1; anything else that escapes maps to 2.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

class RuntimeFailure : public std::runtime_error {
 public:
  explicit RuntimeFailure(const std::string& msg) : std::runtime_error(msg) {}
};

inline constexpr uint64_t kSplitMixGamma = 0x9e3779b97f4a7c15ull;

inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += kSplitMixGamma);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Named seed derivation: every component draws its stream from
// (parent seed, label), so any stage replays independently.
inline uint64_t derive_seed(uint64_t parent, const std::string& label) {
  uint64_t state = parent ^ fnv1a64(label);
  return splitmix64(state);
}

inline uint64_t derive_seed(uint64_t parent, uint64_t index) {
  uint64_t state = parent ^ (index * 0xd1342543de82ef95ull + 0x2545f4914f6cdd1dull);
  return splitmix64(state);
}

}  // namespace usf
