#include "reloop/rng.hpp"

namespace reloop {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

Engine make_stream(std::uint64_t seed, std::uint64_t stream,
                   std::uint64_t substream) {
  const std::uint64_t a = splitmix64(seed);
  const std::uint64_t b = splitmix64(a ^ stream);
  const std::uint64_t c = splitmix64(b ^ splitmix64(substream + 0x5851F42D4C957F2DULL));
  return Engine(c);
}

}  // namespace reloop
