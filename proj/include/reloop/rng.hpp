#pragma once

#include <cstdint>
#include <random>

namespace reloop {

// Every random draw in the library comes from std::mt19937_64 engines created
// by make_stream(). A stream is identified by (seed, stream index, substream)
// and its engine is seeded with a SplitMix64 mix of those three values, so
// stream r of seed s is the same no matter which thread creates it or in what
// order. Callers pick disjoint index spaces per purpose (replication number,
// tree number, ...).
using Engine = std::mt19937_64;

std::uint64_t splitmix64(std::uint64_t x);

Engine make_stream(std::uint64_t seed, std::uint64_t stream,
                   std::uint64_t substream = 0);

}  // namespace reloop
