#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <thread>
#include <vector>

namespace hustat {

using Rng = std::mt19937_64;

// SplitMix64 finalizer (Steele, Lea, Flood 2014).
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed of the stream `index` inside the family `stream` of a run seeded with
/// `base_seed`. Streams used by the harness:
///   0 = replication paths, 1 = reference Brownian paths, 2 = coupling draws,
///   3 = calibration replications.
constexpr std::uint64_t derive_seed(std::uint64_t base_seed, std::uint64_t stream,
                                    std::uint64_t index) noexcept {
  return splitmix64(splitmix64(splitmix64(base_seed) ^ stream) + index);
}

inline Rng derive_rng(std::uint64_t base_seed, std::uint64_t stream, std::uint64_t index) {
  return Rng(derive_seed(base_seed, stream, index));
}

/// Uniform on [0,1) with 53 random bits; identical on every platform.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Inverse-CDF draw from a finite distribution given by `weights` (need not be
/// normalized, must have positive total).
inline int sample_categorical(std::span<const double> weights, Rng& rng) {
  double total = 0.0;
  for (double w : weights) total += w;
  const double target = uniform01(rng) * total;
  double acc = 0.0;
  int last_positive = -1;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    acc += weights[i];
    last_positive = static_cast<int>(i);
    if (target < acc) return last_positive;
  }
  if (last_positive < 0) throw std::invalid_argument("sample_categorical: no positive weight");
  return last_positive;
}

/// Runs `fn(i)` for i in [0, count) on up to `threads` workers. Each index is
/// processed exactly once; results must be written to per-index slots.
template <class Fn>
void parallel_for(std::size_t count, unsigned threads, Fn&& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(count, 1)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = next++; i < count; i = next++) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
        next = count;
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace hustat
