#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <cstdlib>
#include <random>
#include <string>
#include <thread>
#include <vector>

namespace certimap {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat36 = Eigen::Matrix<double, 3, 6>;

using Rng = std::mt19937_64;

// splitmix64, used to derive independent RNG streams from one root seed.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Named RNG streams. Every consumer of randomness draws from
// make_rng(root_seed, stream, index) so that runs are reproducible and
// streams never alias across subsystems.
enum class RngStream : std::uint64_t {
  kTrajectoryNoise = 1,
  kEvalVolume = 2,
  kOracle = 3,
  kTest = 4,
};

inline Rng make_rng(std::uint64_t root_seed, RngStream stream, std::uint64_t index = 0) {
  const std::uint64_t s =
      splitmix64(root_seed ^ splitmix64((static_cast<std::uint64_t>(stream) << 32) + index));
  return Rng(s);
}

inline int worker_count() {
  if (const char* env = std::getenv("CERTIMAP_THREADS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n > 0) return static_cast<int>(n);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Chunked parallel map over [0, n). The function receives (begin, end, chunk_id).
// Chunk boundaries depend only on n and the worker count, and per-chunk results
// must be written to disjoint slots, so results are identical for any thread
// schedule.
template <typename Fn>
void parallel_chunks(std::size_t n, Fn&& fn) {
  const int workers = worker_count();
  if (n == 0) return;
  if (workers <= 1 || n < 2048) {
    fn(std::size_t{0}, n, 0);
    return;
  }
  const std::size_t chunks = static_cast<std::size_t>(workers);
  const std::size_t step = (n + chunks - 1) / chunks;
  std::vector<std::thread> pool;
  pool.reserve(chunks);
  for (std::size_t c = 0; c < chunks; ++c) {
    const std::size_t b = c * step;
    if (b >= n) break;
    const std::size_t e = std::min(n, b + step);
    pool.emplace_back([&fn, b, e, c] { fn(b, e, c); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace certimap
