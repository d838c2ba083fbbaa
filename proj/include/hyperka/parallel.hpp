#ifndef HYPERKA_PARALLEL_HPP
#define HYPERKA_PARALLEL_HPP

#include <algorithm>
#include <cstdint>
#include <exception>
#include <thread>
#include <vector>

namespace hyperka {

/// Splits [0, n) into `chunks` contiguous ranges and calls
/// fn(chunk, begin, end) for each, one thread per chunk. Chunk boundaries
/// depend only on n and chunks, so per-chunk partial results reduced in
/// chunk order are deterministic.
template <typename Fn>
void parallel_chunks(std::int64_t n, int chunks, Fn &&fn) {
  chunks = std::max(1, chunks);
  auto bounds = [&](int c) { return n * c / chunks; };
  if (chunks == 1) {
    fn(0, std::int64_t{0}, n);
    return;
  }
  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(chunks));
  workers.reserve(static_cast<std::size_t>(chunks));
  for (int c = 0; c < chunks; ++c) {
    workers.emplace_back([&, c] {
      try {
        fn(c, bounds(c), bounds(c + 1));
      } catch (...) {
        errors[c] = std::current_exception();
      }
    });
  }
  for (auto &w : workers) w.join();
  for (auto &e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace hyperka

#endif  // HYPERKA_PARALLEL_HPP
