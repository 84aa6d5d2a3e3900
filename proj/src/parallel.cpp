#include "nlpt/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <thread>

namespace nlpt {

namespace {
std::atomic<unsigned> g_threads{1};

unsigned resolved_threads() {
  unsigned t = g_threads.load();
  if (t == 0) t = std::max(1u, std::thread::hardware_concurrency());
  return t;
}

template <class Fn>
void run_chunks(std::size_t chunks, Fn&& fn) {
  const unsigned workers = std::min<std::size_t>(resolved_threads(), chunks);
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) fn(c);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t c = next++; c < chunks; c = next++) fn(c);
    });
  }
  for (auto& t : pool) t.join();
}
}  // namespace

void set_thread_count(unsigned count) { g_threads.store(count); }
unsigned thread_count() { return resolved_threads(); }

void parallel_for(std::size_t size, const std::function<void(std::size_t, std::size_t)>& body) {
  const std::size_t chunks = (size + kChunk - 1) / kChunk;
  run_chunks(chunks, [&](std::size_t c) { body(c * kChunk, std::min(size, (c + 1) * kChunk)); });
}

double chunk_sum(std::size_t size, const std::function<double(std::size_t, std::size_t)>& body) {
  const std::size_t chunks = (size + kChunk - 1) / kChunk;
  std::vector<double> partial(chunks, 0.0);
  run_chunks(chunks, [&](std::size_t c) { partial[c] = body(c * kChunk, std::min(size, (c + 1) * kChunk)); });
  double total = 0.0;
  for (double v : partial) total += v;
  return total;
}

}  // namespace nlpt
