#include "ratchet/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <string>

namespace ratchet {

unsigned resolve_threads(std::optional<unsigned> requested) {
  if (requested && *requested > 0) return *requested;
  if (const char* env = std::getenv("RATCHET_THREADS")) {
    try {
      const int v = std::stoi(env);
      if (v > 0) return static_cast<unsigned>(v);
    } catch (const std::exception&) {
      // fall through to the hardware default
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_chunks(std::size_t count, unsigned threads,
                     const std::function<void(std::size_t, std::size_t)>& fn) {
  if (count == 0) return;
  const std::size_t workers = std::clamp<std::size_t>(threads, 1, count);
  if (workers == 1) {
    fn(0, count);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t begin = w * count / workers;
      const std::size_t end = (w + 1) * count / workers;
      pool.emplace_back([&, w, begin, end] {
        try {
          fn(begin, end);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace ratchet
