#pragma once

#include <cstddef>
#include <exception>
#include <mutex>

namespace hwfp {

// Every parallel kernel keeps a serial twin; both must produce identical
// results because each index owns its own RNG stream.
enum class Exec { Serial, Parallel };

template <class F>
void for_each_index(std::size_t n, Exec exec, F&& body) {
  if (exec == Exec::Serial) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::exception_ptr first;
  std::mutex mu;
  const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic)
  for (long long i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      std::lock_guard lock(mu);
      if (!first) first = std::current_exception();
    }
  }
  if (first) std::rethrow_exception(first);
}

template <class Pred>
std::size_t count_trials(std::size_t n, Exec exec, Pred&& pred) {
  std::size_t hits = 0;
  if (exec == Exec::Serial) {
    for (std::size_t i = 0; i < n; ++i) hits += pred(i) ? 1 : 0;
    return hits;
  }
  std::exception_ptr first;
  std::mutex mu;
  const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic) reduction(+ : hits)
  for (long long i = 0; i < count; ++i) {
    try {
      hits += pred(static_cast<std::size_t>(i)) ? 1 : 0;
    } catch (...) {
      std::lock_guard lock(mu);
      if (!first) first = std::current_exception();
    }
  }
  if (first) std::rethrow_exception(first);
  return hits;
}

}  // namespace hwfp
