#pragma once

#include <cstdint>

namespace beamscope {

// Running tally of complex multiplications, incremented at the operation
// sites inside the estimators. A dense matrix-vector product of an MxN
// matrix counts as M*N; real-by-complex and divisions count as one each.
struct MultiplyCounter {
  std::int64_t count = 0;
  void add(std::int64_t n) { count += n; }
};

inline void count_ops(MultiplyCounter* c, std::int64_t n) {
  if (c != nullptr) c->add(n);
}

}  // namespace beamscope
