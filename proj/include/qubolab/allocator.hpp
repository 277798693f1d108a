#pragma once

#ifdef __GLIBC__
#include <malloc.h>
#endif

namespace qubolab {

// Keep freed tensor buffers in the heap instead of handing them back to the kernel.
inline void tune_allocator() {
#ifdef __GLIBC__
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace qubolab
