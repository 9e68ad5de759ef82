#pragma once

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace stconv {

// Keeps large freed blocks on the heap. Training allocates and frees many
// multi-megabyte tape buffers per step; with glibc defaults each of them is
// a fresh mmap/munmap pair. Call once at program start.
inline void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace stconv
