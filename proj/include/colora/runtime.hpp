#pragma once

namespace colora {

/// Keeps large short-lived buffers in the heap instead of fresh mmap regions.
/// Idempotent.
void tune_allocator();

}  // namespace colora
