#pragma once

#include <cstddef>
#include <functional>

namespace latent_audit {

/// Worker count: the LATENT_AUDIT_THREADS environment variable when set to a
/// positive integer, otherwise the hardware concurrency (0 means auto).
std::size_t worker_count();

/// Runs body(begin, end) over contiguous chunks of [0, n). Each index is
/// visited exactly once; results must not depend on chunking.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body,
                  std::size_t min_chunk = 1);

}  // namespace latent_audit
