#pragma once

#include <cstddef>
#include <functional>

namespace colornorm {

/// Splits [begin, end) into at most `threads` contiguous chunks and runs
/// body(chunk_begin, chunk_end) on each, joining before returning. The
/// first exception thrown by any chunk is rethrown on the caller.
void parallel_for(std::size_t begin, std::size_t end, unsigned threads,
                  const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace colornorm
