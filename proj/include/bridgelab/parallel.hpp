// Copyright (c) 2026, BridgeLab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Coarse-grained parallelism over independent work units (sweep cells, seed
// replicas, probes). Every unit must own its RNG substream and output slot, so
// results never depend on the thread count.

#pragma once

#include <cstddef>
#include <functional>

namespace bridgelab {

// Worker count from BRIDGELAB_THREADS: unset or 0 means hardware concurrency,
// 1 is the single-threaded reference mode.
std::size_t configured_threads();

// Calls fn(i) for i in [0, n). Exceptions from any unit are rethrown (the one
// with the lowest index wins) after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, std::size_t threads = 0);

}  // namespace bridgelab
