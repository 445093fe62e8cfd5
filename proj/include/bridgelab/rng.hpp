// Copyright (c) 2026, BridgeLab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Counter-based random streams (Philox4x32-10). A draw is a pure function of
// (seed, stream id, counter), so substreams can be handed to independent work
// units without the schedule affecting any result.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

namespace bridgelab {

// Stable 64-bit mixing used to derive stream ids from structured keys.
std::uint64_t mix64(std::uint64_t x) noexcept;
std::uint64_t mix64(std::uint64_t a, std::uint64_t b) noexcept;
std::uint64_t hash_string(std::string_view text) noexcept;

// One Philox4x32-10 block.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key) noexcept;

class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream_id, std::uint64_t counter = 0) noexcept
        : seed_(seed), stream_(stream_id), counter_(counter) {}

    // Child stream whose id is derived from this stream's id and `key`; it does
    // not consume draws from the parent.
    RngStream split(std::uint64_t key) const noexcept { return {seed_, mix64(stream_, key), 0}; }
    RngStream split(std::string_view key) const noexcept { return split(hash_string(key)); }

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream_id() const noexcept { return stream_; }
    std::uint64_t counter() const noexcept { return counter_; }

    std::uint32_t next_u32() noexcept;
    std::uint64_t next_u64() noexcept;

    // Uniform in [0, 1) with 53 random bits.
    double uniform() noexcept;
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
    // Uniform integer in [0, n); unbiased (Lemire's multiply-and-reject).
    std::uint64_t uniform_index(std::uint64_t n) noexcept;
    // Standard normal via Box-Muller; both outputs of a pair are used.
    double normal() noexcept;
    double normal(double mean, double stddev) noexcept { return mean + stddev * normal(); }
    // +1 or -1 with equal probability.
    double rademacher() noexcept { return (next_u32() & 1U) != 0U ? 1.0 : -1.0; }
    bool bernoulli(double p) noexcept { return uniform() < p; }

    template <typename It>
    void shuffle(It first, It last) noexcept {
        const auto n = static_cast<std::uint64_t>(last - first);
        for (std::uint64_t i = n; i > 1; --i) {
            const auto j = uniform_index(i);
            std::swap(first[i - 1], first[j]);
        }
    }

    std::vector<std::size_t> permutation(std::size_t n) noexcept;

private:
    void refill() noexcept;

    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t counter_;
    std::array<std::uint32_t, 4> block_{};
    int block_pos_ = 4;
    double spare_normal_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace bridgelab
