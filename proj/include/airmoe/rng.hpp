// rng.hpp - counter-based random streams
//
// Every logical noise site owns its own stream, derived from (seed, stream_id).
// Draw i of a stream is a pure function of (seed, stream_id, i), so sequential
// and sliced/parallel execution produce bitwise-identical noise as long as each
// worker derives the same per-site streams. A stream must not be shared across
// concurrent callers.

#pragma once

#include <cstdint>

namespace airmoe {

class RngStream {
public:
    explicit RngStream(std::uint64_t seed, std::uint64_t stream_id = 0);

    // Child stream with an independent counter. Deriving the same substream id
    // twice yields the same child.
    RngStream derive(std::uint64_t substream) const;

    std::uint64_t next_u64();

    // Uniform on [0, 1), 53-bit resolution.
    double next_uniform();

    // Standard normal via Box-Muller; consumes two counter slots per value so
    // the draw-index -> counter mapping stays fixed.
    double next_gaussian();

    // Uniform integer on [0, n), n >= 1.
    int next_index(int n);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream_id() const { return stream_id_; }

private:
    RngStream() = default;

    std::uint64_t word(std::uint64_t counter) const;

    std::uint64_t seed_ = 0;
    std::uint64_t stream_id_ = 0;
    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
};

}  // namespace airmoe
