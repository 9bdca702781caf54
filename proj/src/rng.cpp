#include "airmoe/rng.hpp"

#include <cmath>
#include <numbers>

namespace airmoe {
namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

// murmur3 fmix64: bijective avalanche mixer.
std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 33;
    z *= 0xFF51AFD7ED558CCDULL;
    z ^= z >> 33;
    z *= 0xC4CEB9FE1A85EC53ULL;
    z ^= z >> 33;
    return z;
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id) {
    key_ = mix64(mix64(seed + kGolden) ^ (stream_id + 0xD1B54A32D192ED03ULL));
}

RngStream RngStream::derive(std::uint64_t substream) const {
    RngStream child;
    child.seed_ = seed_;
    child.stream_id_ = substream;
    child.key_ = mix64(key_ ^ mix64(substream + kGolden));
    child.counter_ = 0;
    return child;
}

std::uint64_t RngStream::word(std::uint64_t counter) const {
    // splitmix64 output function with the state jumped to key + counter*gamma.
    return mix64(key_ + (counter + 1) * kGolden);
}

std::uint64_t RngStream::next_u64() { return word(counter_++); }

double RngStream::next_uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::next_gaussian() {
    const std::uint64_t a = word(counter_);
    const std::uint64_t b = word(counter_ + 1);
    counter_ += 2;
    // u1 in (0, 1] keeps the log finite.
    const double u1 = (static_cast<double>(a >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = static_cast<double>(b >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

int RngStream::next_index(int n) {
    const auto x = static_cast<unsigned __int128>(next_u64());
    return static_cast<int>((x * static_cast<unsigned __int128>(n)) >> 64);
}

}  // namespace airmoe
