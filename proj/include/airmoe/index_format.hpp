// index_format.hpp - binary index persistence
//
// Single self-describing file holding codebook, expert centroids and the
// shortlist cache; they are only meaningful together. Layout (little-endian):
//   magic "AIRX" | version u32 (=1) | d, G, E, M u32 | flags u8
//   codewords G*d f32 | ema_counts G f32 | ema_sums G*d f32
//   centroids E*d f32 | shortlists G*M u32 | crc32 u32 over all prior bytes
// Flags: bit0 normalize_centroids, bit1 euclidean_mode.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "airmoe/codebook.hpp"
#include "airmoe/router.hpp"

namespace airmoe {

inline constexpr std::uint32_t kIndexVersion = 1;
inline constexpr std::uint8_t kFlagNormalizeCentroids = 1u << 0;
inline constexpr std::uint8_t kFlagEuclideanMode = 1u << 1;

struct IndexFile {
    std::uint32_t version = kIndexVersion;
    std::uint32_t dim = 0;        // d
    std::uint32_t codewords_n = 0;  // G
    std::uint32_t experts_n = 0;    // E
    std::uint32_t shortlist_n = 0;  // M
    std::uint8_t flags = kFlagNormalizeCentroids;

    std::vector<float> codewords;   // G*d row-major
    std::vector<float> ema_counts;  // G
    std::vector<float> ema_sums;    // G*d
    std::vector<float> centroids;   // E*d
    std::vector<std::uint32_t> shortlists;  // G*M, entries < E

    bool normalize_centroids() const { return flags & kFlagNormalizeCentroids; }
    bool euclidean_mode() const { return flags & kFlagEuclideanMode; }
};

// State <-> file conversion. Runtime doubles narrow to f32 on capture.
IndexFile capture_index(const CodebookState& cb, const ExpertBank& bank,
                        const ShortlistCache& cache);
void restore_index(const IndexFile& file, double decay, double dead_threshold,
                   CodebookState* cb, ExpertBank* bank, ShortlistCache* cache);

std::vector<std::uint8_t> serialize_index(const IndexFile& file);

// Throws FormatError (magic/truncation), VersionError, or CorruptionError
// (checksum); also FormatError when indices are out of range.
IndexFile deserialize_index(const std::vector<std::uint8_t>& bytes);

void save_index(const IndexFile& file, const std::string& path);
IndexFile load_index(const std::string& path);

}  // namespace airmoe
