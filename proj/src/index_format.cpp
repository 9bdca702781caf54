#include "airmoe/index_format.hpp"

#include <zlib.h>

#include <bit>
#include <cstddef>
#include <cstdio>
#include <cstring>

#include "airmoe/errors.hpp"

namespace airmoe {
namespace {

constexpr char kMagic[4] = {'A', 'I', 'R', 'X'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

void put_f32(std::vector<std::uint8_t>& out, float v) {
    put_u32(out, std::bit_cast<std::uint32_t>(v));
}

struct Reader {
    const std::vector<std::uint8_t>& bytes;
    std::size_t pos = 0;

    std::uint8_t u8() {
        if (pos + 1 > bytes.size()) throw FormatError("index file truncated");
        return bytes[pos++];
    }
    std::uint32_t u32() {
        if (pos + 4 > bytes.size()) throw FormatError("index file truncated");
        std::uint32_t v = static_cast<std::uint32_t>(bytes[pos]) |
                          (static_cast<std::uint32_t>(bytes[pos + 1]) << 8) |
                          (static_cast<std::uint32_t>(bytes[pos + 2]) << 16) |
                          (static_cast<std::uint32_t>(bytes[pos + 3]) << 24);
        pos += 4;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
};

std::uint32_t checksum(const std::uint8_t* data, std::size_t n) {
    return static_cast<std::uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(n)));
}

}  // namespace

IndexFile capture_index(const CodebookState& cb, const ExpertBank& bank,
                        const ShortlistCache& cache) {
    if (cb.dim != bank.dim) throw InvalidInputError("capture_index: dimension mismatch");
    if (cache.num_codewords != cb.size) {
        throw InvalidInputError("capture_index: codebook/cache size mismatch");
    }
    if (!cache.valid) throw InvalidInputError("capture_index: cache is invalid");

    IndexFile f;
    f.version = kIndexVersion;
    f.dim = static_cast<std::uint32_t>(cb.dim);
    f.codewords_n = static_cast<std::uint32_t>(cb.size);
    f.experts_n = static_cast<std::uint32_t>(bank.num_experts);
    f.shortlist_n = static_cast<std::uint32_t>(cache.shortlist_size);
    f.flags = 0;
    if (bank.normalize_centroids) f.flags |= kFlagNormalizeCentroids;
    if (cb.euclidean_mode) f.flags |= kFlagEuclideanMode;

    f.codewords.assign(cb.codewords.data.begin(), cb.codewords.data.end());
    f.ema_counts.assign(cb.ema_counts.begin(), cb.ema_counts.end());
    f.ema_sums.assign(cb.ema_sums.data.begin(), cb.ema_sums.data.end());
    f.centroids.assign(bank.centroids.data.begin(), bank.centroids.data.end());
    f.shortlists.reserve(cache.lists.size());
    for (int idx : cache.lists) f.shortlists.push_back(static_cast<std::uint32_t>(idx));
    return f;
}

void restore_index(const IndexFile& file, double decay, double dead_threshold,
                   CodebookState* cb, ExpertBank* bank, ShortlistCache* cache) {
    const int d = static_cast<int>(file.dim);
    const int G = static_cast<int>(file.codewords_n);
    const int E = static_cast<int>(file.experts_n);
    const int M = static_cast<int>(file.shortlist_n);

    cb->dim = d;
    cb->size = G;
    cb->codewords = Matrix(G, d);
    std::copy(file.codewords.begin(), file.codewords.end(), cb->codewords.data.begin());
    cb->ema_counts.assign(file.ema_counts.begin(), file.ema_counts.end());
    cb->ema_sums = Matrix(G, d);
    std::copy(file.ema_sums.begin(), file.ema_sums.end(), cb->ema_sums.data.begin());
    cb->decay = decay;
    cb->dead_threshold = dead_threshold;
    cb->frozen = false;
    cb->euclidean_mode = file.euclidean_mode();

    bank->dim = d;
    bank->num_experts = E;
    bank->centroids = Matrix(E, d);
    std::copy(file.centroids.begin(), file.centroids.end(), bank->centroids.data.begin());
    // FFN parameters are not part of the index; routing does not need them.
    bank->ffn_in = Matrix(E, d);
    bank->ffn_out = Matrix(E, d);
    bank->normalize_centroids = file.normalize_centroids();

    cache->num_codewords = G;
    cache->shortlist_size = M;
    cache->lists.assign(file.shortlists.begin(), file.shortlists.end());
    cache->valid = true;
    cache->built_at_step = -1;
    cache->built_sigma = 0.0;  // persisted indexes are built noise-free
    cache->rebuild_count = 0;
}

std::vector<std::uint8_t> serialize_index(const IndexFile& file) {
    const std::size_t Gd = static_cast<std::size_t>(file.codewords_n) * file.dim;
    const std::size_t Ed = static_cast<std::size_t>(file.experts_n) * file.dim;
    const std::size_t GM = static_cast<std::size_t>(file.codewords_n) * file.shortlist_n;
    if (file.codewords.size() != Gd || file.ema_counts.size() != file.codewords_n ||
        file.ema_sums.size() != Gd || file.centroids.size() != Ed ||
        file.shortlists.size() != GM) {
        throw InvalidInputError("serialize_index: payload shape mismatch");
    }

    std::vector<std::uint8_t> out;
    out.reserve(29 + 4 * (2 * Gd + file.codewords_n + Ed + GM) + 4);
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u32(out, file.version);
    put_u32(out, file.dim);
    put_u32(out, file.codewords_n);
    put_u32(out, file.experts_n);
    put_u32(out, file.shortlist_n);
    out.push_back(file.flags);
    for (float v : file.codewords) put_f32(out, v);
    for (float v : file.ema_counts) put_f32(out, v);
    for (float v : file.ema_sums) put_f32(out, v);
    for (float v : file.centroids) put_f32(out, v);
    for (std::uint32_t v : file.shortlists) put_u32(out, v);
    put_u32(out, checksum(out.data(), out.size()));
    return out;
}

IndexFile deserialize_index(const std::vector<std::uint8_t>& bytes) {
    Reader r{bytes};
    char magic[4];
    for (char& c : magic) c = static_cast<char>(r.u8());
    if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("bad magic, not an index file");

    IndexFile f;
    f.version = r.u32();
    if (f.version != kIndexVersion) {
        throw VersionError("unsupported index version " + std::to_string(f.version) +
                           " (expected " + std::to_string(kIndexVersion) + ")");
    }
    f.dim = r.u32();
    f.codewords_n = r.u32();
    f.experts_n = r.u32();
    f.shortlist_n = r.u32();
    f.flags = r.u8();
    if (f.dim == 0 || f.codewords_n == 0 || f.experts_n == 0) {
        throw FormatError("index file header has zero-sized field");
    }

    const std::size_t Gd = static_cast<std::size_t>(f.codewords_n) * f.dim;
    const std::size_t Ed = static_cast<std::size_t>(f.experts_n) * f.dim;
    const std::size_t GM = static_cast<std::size_t>(f.codewords_n) * f.shortlist_n;
    const std::size_t expected = r.pos + 4 * (2 * Gd + f.codewords_n + Ed + GM) + 4;
    if (bytes.size() < expected) throw FormatError("index file truncated");
    if (bytes.size() > expected) throw FormatError("index file has trailing bytes");

    const std::uint32_t stored = static_cast<std::uint32_t>(bytes[expected - 4]) |
                                 (static_cast<std::uint32_t>(bytes[expected - 3]) << 8) |
                                 (static_cast<std::uint32_t>(bytes[expected - 2]) << 16) |
                                 (static_cast<std::uint32_t>(bytes[expected - 1]) << 24);
    if (stored != checksum(bytes.data(), expected - 4)) {
        throw CorruptionError("index checksum mismatch");
    }

    f.codewords.resize(Gd);
    for (float& v : f.codewords) v = r.f32();
    f.ema_counts.resize(f.codewords_n);
    for (float& v : f.ema_counts) v = r.f32();
    f.ema_sums.resize(Gd);
    for (float& v : f.ema_sums) v = r.f32();
    f.centroids.resize(Ed);
    for (float& v : f.centroids) v = r.f32();
    f.shortlists.resize(GM);
    for (std::uint32_t& v : f.shortlists) {
        v = r.u32();
        if (v >= f.experts_n) throw FormatError("shortlist index out of range");
    }
    return f;
}

void save_index(const IndexFile& file, const std::string& path) {
    const std::vector<std::uint8_t> bytes = serialize_index(file);
    std::FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw InvalidInputError("cannot open '" + path + "' for writing");
    const std::size_t written = std::fwrite(bytes.data(), 1, bytes.size(), fp);
    const int closed = std::fclose(fp);
    if (written != bytes.size() || closed != 0) {
        throw InvalidInputError("short write to '" + path + "'");
    }
}

IndexFile load_index(const std::string& path) {
    std::FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw InvalidInputError("cannot open '" + path + "' for reading");
    std::vector<std::uint8_t> bytes;
    std::uint8_t buf[65536];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof(buf), fp)) > 0) {
        bytes.insert(bytes.end(), buf, buf + n);
    }
    std::fclose(fp);
    return deserialize_index(bytes);
}

}  // namespace airmoe
