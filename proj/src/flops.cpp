#include "airmoe/flops.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "airmoe/errors.hpp"

namespace airmoe {
namespace {

void require_nonneg(std::int64_t v, const char* name) {
    if (v < 0) throw InvalidInputError(std::string("flops: ") + name + " must be >= 0");
}

}  // namespace

void FlopLedger::add(std::string label, double flops, bool matmul) {
    total += flops;
    if (matmul) matmul_total += flops;
    entries.push_back({std::move(label), flops, matmul});
}

double flops_pointwise(PointwiseKind kind, std::int64_t numel) {
    require_nonneg(numel, "numel");
    const double n = static_cast<double>(numel);
    switch (kind) {
        case PointwiseKind::Add:
        case PointwiseKind::Sub:
        case PointwiseKind::Mul:
        case PointwiseKind::Div:
        case PointwiseKind::Exp:
        case PointwiseKind::Log:
        case PointwiseKind::Sqrt:
        case PointwiseKind::Rsqrt:
            return n;
        case PointwiseKind::Sigmoid:
        case PointwiseKind::Silu:
            return 3.0 * n;
        case PointwiseKind::Gelu:
            return 6.0 * n;
        case PointwiseKind::Mean:
            return n + 1.0;
        case PointwiseKind::Sum:
        case PointwiseKind::VarMean:
            return 2.0 * n;
    }
    throw std::logic_error("flops_pointwise: unhandled kind");
}

double flops_softmax(std::int64_t numel, std::int64_t d_sm, bool backward) {
    require_nonneg(numel, "numel");
    if (d_sm < 1) throw InvalidInputError("flops: softmax dim must be >= 1");
    const double n = static_cast<double>(numel);
    if (backward) return 5.0 * n;
    return 2.0 * n + n / static_cast<double>(d_sm);
}

double flops_norm(NormKind kind, std::int64_t v_or_n, std::int64_t d_or_c,
                  bool has_weight, bool has_bias, bool backward) {
    require_nonneg(v_or_n, "rows");
    require_nonneg(d_or_c, "inner dim");
    const double v = static_cast<double>(v_or_n);
    const double d = static_cast<double>(d_or_c);
    switch (kind) {
        case NormKind::LayerNorm: {
            if (backward) return 8.0 * v * d;
            double per_row = 4.0 * d + d;
            if (has_weight) per_row += d;
            if (has_bias) per_row += d;
            return v * per_row;
        }
        case NormKind::RmsNorm: {
            if (backward) return 8.0 * v * d;
            double per_row = 4.0 * d;
            if (has_weight) per_row += d;
            return v * per_row;
        }
        case NormKind::BatchNorm: {
            // v is N (total elements), d is C (channels). No backward formula
            // exists for this convention; reject instead of guessing.
            if (backward) throw InvalidInputError("flops: batchnorm backward is not defined");
            double f = (2.0 * v + 2.0 * d) + 2.0 * v;
            if (has_weight && has_bias) f += 2.0 * v;
            return f;
        }
    }
    throw std::logic_error("flops_norm: unhandled kind");
}

double flops_attention(std::int64_t b, std::int64_t heads, std::int64_t s_q,
                       std::int64_t s_k, std::int64_t d) {
    require_nonneg(b, "batch");
    require_nonneg(heads, "heads");
    require_nonneg(s_q, "s_q");
    require_nonneg(s_k, "s_k");
    require_nonneg(d, "dim");
    const double bh = static_cast<double>(b) * static_cast<double>(heads);
    const double qk = static_cast<double>(s_q) * static_cast<double>(s_k);
    return 4.0 * bh * qk * static_cast<double>(d) + 2.0 * bh * qk;
}

double flops_index(IndexKind kind, std::int64_t batch, std::int64_t n,
                   std::int64_t k, std::int64_t affected) {
    require_nonneg(batch, "batch");
    require_nonneg(n, "n");
    require_nonneg(k, "k");
    require_nonneg(affected, "affected");
    switch (kind) {
        case IndexKind::TopK:
            return static_cast<double>(batch) * static_cast<double>(n) *
                   std::log2(static_cast<double>(k) + 1.0);
        case IndexKind::Gather:
            return static_cast<double>(affected);
    }
    throw std::logic_error("flops_index: unhandled kind");
}

FlopLedger router_flop_ledger(RouterKind router, const RouterFlopParams& p) {
    if (p.tokens < 0) throw InvalidConfigError("flops: S >= 0 required");
    if (p.experts < 1) throw InvalidConfigError("flops: E >= 1 required");
    if (p.top_k < 1) throw InvalidConfigError("flops: K >= 1 required");
    if (p.dim < 1) throw InvalidConfigError("flops: d >= 1 required");

    const double S = static_cast<double>(p.tokens);
    const double E = static_cast<double>(p.experts);
    const double d = static_cast<double>(p.dim);
    const double softmax_term = flops_softmax(p.tokens * p.top_k, p.top_k, false);

    FlopLedger ledger;
    switch (router) {
        case RouterKind::Air: {
            if (p.codewords < 1) throw InvalidConfigError("flops: G >= 1 required");
            if (p.shortlist < 1) throw InvalidConfigError("flops: M >= 1 required");
            if (p.shortlist > p.experts) {
                throw InvalidConfigError("flops: M <= E violated (M=" +
                                         std::to_string(p.shortlist) +
                                         ", E=" + std::to_string(p.experts) + ")");
            }
            const double G = static_cast<double>(p.codewords);
            const double M = static_cast<double>(p.shortlist);
            double ratio = 1.0;
            if (p.tokens > 0 && p.amortization_tokens > 0) {
                ratio = std::max(static_cast<double>(p.amortization_tokens) / S, 1.0);
            }
            ledger.add("coarse_assignment", 2.0 * S * G * d, true);
            ledger.add("shortlist_refresh", 2.0 * E * G * d / ratio, false);
            ledger.add("fine_scoring", 2.0 * S * M * d, true);
            ledger.add("topk", flops_index(IndexKind::TopK, p.tokens, p.shortlist, p.top_k, 0));
            ledger.add("softmax", softmax_term);
            break;
        }
        case RouterKind::Standard: {
            ledger.add("full_scoring", 2.0 * S * E * d, true);
            ledger.add("topk", flops_index(IndexKind::TopK, p.tokens, p.experts, p.top_k, 0));
            ledger.add("softmax", softmax_term);
            break;
        }
        case RouterKind::Hierarchical: {
            if (p.codewords < 1) throw InvalidConfigError("flops: G >= 1 required");
            if (p.experts % p.codewords != 0) {
                throw InvalidConfigError("flops: E mod G = 0 violated (E=" +
                                         std::to_string(p.experts) +
                                         ", G=" + std::to_string(p.codewords) + ")");
            }
            const std::int64_t block = p.experts / p.codewords;
            if (p.clusters_selected < 1 || p.clusters_selected > p.codewords) {
                throw InvalidConfigError("flops: 1 <= l <= G violated (l=" +
                                         std::to_string(p.clusters_selected) + ")");
            }
            const double G = static_cast<double>(p.codewords);
            const double pool = static_cast<double>(p.clusters_selected * block);
            ledger.add("cluster_scoring", 2.0 * S * G * d, true);
            ledger.add("cluster_topk",
                       flops_index(IndexKind::TopK, p.tokens, p.codewords, p.clusters_selected, 0));
            ledger.add("candidate_scoring", 2.0 * S * pool * d, true);
            ledger.add("expert_topk", flops_index(IndexKind::TopK, p.tokens,
                                                  p.clusters_selected * block, p.top_k, 0));
            ledger.add("softmax", softmax_term);
            break;
        }
    }
    return ledger;
}

}  // namespace airmoe
