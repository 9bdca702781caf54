// flops.hpp - analytical FLOP accounting for router cost comparison
//
// Counting convention: one floating-point add/sub/mul/div/exp/log/sqrt is one
// FLOP; inner products cost 2d (multiply + add). Formulas are evaluated
// literally; no autodiff graph is traced.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace airmoe {

enum class PointwiseKind {
    Add, Sub, Mul, Div, Exp, Log, Sqrt, Rsqrt, Sigmoid, Silu, Gelu, Mean, Sum, VarMean
};

enum class NormKind { LayerNorm, RmsNorm, BatchNorm };

enum class IndexKind { TopK, Gather };

enum class RouterKind { Air, Standard, Hierarchical };

struct FlopEntry {
    std::string label;
    double flops = 0.0;
    bool matmul = false;  // counted into the matmul subtotal
};

struct FlopLedger {
    std::vector<FlopEntry> entries;
    double total = 0.0;
    double matmul_total = 0.0;  // per-token dot-product terms; excludes the amortized refresh

    void add(std::string label, double flops, bool matmul = false);
};

// Elementwise / reduction costs: 1 per element for arithmetic and
// exp/log/sqrt/rsqrt, 3 for sigmoid/silu, 6 for gelu; numel+1 for mean,
// 2*numel for sum and var_mean.
double flops_pointwise(PointwiseKind kind, std::int64_t numel);

// Forward: 2N + N/d_sm (exp + div per element plus reduction). Backward: 5N.
double flops_softmax(std::int64_t numel, std::int64_t d_sm, bool backward);

// LayerNorm V(4d + d + 1_w d + 1_b d), RMSNorm V(4d + 1_w d), backward 8Vd for
// both. BatchNorm (2N + 2C) + 2N, plus 2N when affine (weight and bias).
double flops_norm(NormKind kind, std::int64_t v_or_n, std::int64_t d_or_c,
                  bool has_weight, bool has_bias, bool backward);

// Scaled dot-product attention: 4 b h s_q s_k d + 2 b h s_q s_k.
double flops_attention(std::int64_t b, std::int64_t heads, std::int64_t s_q,
                       std::int64_t s_k, std::int64_t d);

// topk: B n log2(k+1). gather: one unit per affected element.
double flops_index(IndexKind kind, std::int64_t batch, std::int64_t n,
                   std::int64_t k, std::int64_t affected);

struct RouterFlopParams {
    std::int64_t tokens = 0;        // S
    std::int64_t experts = 0;       // E
    std::int64_t codewords = 0;     // G (air / hierarchical)
    std::int64_t shortlist = 0;     // M (air)
    std::int64_t top_k = 0;         // K
    std::int64_t clusters_selected = 1;  // l (hierarchical)
    std::int64_t dim = 0;           // d
    std::int64_t amortization_tokens = 0;  // effective batch the refresh amortizes over
};

// Per-batch routing cost of one router as a labeled ledger. The air refresh
// term 2EGd is divided by max(amortization_tokens / S, 1) and kept out of the
// matmul subtotal.
FlopLedger router_flop_ledger(RouterKind router, const RouterFlopParams& p);

}  // namespace airmoe
