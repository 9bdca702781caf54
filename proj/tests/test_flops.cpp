#include <doctest.h>

#include <cmath>
#include <string>

#include "airmoe/errors.hpp"
#include "airmoe/flops.hpp"

using namespace airmoe;

namespace {

double entry(const FlopLedger& ledger, const std::string& label) {
    for (const FlopEntry& e : ledger.entries) {
        if (e.label == label) return e.flops;
    }
    FAIL("missing ledger entry: " << label);
    return 0.0;
}

RouterFlopParams deployment_scale() {
    RouterFlopParams p;
    p.tokens = 4096;
    p.experts = 65536;
    p.codewords = 512;
    p.shortlist = 128;
    p.top_k = 512;
    p.clusters_selected = 1;
    p.dim = 256;
    p.amortization_tokens = 4096;
    return p;
}

}  // namespace

TEST_CASE("pointwise costs") {
    CHECK(flops_pointwise(PointwiseKind::Add, 100) == 100.0);
    CHECK(flops_pointwise(PointwiseKind::Sub, 7) == 7.0);
    CHECK(flops_pointwise(PointwiseKind::Mul, 7) == 7.0);
    CHECK(flops_pointwise(PointwiseKind::Div, 7) == 7.0);
    CHECK(flops_pointwise(PointwiseKind::Exp, 7) == 7.0);
    CHECK(flops_pointwise(PointwiseKind::Log, 7) == 7.0);
    CHECK(flops_pointwise(PointwiseKind::Sqrt, 7) == 7.0);
    CHECK(flops_pointwise(PointwiseKind::Rsqrt, 7) == 7.0);
    CHECK(flops_pointwise(PointwiseKind::Sigmoid, 4) == 12.0);
    CHECK(flops_pointwise(PointwiseKind::Silu, 4) == 12.0);
    CHECK(flops_pointwise(PointwiseKind::Gelu, 10) == 60.0);
    CHECK(flops_pointwise(PointwiseKind::Mean, 7) == 8.0);
    CHECK(flops_pointwise(PointwiseKind::Sum, 9) == 18.0);
    CHECK(flops_pointwise(PointwiseKind::VarMean, 9) == 18.0);
    CHECK(flops_pointwise(PointwiseKind::Add, 0) == 0.0);
}

TEST_CASE("softmax costs") {
    CHECK(flops_softmax(8, 4, false) == 18.0);   // 2N + N/d_sm
    CHECK(flops_softmax(8, 4, true) == 40.0);    // 5N
    CHECK(flops_softmax(8, 2, true) == 40.0);    // backward ignores d_sm
    CHECK(flops_softmax(0, 4, false) == 0.0);
    CHECK_THROWS_AS((void)flops_softmax(8, 0, false), InvalidInputError);
}

TEST_CASE("normalization costs") {
    CHECK(flops_norm(NormKind::LayerNorm, 2, 3, true, true, false) == 42.0);
    CHECK(flops_norm(NormKind::LayerNorm, 2, 3, false, false, false) == 30.0);  // V(4d + d)
    CHECK(flops_norm(NormKind::LayerNorm, 2, 3, true, false, false) == 36.0);
    CHECK(flops_norm(NormKind::LayerNorm, 2, 3, true, true, true) == 48.0);  // 8Vd
    CHECK(flops_norm(NormKind::RmsNorm, 1, 4, true, false, false) == 20.0);  // V(4d + d)
    CHECK(flops_norm(NormKind::RmsNorm, 1, 4, false, false, false) == 16.0);
    CHECK(flops_norm(NormKind::RmsNorm, 2, 4, true, false, true) == 64.0);  // 8Vd

    // Batchnorm forward (2N + 2C) + 2N; affine only when weight AND bias.
    CHECK(flops_norm(NormKind::BatchNorm, 8, 2, false, false, false) == 36.0);
    CHECK(flops_norm(NormKind::BatchNorm, 8, 2, true, false, false) == 36.0);
    CHECK(flops_norm(NormKind::BatchNorm, 8, 2, true, true, false) == 52.0);
    CHECK_THROWS_AS((void)flops_norm(NormKind::BatchNorm, 8, 2, true, true, true),
                    InvalidInputError);
}

TEST_CASE("attention cost") {
    CHECK(flops_attention(1, 1, 2, 2, 4) == 72.0);
    CHECK(flops_attention(0, 1, 2, 2, 4) == 0.0);
    CHECK(flops_attention(1, 1, 0, 2, 4) == 0.0);
    CHECK(flops_attention(2, 4, 128, 128, 64) == 33554432.0 + 262144.0);
}

TEST_CASE("index costs") {
    CHECK(flops_index(IndexKind::TopK, 1, 8, 1, 0) == 8.0);   // 8 log2(2)
    CHECK(flops_index(IndexKind::TopK, 1, 8, 3, 0) == 16.0);  // 8 log2(4)
    CHECK(flops_index(IndexKind::TopK, 2, 8, 3, 0) == 32.0);
    CHECK(flops_index(IndexKind::Gather, 0, 0, 0, 37) == 37.0);
}

TEST_CASE("formula homogeneity") {
    for (int n : {1, 5, 32}) {
        CHECK(flops_pointwise(PointwiseKind::Gelu, 2 * n) ==
              2.0 * flops_pointwise(PointwiseKind::Gelu, n));
        CHECK(flops_softmax(2 * n, n, true) == 2.0 * flops_softmax(n, n, true));
        CHECK(flops_norm(NormKind::LayerNorm, 2 * n, 3, true, true, false) ==
              2.0 * flops_norm(NormKind::LayerNorm, n, 3, true, true, false));
        CHECK(flops_attention(2 * n, 2, 4, 4, 8) == 2.0 * flops_attention(n, 2, 4, 4, 8));
        CHECK(flops_index(IndexKind::TopK, 2 * n, 16, 3, 0) ==
              2.0 * flops_index(IndexKind::TopK, n, 16, 3, 0));
    }
}

TEST_CASE("air ledger decomposes into the documented terms") {
    RouterFlopParams p;
    p.tokens = 64;
    p.experts = 32;
    p.codewords = 4;
    p.shortlist = 8;
    p.top_k = 2;
    p.dim = 16;
    p.amortization_tokens = 64;
    const FlopLedger led = router_flop_ledger(RouterKind::Air, p);

    CHECK(entry(led, "coarse_assignment") == 2.0 * 64 * 4 * 16);
    CHECK(entry(led, "fine_scoring") == 2.0 * 64 * 8 * 16);
    CHECK(entry(led, "shortlist_refresh") == 2.0 * 32 * 4 * 16);  // amortization ratio 1
    CHECK(entry(led, "topk") == flops_index(IndexKind::TopK, 64, 8, 2, 0));
    CHECK(entry(led, "softmax") == flops_softmax(64 * 2, 2, false));

    double sum = 0.0;
    for (const FlopEntry& e : led.entries) sum += e.flops;
    CHECK(led.total == sum);
    CHECK(led.matmul_total == entry(led, "coarse_assignment") + entry(led, "fine_scoring"));
}

TEST_CASE("amortization window scales the refresh term only") {
    RouterFlopParams p;
    p.tokens = 64;
    p.experts = 32;
    p.codewords = 4;
    p.shortlist = 8;
    p.top_k = 2;
    p.dim = 16;
    p.amortization_tokens = 64;
    const FlopLedger base = router_flop_ledger(RouterKind::Air, p);
    p.amortization_tokens = 128;
    const FlopLedger wide = router_flop_ledger(RouterKind::Air, p);

    CHECK(entry(wide, "shortlist_refresh") == entry(base, "shortlist_refresh") / 2.0);
    CHECK(entry(wide, "coarse_assignment") == entry(base, "coarse_assignment"));
    CHECK(wide.matmul_total == base.matmul_total);

    // A window smaller than the batch never inflates the refresh.
    p.amortization_tokens = 16;
    const FlopLedger narrow = router_flop_ledger(RouterKind::Air, p);
    CHECK(entry(narrow, "shortlist_refresh") == entry(base, "shortlist_refresh"));
}

TEST_CASE("standard ledger is the dense scoring cost") {
    RouterFlopParams p;
    p.tokens = 64;
    p.experts = 32;
    p.top_k = 2;
    p.dim = 16;
    const FlopLedger led = router_flop_ledger(RouterKind::Standard, p);
    CHECK(entry(led, "full_scoring") == 2.0 * 64 * 32 * 16);
    CHECK(entry(led, "topk") == flops_index(IndexKind::TopK, 64, 32, 2, 0));
    CHECK(entry(led, "softmax") == flops_softmax(64 * 2, 2, false));
    CHECK(led.matmul_total == 2.0 * 64 * 32 * 16);
}

TEST_CASE("hierarchical ledger covers both stages") {
    RouterFlopParams p;
    p.tokens = 64;
    p.experts = 32;
    p.codewords = 4;
    p.top_k = 2;
    p.clusters_selected = 2;
    p.dim = 16;
    const FlopLedger led = router_flop_ledger(RouterKind::Hierarchical, p);
    CHECK(entry(led, "cluster_scoring") == 2.0 * 64 * 4 * 16);
    CHECK(entry(led, "candidate_scoring") == 2.0 * 64 * (2 * 32 / 4) * 16);
    CHECK(entry(led, "cluster_topk") == flops_index(IndexKind::TopK, 64, 4, 2, 0));
    CHECK(entry(led, "expert_topk") == flops_index(IndexKind::TopK, 64, 2 * 32 / 4, 2, 0));
    CHECK(entry(led, "softmax") == flops_softmax(64 * 2, 2, false));

    // Fairness constraint C: with M = l * (E/G) the candidate terms coincide.
    RouterFlopParams air = p;
    air.shortlist = 2 * 32 / 4;
    air.amortization_tokens = 64;
    const FlopLedger air_led = router_flop_ledger(RouterKind::Air, air);
    CHECK(entry(air_led, "fine_scoring") == entry(led, "candidate_scoring"));
}

TEST_CASE("degenerate air configuration has no savings") {
    // S=1, G=1, M=E, amortization=S: the refresh alone matches dense scoring.
    RouterFlopParams p;
    p.tokens = 1;
    p.experts = 32;
    p.codewords = 1;
    p.shortlist = 32;
    p.top_k = 2;
    p.dim = 16;
    p.amortization_tokens = 1;
    const FlopLedger air = router_flop_ledger(RouterKind::Air, p);
    const FlopLedger dense = router_flop_ledger(RouterKind::Standard, p);
    CHECK(air.total >= dense.total);
}

TEST_CASE("deployment-scale matmul subtotal ratio is under two percent") {
    const RouterFlopParams p = deployment_scale();
    const FlopLedger air = router_flop_ledger(RouterKind::Air, p);
    const FlopLedger dense = router_flop_ledger(RouterKind::Standard, p);

    CHECK(air.matmul_total == 2.0 * 4096 * (512.0 + 128.0) * 256);
    CHECK(dense.matmul_total == 2.0 * 4096 * 65536.0 * 256);
    const double ratio = air.matmul_total / dense.matmul_total;
    CHECK(ratio == doctest::Approx(640.0 / 65536.0).epsilon(1e-12));
    CHECK(ratio < 0.02);
}

TEST_CASE("air matmul subtotal beats dense whenever M + G < E") {
    for (std::int64_t E : {16, 64, 256}) {
        RouterFlopParams p;
        p.tokens = 32;
        p.experts = E;
        p.codewords = 4;
        p.shortlist = 8;
        p.top_k = 2;
        p.dim = 8;
        p.amortization_tokens = 32;
        if (p.codewords + p.shortlist >= E) continue;
        const FlopLedger air = router_flop_ledger(RouterKind::Air, p);
        const FlopLedger dense = router_flop_ledger(RouterKind::Standard, p);
        CHECK(air.matmul_total < dense.matmul_total);
    }
}

TEST_CASE("ledger validation names the broken constraint") {
    RouterFlopParams p;
    p.tokens = -1;
    p.experts = 8;
    p.top_k = 1;
    p.dim = 4;
    CHECK_THROWS_AS((void)router_flop_ledger(RouterKind::Standard, p), InvalidConfigError);

    p.tokens = 8;
    p.codewords = 2;
    p.shortlist = 9;  // M > E
    CHECK_THROWS_AS((void)router_flop_ledger(RouterKind::Air, p), InvalidConfigError);

    p.shortlist = 4;
    p.codewords = 3;  // E mod G != 0
    p.clusters_selected = 1;
    CHECK_THROWS_WITH_AS((void)router_flop_ledger(RouterKind::Hierarchical, p),
                         doctest::Contains("E mod G"), InvalidConfigError);
}
