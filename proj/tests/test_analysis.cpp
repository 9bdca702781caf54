#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "airmoe/analysis.hpp"
#include "airmoe/baselines.hpp"
#include "airmoe/errors.hpp"
#include "test_support.hpp"

using namespace airmoe;

namespace {

struct BoundFixture {
    ExpertBank bank;
    CodebookState cb;
    ShortlistCache cache;
    RouterConfig cfg;
};

BoundFixture make_fixture(std::mt19937_64& gen, int E, int G, int M, int d) {
    BoundFixture f;
    f.bank = testsup::random_bank(gen, E, d);
    const Matrix seed_tokens = testsup::random_matrix(gen, 8 * G, d);
    RngStream rng(gen(), 0);
    f.cb = codebook_init(seed_tokens, G, rng);
    f.cfg.num_codewords = G;
    f.cfg.num_experts = E;
    f.cfg.shortlist_size = M;
    f.cfg.top_k = 1;
    f.cfg.jitter_sigma = 0.0;
    f.cfg.training_mode = false;
    RngStream rrng(gen(), 0);
    f.cache = refresh_shortlists(f.cb, f.bank, f.cfg, rrng);
    return f;
}

}  // namespace

TEST_CASE("usage entropy pinned values") {
    UsageStats stats(3);
    stats.counts = {1, 1, 2};
    CHECK(usage_entropy(stats) == doctest::Approx(1.0397207708399179).epsilon(1e-12));

    UsageStats uniform(4);
    uniform.counts = {5, 5, 5, 5};
    CHECK(usage_entropy(uniform) == doctest::Approx(std::log(4.0)).epsilon(1e-12));

    UsageStats single(4);
    single.counts = {0, 9, 0, 0};
    CHECK(usage_entropy(single) == doctest::Approx(0.0));

    UsageStats empty(4);
    CHECK_THROWS_AS((void)usage_entropy(empty), InvalidInputError);
}

TEST_CASE("dead expert fraction counts zero-dispatch experts") {
    UsageStats stats(4);
    stats.counts = {0, 3, 0, 1};
    CHECK(dead_expert_fraction(stats) == 0.5);
    stats.counts = {1, 1, 1, 1};
    CHECK(dead_expert_fraction(stats) == 0.0);
}

TEST_CASE("usage stats accumulate routing results") {
    UsageStats stats(5);
    RoutingResult r;
    r.batch = 2;
    r.top_k = 2;
    r.num_experts = 5;
    r.topk_indices = {0, 3, 3, 4};
    r.usage_counts = {1, 0, 0, 2, 1};
    stats.accumulate(r);
    stats.accumulate(r);
    CHECK(stats.counts == std::vector<std::int64_t>{2, 0, 0, 4, 2});
    CHECK(stats.total() == 8);
}

TEST_CASE("routing distribution is the full softmax over expert logits") {
    std::mt19937_64 gen(1);
    const int E = 10, d = 6;
    const ExpertBank bank = testsup::random_bank(gen, E, d);
    const Matrix token = testsup::random_matrix(gen, 1, d);

    const std::vector<double> p = routing_distribution(token.row_span(0), bank);
    REQUIRE(static_cast<int>(p.size()) == E);
    const Matrix routed = bank.routed_centroids();
    std::vector<double> logits(E);
    for (int e = 0; e < E; ++e) logits[e] = testsup::ref_dot(token.row(0), routed.row(e), d);
    const std::vector<double> expect = testsup::ref_softmax(logits);
    CHECK(testsup::max_abs_diff(p, expect) < 1e-12);

    double sum = 0.0;
    for (double v : p) sum += v;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("mass recall sums the shortlisted probabilities") {
    std::mt19937_64 gen(2);
    const int E = 8, d = 4;
    const ExpertBank bank = testsup::random_bank(gen, E, d);
    const Matrix token = testsup::random_matrix(gen, 1, d);

    const std::vector<double> p = routing_distribution(token.row_span(0), bank);
    const std::vector<int> shortlist{1, 4, 6};
    CHECK(mass_recall(token.row_span(0), shortlist, bank) ==
          doctest::Approx(p[1] + p[4] + p[6]).epsilon(1e-12));

    std::vector<int> all(E);
    std::iota(all.begin(), all.end(), 0);
    CHECK(mass_recall(token.row_span(0), all, bank) == doctest::Approx(1.0).epsilon(1e-12));

    const std::vector<int> bad{0, E};
    CHECK_THROWS_AS((void)mass_recall(token.row_span(0), bad, bank), InvalidInputError);
}

TEST_CASE("bound saturates when the token sits on its codeword with M = E") {
    std::mt19937_64 gen(3);
    BoundFixture f = make_fixture(gen, 12, 3, 12, 6);
    // Probe exactly at a codeword: eps = 0, rho = mass, bound tight.
    const BoundReport rep = check_bound(f.cb.codewords.row_span(1), f.cb, f.cache, f.bank);
    CHECK(rep.precondition_ok);
    CHECK(rep.eps_h == doctest::Approx(0.0));
    CHECK(rep.mass_recall == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rep.rho_m == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rep.lower_bound == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(rep.margin >= -1e-9);
    CHECK(rep.holds);
}

TEST_CASE("bound holds for every unit token on a random instance") {
    std::mt19937_64 gen(4);
    BoundFixture f = make_fixture(gen, 32, 4, 8, 8);
    const Matrix probes = testsup::random_unit_rows(gen, 100, 8);
    for (int s = 0; s < probes.rows; ++s) {
        const BoundReport rep = check_bound(probes.row_span(s), f.cb, f.cache, f.bank);
        REQUIRE(rep.precondition_ok);
        CHECK(rep.holds);
        CHECK(rep.margin >= -1e-9);
        CHECK(rep.mass_recall == doctest::Approx(rep.lower_bound + rep.margin).epsilon(1e-12));
        CHECK(rep.lower_bound ==
              doctest::Approx(std::exp(-2.0 * rep.eps_h) * rep.rho_m).epsilon(1e-12));
    }
}

TEST_CASE("mass recall grows with nested shortlists") {
    std::mt19937_64 gen(5);
    const int E = 16, d = 6;
    const ExpertBank bank = testsup::random_bank(gen, E, d);
    const Matrix seed_tokens = testsup::random_matrix(gen, 32, d);
    RngStream crng(9, 0);
    const CodebookState cb = codebook_init(seed_tokens, 2, crng);
    const Matrix probes = testsup::random_unit_rows(gen, 50, d);

    std::vector<double> prev(probes.rows, -1.0);
    for (int M : {1, 2, 4, 8, 16}) {
        RouterConfig cfg;
        cfg.num_codewords = 2;
        cfg.num_experts = E;
        cfg.shortlist_size = M;
        cfg.top_k = 1;
        cfg.training_mode = false;
        RngStream rng(10, 0);
        const ShortlistCache cache = refresh_shortlists(cb, bank, cfg, rng);
        for (int s = 0; s < probes.rows; ++s) {
            const BoundReport rep = check_bound(probes.row_span(s), cb, cache, bank);
            CHECK(rep.mass_recall >= prev[s] - 1e-12);
            prev[s] = rep.mass_recall;
        }
    }
    for (int s = 0; s < probes.rows; ++s) CHECK(prev[s] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("bound preconditions are tracked") {
    std::mt19937_64 gen(6);
    BoundFixture f = make_fixture(gen, 12, 3, 6, 5);
    const Matrix probe = testsup::random_unit_rows(gen, 1, 5);

    // Raw (unnormalized) centroids void the guarantee.
    BoundFixture raw = f;
    raw.bank.normalize_centroids = false;
    RngStream rng(11, 0);
    raw.cache = refresh_shortlists(raw.cb, raw.bank, raw.cfg, rng);
    CHECK_FALSE(check_bound(probe.row_span(0), raw.cb, raw.cache, raw.bank).precondition_ok);

    // A cache built under jitter does too.
    BoundFixture noisy = f;
    noisy.cfg.training_mode = true;
    noisy.cfg.jitter_sigma = 0.5;
    RngStream nrng(12, 0);
    noisy.cache = refresh_shortlists(noisy.cb, noisy.bank, noisy.cfg, nrng);
    CHECK(noisy.cache.built_sigma == 0.5);
    CHECK_FALSE(check_bound(probe.row_span(0), noisy.cb, noisy.cache, noisy.bank).precondition_ok);

    // The clean fixture is fine.
    CHECK(check_bound(probe.row_span(0), f.cb, f.cache, f.bank).precondition_ok);
}

TEST_CASE("overlap fraction against the exact router") {
    std::mt19937_64 gen(7);
    const int E = 10, d = 5, S = 20, K = 3;
    const ExpertBank bank = testsup::random_bank(gen, E, d);
    const Matrix tokens = testsup::random_matrix(gen, S, d);
    const RoutingResult exact = exact_route(tokens, bank, K);

    CHECK(overlap_fraction(exact, exact) == doctest::Approx(1.0));

    // Shifting every selection to the complement kills the overlap.
    RoutingResult disjoint = exact;
    for (int& e : disjoint.topk_indices) e = (e + 5) % 10;
    bool all_disjoint = true;
    for (int s = 0; s < S && all_disjoint; ++s) {
        for (int j = 0; j < K; ++j) {
            for (int i = 0; i < K; ++i) {
                if (disjoint.token_topk(s)[j] == exact.token_topk(s)[i]) all_disjoint = false;
            }
        }
    }
    if (all_disjoint) CHECK(overlap_fraction(disjoint, exact) == doctest::Approx(0.0));

    // Hand case: half the slots agree.
    RoutingResult a = exact, b = exact;
    a.batch = b.batch = 1;
    a.top_k = b.top_k = 2;
    a.topk_indices = {0, 1};
    b.topk_indices = {1, 2};
    CHECK(overlap_fraction(a, b) == doctest::Approx(0.5));
}
