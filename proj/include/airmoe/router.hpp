// router.hpp - two-stage inverted-index router
//
// Coarse stage: assign each token to its nearest codeword and gather that
// codeword's cached expert shortlist. Fine stage: exact inner-product scoring
// within the shortlist, top-K selection, softmax mixture weights over the
// selected logits. Jitter noise perturbs selection order only; returned scores
// and weights are always noise-free.

#pragma once

#include <cstdint>
#include <vector>

#include "airmoe/codebook.hpp"
#include "airmoe/numerics.hpp"
#include "airmoe/rng.hpp"

namespace airmoe {

struct ExpertBank {
    int dim = 0;
    int num_experts = 0;       // E
    Matrix centroids;          // E x d, stored raw; normalized at routing time
    Matrix ffn_in;             // E x d, u_e (rank-1 expert input projection)
    Matrix ffn_out;            // E x d, v_e (rank-1 expert output projection)
    bool normalize_centroids = true;  // no-projection ablation disables this

    // Centroids as routed: rows projected to the sphere when
    // normalize_centroids, raw copies otherwise.
    Matrix routed_centroids() const;
};

// Gaussian-initialized bank (centroid and FFN entries ~ N(0, 1/sqrt(d))).
ExpertBank make_expert_bank(int num_experts, int dim, RngStream& rng,
                            bool normalize_centroids = true);

struct RouterConfig {
    int num_codewords = 0;   // G
    int num_experts = 0;     // E
    int shortlist_size = 0;  // M
    int top_k = 0;           // K
    double jitter_sigma = 0.01;
    double balance_weight = 5e-5;
    bool training_mode = false;

    // Throws InvalidConfigError unless K <= M <= E and G >= 1.
    void validate() const;

    double effective_sigma() const { return training_mode ? jitter_sigma : 0.0; }
};

struct ShortlistCache {
    int num_codewords = 0;   // G
    int shortlist_size = 0;  // M
    std::vector<int> lists;  // G x M expert indices, row-major, entries distinct per row
    bool valid = false;
    std::int64_t built_at_step = -1;
    double built_sigma = 0.0;       // jitter used at build time (0 = noise-free index)
    std::int64_t rebuild_count = 0; // instrumentation, survives invalidation

    const int* list(int g) const { return lists.data() + static_cast<std::size_t>(g) * shortlist_size; }
};

struct RoutingResult {
    int batch = 0;           // S
    int top_k = 0;           // K
    int num_candidates = 0;  // per-token fine-stage pool size (M for this router)
    int num_experts = 0;     // E

    std::vector<int> topk_indices;      // S x K expert ids
    std::vector<double> topk_scores;    // S x K noise-free logits <h, w~>
    std::vector<double> topk_weights;   // S x K softmax over the K selected logits

    std::vector<int> candidate_indices;     // S x num_candidates expert ids
    std::vector<double> candidate_scores;   // S x num_candidates noise-free logits
    std::vector<std::int64_t> usage_counts; // E, dispatches per expert this batch

    const int* token_topk(int s) const { return topk_indices.data() + static_cast<std::size_t>(s) * top_k; }
    const int* token_candidates(int s) const {
        return candidate_indices.data() + static_cast<std::size_t>(s) * num_candidates;
    }
};

// Scores every codeword against every (normalized) expert centroid and caches
// the top-M expert indices per codeword. O(EGd). Jitter is applied only in
// training mode and affects list membership, not the stored order semantics.
ShortlistCache refresh_shortlists(const CodebookState& cb, const ExpertBank& bank,
                                  const RouterConfig& cfg, RngStream& rng);

// Clears the valid flag; lists are retained for inspection. Idempotent.
void invalidate_cache(ShortlistCache& cache);

// Full two-stage forward pass. Rebuilds the cache in place (at most once) when
// it is invalid. No quantity derived from the codebook carries gradients.
RoutingResult air_route(const Matrix& tokens, const ExpertBank& bank,
                        const CodebookState& cb, ShortlistCache& cache,
                        const RouterConfig& cfg, RngStream& rng);

// Same result as air_route, computed over disjoint token slices on num_threads
// workers. Bitwise identical to the sequential path for any thread count.
RoutingResult air_route_parallel(const Matrix& tokens, const ExpertBank& bank,
                                 const CodebookState& cb, ShortlistCache& cache,
                                 const RouterConfig& cfg, RngStream& rng,
                                 int num_threads);

// MoE mixing: out_s = sum_j weight[s][j] * v_e * relu(<u_e, h_s>).
Matrix moe_forward(const RoutingResult& routing, const ExpertBank& bank, const Matrix& tokens);

// Switch-style auxiliary loss lambda * E * sum_e f_e * p_e with f_e the
// dispatch fraction and p_e the mean full-candidate softmax probability.
double load_balance_loss(const RoutingResult& routing, const RouterConfig& cfg);

}  // namespace airmoe
