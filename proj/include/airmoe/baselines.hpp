// baselines.hpp - exact and hierarchical reference routers plus the
// cross-router fairness validator

#pragma once

#include <string>
#include <vector>

#include "airmoe/router.hpp"

namespace airmoe {

struct HierarchicalConfig {
    int num_clusters = 0;   // G, experts partition into contiguous blocks of E/G
    int clusters_selected = 0;  // l
    int top_k = 0;          // K

    // Throws InvalidConfigError naming the violated inequality.
    void validate(int num_experts) const;
};

struct FairnessReport {
    bool equal_active_k = false;
    bool equal_coarse_structure = false;
    bool equal_candidate_pool = false;
    std::vector<std::string> violations;
    // Coverage shortfalls (candidate pool < K). Analytical comparisons stay
    // valid, so these are advisory and do not clear the flags; executing a
    // router still enforces coverage through its own validate().
    std::vector<std::string> warnings;

    bool ok() const { return violations.empty(); }
};

// Exact top-K over all E logits; the ground-truth oracle for overlap and
// mass-recall evaluation. Deterministic, ties to the lower expert index.
RoutingResult exact_route(const Matrix& tokens, const ExpertBank& bank, int top_k);

// Two-level baseline: score per-block cluster centroids (block means of the
// routed centroids), select l blocks, exact top-K within the selected blocks.
// Jitter applies at both levels with the same sigma.
RoutingResult hierarchical_route(const Matrix& tokens, const ExpertBank& bank,
                                 const HierarchicalConfig& hcfg, double sigma,
                                 RngStream& rng);

struct CoarseConfig {
    int num_experts = 0;        // ceil(E / K)
    int intermediate_dim = 0;   // d * K
    int top_k = 1;
};

// Parameter-equivalent coarse configuration: K=1 routing over ceil(E/K)
// experts of intermediate size d*K.
CoarseConfig derive_coarse_config(int num_experts, int top_k, int intermediate_dim);

// Checks the cross-method fairness rules (equal active-K, equal coarse
// structure, equal candidate pool) and both routers' intra-method constraints.
// Failures are reported, never thrown.
FairnessReport validate_fairness(const RouterConfig& air_cfg, const HierarchicalConfig& hcfg);

}  // namespace airmoe
