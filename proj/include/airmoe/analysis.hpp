// analysis.hpp - routing-mass bound verification and routing-quality metrics

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "airmoe/codebook.hpp"
#include "airmoe/router.hpp"

namespace airmoe {

struct BoundReport {
    double mass_recall = 0.0;   // shortlist mass of the full softmax at the token
    double eps_h = 0.0;         // quantization error ||h - c(h)||
    double rho_m = 0.0;         // shortlist mass evaluated at the codeword
    double lower_bound = 0.0;   // exp(-2 eps_h) * rho_m
    double margin = 0.0;        // mass_recall - lower_bound
    bool holds = false;         // margin >= -1e-9
    // False when the bound's assumptions are not met (unnormalized centroids
    // or a cache built with jitter); the inequality is then not guaranteed.
    bool precondition_ok = true;
};

struct UsageStats {
    std::vector<std::int64_t> counts;  // per-expert dispatch totals

    explicit UsageStats(int num_experts = 0) : counts(num_experts, 0) {}
    void accumulate(const RoutingResult& routing);
    std::int64_t total() const;
};

// Full softmax over all E logits <h, w~_e>. Sums to 1.
std::vector<double> routing_distribution(std::span<const double> token, const ExpertBank& bank);

// Total routing probability the shortlist captures for this token.
double mass_recall(std::span<const double> token, std::span<const int> shortlist,
                   const ExpertBank& bank);

// Evaluates the mass-preservation bound for one token against the cached
// shortlist of its assigned codeword.
BoundReport check_bound(std::span<const double> token, const CodebookState& cb,
                        const ShortlistCache& cache, const ExpertBank& bank);

// Mean |topk(approx) ∩ topk(exact)| / K over tokens.
double overlap_fraction(const RoutingResult& approx, const RoutingResult& exact);

// Entropy in nats of the empirical usage distribution.
double usage_entropy(const UsageStats& stats);

// Fraction of experts with zero dispatches.
double dead_expert_fraction(const UsageStats& stats);

}  // namespace airmoe
