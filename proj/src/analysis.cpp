#include "airmoe/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "airmoe/errors.hpp"

namespace airmoe {

void UsageStats::accumulate(const RoutingResult& routing) {
    if (static_cast<int>(counts.size()) != routing.num_experts) {
        throw InvalidInputError("UsageStats: expert count mismatch");
    }
    for (std::size_t e = 0; e < counts.size(); ++e) counts[e] += routing.usage_counts[e];
}

std::int64_t UsageStats::total() const {
    std::int64_t t = 0;
    for (std::int64_t c : counts) t += c;
    return t;
}

std::vector<double> routing_distribution(std::span<const double> token, const ExpertBank& bank) {
    if (static_cast<int>(token.size()) != bank.dim) {
        throw InvalidInputError("routing_distribution: dimension mismatch");
    }
    require_finite(token, "routing_distribution token");
    const Matrix routed = bank.routed_centroids();
    std::vector<double> logits(bank.num_experts);
    for (int e = 0; e < bank.num_experts; ++e) logits[e] = dot(token, routed.row_span(e));
    return softmax(logits);
}

double mass_recall(std::span<const double> token, std::span<const int> shortlist,
                   const ExpertBank& bank) {
    const std::vector<double> pi = routing_distribution(token, bank);
    double mass = 0.0;
    for (int e : shortlist) {
        if (e < 0 || e >= bank.num_experts) {
            throw InvalidInputError("mass_recall: shortlist index out of range");
        }
        mass += pi[e];
    }
    return mass;
}

BoundReport check_bound(std::span<const double> token, const CodebookState& cb,
                        const ShortlistCache& cache, const ExpertBank& bank) {
    if (!cache.valid) throw InvalidInputError("check_bound: cache is invalid");
    if (cb.size != cache.num_codewords) {
        throw InvalidInputError("check_bound: codebook/cache size mismatch");
    }
    if (static_cast<int>(token.size()) != cb.dim || cb.dim != bank.dim) {
        throw InvalidInputError("check_bound: dimension mismatch");
    }

    Matrix one(1, cb.dim);
    std::copy(token.begin(), token.end(), one.data.begin());
    const int g = assign(cb, one)[0];

    const std::span<const int> shortlist{cache.list(g),
                                         static_cast<std::size_t>(cache.shortlist_size)};
    BoundReport rep;
    rep.precondition_ok = bank.normalize_centroids && cache.built_sigma == 0.0;
    rep.eps_h = quantization_error(cb, token);
    rep.mass_recall = mass_recall(token, shortlist, bank);
    rep.rho_m = mass_recall(cb.codewords.row_span(g), shortlist, bank);
    rep.lower_bound = std::exp(-2.0 * rep.eps_h) * rep.rho_m;
    rep.margin = rep.mass_recall - rep.lower_bound;
    rep.holds = rep.margin >= -1e-9;
    return rep;
}

double overlap_fraction(const RoutingResult& approx, const RoutingResult& exact) {
    if (approx.batch != exact.batch || approx.top_k != exact.top_k) {
        throw InvalidInputError("overlap_fraction: mismatched batch or top-k");
    }
    if (approx.batch == 0) return 0.0;
    const int K = approx.top_k;
    double sum = 0.0;
    for (int s = 0; s < approx.batch; ++s) {
        const int* a = approx.token_topk(s);
        const int* b = exact.token_topk(s);
        int hits = 0;
        for (int i = 0; i < K; ++i) {
            for (int j = 0; j < K; ++j) {
                if (a[i] == b[j]) {
                    ++hits;
                    break;
                }
            }
        }
        sum += static_cast<double>(hits) / K;
    }
    return sum / approx.batch;
}

double usage_entropy(const UsageStats& stats) {
    const std::int64_t total = stats.total();
    if (total <= 0) throw InvalidInputError("usage_entropy: no dispatches recorded");
    double h = 0.0;
    for (std::int64_t c : stats.counts) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / static_cast<double>(total);
        h -= p * std::log(p);
    }
    return h;
}

double dead_expert_fraction(const UsageStats& stats) {
    if (stats.counts.empty()) throw InvalidInputError("dead_expert_fraction: empty stats");
    int dead = 0;
    for (std::int64_t c : stats.counts) {
        if (c == 0) ++dead;
    }
    return static_cast<double>(dead) / static_cast<double>(stats.counts.size());
}

}  // namespace airmoe
