#include "airmoe/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "airmoe/errors.hpp"

namespace airmoe {
namespace {

constexpr std::uint64_t kSiteCluster = 0x636c7573;  // cluster-selection jitter
constexpr std::uint64_t kSiteExpert = 0x65787065;   // expert-selection jitter

}  // namespace

void HierarchicalConfig::validate(int num_experts) const {
    if (num_clusters < 1) throw InvalidConfigError("hierarchical: G >= 1 required");
    if (clusters_selected < 1 || clusters_selected > num_clusters) {
        throw InvalidConfigError("hierarchical: 1 <= l <= G violated (l=" +
                                 std::to_string(clusters_selected) + ", G=" +
                                 std::to_string(num_clusters) + ")");
    }
    if (top_k < 1) throw InvalidConfigError("hierarchical: K >= 1 required");
    if (num_experts % num_clusters != 0) {
        throw InvalidConfigError("hierarchical: E mod G = 0 violated (E=" +
                                 std::to_string(num_experts) + ", G=" +
                                 std::to_string(num_clusters) + ")");
    }
    const int block = num_experts / num_clusters;
    if (clusters_selected * block < top_k) {
        throw InvalidConfigError("hierarchical: l*(E/G) >= K violated (l=" +
                                 std::to_string(clusters_selected) + ", E/G=" +
                                 std::to_string(block) + ", K=" + std::to_string(top_k) + ")");
    }
}

RoutingResult exact_route(const Matrix& tokens, const ExpertBank& bank, int top_k) {
    const int E = bank.num_experts;
    if (top_k < 1 || top_k > E) {
        throw InvalidConfigError("exact_route: K <= E violated (K=" + std::to_string(top_k) +
                                 ", E=" + std::to_string(E) + ")");
    }
    if (tokens.cols != bank.dim) throw InvalidInputError("exact_route: dimension mismatch");
    require_finite({tokens.data.data(), tokens.data.size()}, "exact_route tokens");

    const int S = tokens.rows;
    const Matrix routed = bank.routed_centroids();

    RoutingResult out;
    out.batch = S;
    out.top_k = top_k;
    out.num_candidates = E;
    out.num_experts = E;
    out.topk_indices.resize(static_cast<std::size_t>(S) * top_k);
    out.topk_scores.resize(static_cast<std::size_t>(S) * top_k);
    out.topk_weights.resize(static_cast<std::size_t>(S) * top_k);
    out.candidate_indices.resize(static_cast<std::size_t>(S) * E);
    out.candidate_scores.resize(static_cast<std::size_t>(S) * E);
    out.usage_counts.assign(E, 0);

    std::vector<double> scores(E);
    std::vector<int> order(E);
    for (int s = 0; s < S; ++s) {
        const double* h = tokens.row(s);
        for (int e = 0; e < E; ++e) {
            scores[e] = dot({h, static_cast<std::size_t>(tokens.cols)}, routed.row_span(e));
        }

        // Full descending sort; independent of the shortlist machinery.
        std::iota(order.begin(), order.end(), 0);
        std::partial_sort(order.begin(), order.begin() + top_k, order.end(), [&](int a, int b) {
            if (scores[a] != scores[b]) return scores[a] > scores[b];
            return a < b;
        });

        double* ts = out.topk_scores.data() + static_cast<std::size_t>(s) * top_k;
        int* ti = out.topk_indices.data() + static_cast<std::size_t>(s) * top_k;
        for (int j = 0; j < top_k; ++j) {
            ti[j] = order[j];
            ts[j] = scores[order[j]];
            out.usage_counts[order[j]]++;
        }
        const std::vector<double> weights = softmax({ts, static_cast<std::size_t>(top_k)});
        std::copy(weights.begin(), weights.end(),
                  out.topk_weights.begin() + static_cast<std::size_t>(s) * top_k);

        int* ci = out.candidate_indices.data() + static_cast<std::size_t>(s) * E;
        std::iota(ci, ci + E, 0);
        std::copy(scores.begin(), scores.end(),
                  out.candidate_scores.begin() + static_cast<std::size_t>(s) * E);
    }
    return out;
}

RoutingResult hierarchical_route(const Matrix& tokens, const ExpertBank& bank,
                                 const HierarchicalConfig& hcfg, double sigma, RngStream& rng) {
    hcfg.validate(bank.num_experts);
    if (tokens.cols != bank.dim) throw InvalidInputError("hierarchical_route: dimension mismatch");
    require_finite({tokens.data.data(), tokens.data.size()}, "hierarchical_route tokens");

    const int S = tokens.rows;
    const int E = bank.num_experts;
    const int G = hcfg.num_clusters;
    const int l = hcfg.clusters_selected;
    const int K = hcfg.top_k;
    const int block = E / G;
    const int pool = l * block;
    const Matrix routed = bank.routed_centroids();

    // Cluster centroids: means of each contiguous block of routed centroids.
    Matrix cluster(G, bank.dim);
    for (int g = 0; g < G; ++g) {
        double* c = cluster.row(g);
        for (int e = g * block; e < (g + 1) * block; ++e) {
            const double* w = routed.row(e);
            for (int j = 0; j < bank.dim; ++j) c[j] += w[j];
        }
        for (int j = 0; j < bank.dim; ++j) c[j] /= block;
    }

    RoutingResult out;
    out.batch = S;
    out.top_k = K;
    out.num_candidates = pool;
    out.num_experts = E;
    out.topk_indices.resize(static_cast<std::size_t>(S) * K);
    out.topk_scores.resize(static_cast<std::size_t>(S) * K);
    out.topk_weights.resize(static_cast<std::size_t>(S) * K);
    out.candidate_indices.resize(static_cast<std::size_t>(S) * pool);
    out.candidate_scores.resize(static_cast<std::size_t>(S) * pool);
    out.usage_counts.assign(E, 0);

    const RngStream cluster_base = rng.derive(kSiteCluster);
    const RngStream expert_base = rng.derive(kSiteExpert);
    std::vector<double> cluster_scores(G);
    std::vector<double> cand_scores(pool);
    std::vector<int> cand_ids(pool);

    for (int s = 0; s < S; ++s) {
        const double* h = tokens.row(s);
        for (int g = 0; g < G; ++g) {
            cluster_scores[g] = dot({h, static_cast<std::size_t>(tokens.cols)},
                                    cluster.row_span(g));
        }
        RngStream crng = cluster_base.derive(static_cast<std::uint64_t>(s));
        TopK sel = noisy_topk(cluster_scores, l, sigma, crng);

        // Canonical candidate layout: selected blocks ascending, experts
        // ascending within a block.
        std::sort(sel.indices.begin(), sel.indices.end());
        int pos = 0;
        for (int b : sel.indices) {
            for (int e = b * block; e < (b + 1) * block; ++e) cand_ids[pos++] = e;
        }
        for (int m = 0; m < pool; ++m) {
            cand_scores[m] = dot({h, static_cast<std::size_t>(tokens.cols)},
                                 routed.row_span(cand_ids[m]));
        }

        RngStream erng = expert_base.derive(static_cast<std::uint64_t>(s));
        const TopK top = noisy_topk(cand_scores, K, sigma, erng);
        const std::vector<double> weights = softmax(top.values);

        int* ti = out.topk_indices.data() + static_cast<std::size_t>(s) * K;
        double* ts = out.topk_scores.data() + static_cast<std::size_t>(s) * K;
        double* tw = out.topk_weights.data() + static_cast<std::size_t>(s) * K;
        for (int j = 0; j < K; ++j) {
            ti[j] = cand_ids[top.indices[j]];
            ts[j] = top.values[j];
            tw[j] = weights[j];
            out.usage_counts[ti[j]]++;
        }
        std::copy(cand_ids.begin(), cand_ids.end(),
                  out.candidate_indices.begin() + static_cast<std::size_t>(s) * pool);
        std::copy(cand_scores.begin(), cand_scores.end(),
                  out.candidate_scores.begin() + static_cast<std::size_t>(s) * pool);
    }
    return out;
}

CoarseConfig derive_coarse_config(int num_experts, int top_k, int intermediate_dim) {
    if (num_experts < 1 || top_k < 1 || intermediate_dim < 1) {
        throw InvalidConfigError("derive_coarse_config: all arguments must be >= 1");
    }
    CoarseConfig out;
    out.num_experts = (num_experts + top_k - 1) / top_k;  // ceil(E / K)
    out.intermediate_dim = intermediate_dim * top_k;
    out.top_k = 1;
    return out;
}

FairnessReport validate_fairness(const RouterConfig& air_cfg, const HierarchicalConfig& hcfg) {
    FairnessReport rep;
    rep.equal_active_k = true;
    rep.equal_coarse_structure = true;
    rep.equal_candidate_pool = true;

    const int E = air_cfg.num_experts;
    const int M = air_cfg.shortlist_size;
    const auto fail = [&rep](bool& flag, std::string msg) {
        flag = false;
        rep.violations.push_back(std::move(msg));
    };

    // Intra-method: AIR (l = 1).
    if (M > E) {
        fail(rep.equal_candidate_pool,
             "air: M <= E violated (M=" + std::to_string(M) + ", E=" + std::to_string(E) + ")");
    }
    if (M < air_cfg.top_k) {
        rep.warnings.push_back("air: candidate pool below active-K (l*M >= K fails, M=" +
                               std::to_string(M) + ", K=" + std::to_string(air_cfg.top_k) + ")");
    }

    // Intra-method: hierarchical.
    const bool divisible = hcfg.num_clusters >= 1 && E % hcfg.num_clusters == 0;
    if (!divisible) {
        fail(rep.equal_coarse_structure,
             "hierarchical: E mod G = 0 violated (E=" + std::to_string(E) +
                 ", G=" + std::to_string(hcfg.num_clusters) + ")");
    } else {
        const int block = E / hcfg.num_clusters;
        if (hcfg.clusters_selected * block < hcfg.top_k) {
            rep.warnings.push_back(
                "hierarchical: candidate pool below active-K (l*(E/G) >= K fails, l=" +
                std::to_string(hcfg.clusters_selected) + ", E/G=" + std::to_string(block) +
                ", K=" + std::to_string(hcfg.top_k) + ")");
        }
    }

    // Cross-method A: equal active-K.
    if (air_cfg.top_k != hcfg.top_k) {
        fail(rep.equal_active_k, "equal active-K violated (air K=" + std::to_string(air_cfg.top_k) +
                                     ", hierarchical K=" + std::to_string(hcfg.top_k) + ")");
    }
    // Cross-method B: equal coarse structure.
    if (air_cfg.num_codewords != hcfg.num_clusters) {
        fail(rep.equal_coarse_structure,
             "equal coarse structure violated (air G=" + std::to_string(air_cfg.num_codewords) +
                 ", hierarchical G=" + std::to_string(hcfg.num_clusters) + ")");
    }
    // Cross-method C: equal candidate pool, 1*M = l*(E/G).
    if (divisible) {
        const int hier_pool = hcfg.clusters_selected * (E / hcfg.num_clusters);
        if (M != hier_pool) {
            fail(rep.equal_candidate_pool,
                 "equal candidate pool violated (air M=" + std::to_string(M) +
                     ", hierarchical l*(E/G)=" + std::to_string(hier_pool) + ")");
        }
    }
    return rep;
}

}  // namespace airmoe
