#include "airmoe/router.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <thread>

#include "airmoe/errors.hpp"

namespace airmoe {
namespace {

// Substream ids for the router's two noise sites.
constexpr std::uint64_t kSiteRefresh = 0x72656672;  // coarse-index jitter
constexpr std::uint64_t kSiteFine = 0x66696e65;     // fine-scoring jitter

void check_route_inputs(const Matrix& tokens, const ExpertBank& bank,
                        const CodebookState& cb, const RouterConfig& cfg) {
    cfg.validate();
    if (bank.num_experts != cfg.num_experts) {
        throw InvalidConfigError("air_route: bank has " + std::to_string(bank.num_experts) +
                                 " experts, config expects " + std::to_string(cfg.num_experts));
    }
    if (cb.size != cfg.num_codewords) {
        throw InvalidConfigError("air_route: codebook has " + std::to_string(cb.size) +
                                 " codewords, config expects " + std::to_string(cfg.num_codewords));
    }
    if (tokens.cols != bank.dim || cb.dim != bank.dim) {
        throw InvalidInputError("air_route: dimension mismatch (tokens " +
                                std::to_string(tokens.cols) + ", bank " + std::to_string(bank.dim) +
                                ", codebook " + std::to_string(cb.dim) + ")");
    }
    require_finite({tokens.data.data(), tokens.data.size()}, "air_route tokens");
}

void rebuild_in_place(ShortlistCache& cache, const CodebookState& cb, const ExpertBank& bank,
                      const RouterConfig& cfg, RngStream rng) {
    const std::int64_t prior = cache.rebuild_count;
    cache = refresh_shortlists(cb, bank, cfg, rng);
    cache.rebuild_count += prior;
}

// Fine scoring for tokens [begin, end). Writes disjoint row ranges of `out`;
// per-token noise comes from fine_base.derive(global token index), so any
// slicing of the batch produces identical results.
void route_slice(const Matrix& tokens, int begin, int end, const Matrix& routed,
                 const Assignment& coarse, const ShortlistCache& cache, const RouterConfig& cfg,
                 const RngStream& fine_base, RoutingResult& out,
                 std::vector<std::int64_t>& usage) {
    const int M = cfg.shortlist_size;
    const int K = cfg.top_k;
    const double sigma = cfg.effective_sigma();
    std::vector<double> cand_scores(M);

    for (int s = begin; s < end; ++s) {
        const int* list = cache.list(coarse[s]);
        const double* h = tokens.row(s);
        for (int m = 0; m < M; ++m) {
            cand_scores[m] = dot({h, static_cast<std::size_t>(tokens.cols)},
                                 routed.row_span(list[m]));
        }

        RngStream token_rng = fine_base.derive(static_cast<std::uint64_t>(s));
        const TopK top = noisy_topk(cand_scores, K, sigma, token_rng);
        const std::vector<double> weights = softmax(top.values);

        int* ti = out.topk_indices.data() + static_cast<std::size_t>(s) * K;
        double* ts = out.topk_scores.data() + static_cast<std::size_t>(s) * K;
        double* tw = out.topk_weights.data() + static_cast<std::size_t>(s) * K;
        for (int j = 0; j < K; ++j) {
            ti[j] = list[top.indices[j]];
            ts[j] = top.values[j];
            tw[j] = weights[j];
            usage[ti[j]]++;
        }

        int* ci = out.candidate_indices.data() + static_cast<std::size_t>(s) * M;
        double* cs = out.candidate_scores.data() + static_cast<std::size_t>(s) * M;
        std::copy(list, list + M, ci);
        std::copy(cand_scores.begin(), cand_scores.end(), cs);
    }
}

RoutingResult air_route_impl(const Matrix& tokens, const ExpertBank& bank,
                             const CodebookState& cb, ShortlistCache& cache,
                             const RouterConfig& cfg, RngStream& rng, int num_threads) {
    check_route_inputs(tokens, bank, cb, cfg);
    if (!cache.valid) {
        rebuild_in_place(cache, cb, bank, cfg, rng.derive(kSiteRefresh));
    }
    if (cache.num_codewords != cfg.num_codewords || cache.shortlist_size != cfg.shortlist_size) {
        throw InvalidConfigError("air_route: cache shape does not match config");
    }

    const int S = tokens.rows;
    const Matrix routed = bank.routed_centroids();
    const Assignment coarse = assign(cb, tokens);

    RoutingResult out;
    out.batch = S;
    out.top_k = cfg.top_k;
    out.num_candidates = cfg.shortlist_size;
    out.num_experts = cfg.num_experts;
    out.topk_indices.resize(static_cast<std::size_t>(S) * cfg.top_k);
    out.topk_scores.resize(static_cast<std::size_t>(S) * cfg.top_k);
    out.topk_weights.resize(static_cast<std::size_t>(S) * cfg.top_k);
    out.candidate_indices.resize(static_cast<std::size_t>(S) * cfg.shortlist_size);
    out.candidate_scores.resize(static_cast<std::size_t>(S) * cfg.shortlist_size);
    out.usage_counts.assign(cfg.num_experts, 0);

    const RngStream fine_base = rng.derive(kSiteFine);
    if (num_threads <= 1 || S < 2) {
        route_slice(tokens, 0, S, routed, coarse, cache, cfg, fine_base, out, out.usage_counts);
        return out;
    }

    const int workers = std::min(num_threads, S);
    std::vector<std::vector<std::int64_t>> usage(workers,
                                                 std::vector<std::int64_t>(cfg.num_experts, 0));
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        const int begin = static_cast<int>(static_cast<std::int64_t>(S) * w / workers);
        const int end = static_cast<int>(static_cast<std::int64_t>(S) * (w + 1) / workers);
        pool.emplace_back([&, w, begin, end] {
            route_slice(tokens, begin, end, routed, coarse, cache, cfg, fine_base, out, usage[w]);
        });
    }
    for (auto& t : pool) t.join();
    for (int w = 0; w < workers; ++w) {
        for (int e = 0; e < cfg.num_experts; ++e) out.usage_counts[e] += usage[w][e];
    }
    return out;
}

}  // namespace

Matrix ExpertBank::routed_centroids() const {
    Matrix out = centroids;
    if (normalize_centroids) {
        for (int e = 0; e < num_experts; ++e) project_to_sphere_inplace(out.row_span(e));
    }
    return out;
}

ExpertBank make_expert_bank(int num_experts, int dim, RngStream& rng, bool normalize_centroids) {
    if (num_experts < 1 || dim < 1) {
        throw InvalidConfigError("make_expert_bank: need num_experts >= 1 and dim >= 1");
    }
    ExpertBank bank;
    bank.dim = dim;
    bank.num_experts = num_experts;
    bank.normalize_centroids = normalize_centroids;
    bank.centroids = Matrix(num_experts, dim);
    bank.ffn_in = Matrix(num_experts, dim);
    bank.ffn_out = Matrix(num_experts, dim);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
    for (double& v : bank.centroids.data) v = scale * rng.next_gaussian();
    for (double& v : bank.ffn_in.data) v = scale * rng.next_gaussian();
    for (double& v : bank.ffn_out.data) v = scale * rng.next_gaussian();
    return bank;
}

void RouterConfig::validate() const {
    if (num_codewords < 1) throw InvalidConfigError("router config: G >= 1 required");
    if (top_k < 1) throw InvalidConfigError("router config: K >= 1 required");
    if (top_k > shortlist_size) {
        throw InvalidConfigError("router config: K <= M violated (K=" + std::to_string(top_k) +
                                 ", M=" + std::to_string(shortlist_size) + ")");
    }
    if (shortlist_size > num_experts) {
        throw InvalidConfigError("router config: M <= E violated (M=" +
                                 std::to_string(shortlist_size) + ", E=" +
                                 std::to_string(num_experts) + ")");
    }
    if (jitter_sigma < 0.0) throw InvalidConfigError("router config: jitter_sigma >= 0 required");
    if (balance_weight < 0.0) throw InvalidConfigError("router config: balance_weight >= 0 required");
}

ShortlistCache refresh_shortlists(const CodebookState& cb, const ExpertBank& bank,
                                  const RouterConfig& cfg, RngStream& rng) {
    cfg.validate();
    if (cfg.shortlist_size > bank.num_experts) {
        throw InvalidConfigError("refresh_shortlists: M > E");
    }
    if (cb.dim != bank.dim) throw InvalidInputError("refresh_shortlists: dimension mismatch");

    const int G = cb.size;
    const int E = bank.num_experts;
    const int M = cfg.shortlist_size;
    const double sigma = cfg.effective_sigma();
    const Matrix routed = bank.routed_centroids();

    ShortlistCache cache;
    cache.num_codewords = G;
    cache.shortlist_size = M;
    cache.lists.resize(static_cast<std::size_t>(G) * M);
    cache.built_sigma = sigma;

    std::vector<double> scores(E);
    for (int g = 0; g < G; ++g) {
        const double* c = cb.codewords.row(g);
        for (int e = 0; e < E; ++e) {
            scores[e] = dot({c, static_cast<std::size_t>(cb.dim)}, routed.row_span(e));
        }
        RngStream list_rng = rng.derive(static_cast<std::uint64_t>(g));
        const TopK top = noisy_topk(scores, M, sigma, list_rng);
        std::copy(top.indices.begin(), top.indices.end(),
                  cache.lists.begin() + static_cast<std::size_t>(g) * M);
    }
    cache.valid = true;
    cache.rebuild_count = 1;
    return cache;
}

void invalidate_cache(ShortlistCache& cache) { cache.valid = false; }

RoutingResult air_route(const Matrix& tokens, const ExpertBank& bank, const CodebookState& cb,
                        ShortlistCache& cache, const RouterConfig& cfg, RngStream& rng) {
    return air_route_impl(tokens, bank, cb, cache, cfg, rng, 1);
}

RoutingResult air_route_parallel(const Matrix& tokens, const ExpertBank& bank,
                                 const CodebookState& cb, ShortlistCache& cache,
                                 const RouterConfig& cfg, RngStream& rng, int num_threads) {
    return air_route_impl(tokens, bank, cb, cache, cfg, rng, std::max(num_threads, 1));
}

Matrix moe_forward(const RoutingResult& routing, const ExpertBank& bank, const Matrix& tokens) {
    if (routing.batch != tokens.rows) {
        throw InvalidInputError("moe_forward: routing batch does not match tokens");
    }
    const int d = bank.dim;
    Matrix out(tokens.rows, d);
    for (int s = 0; s < routing.batch; ++s) {
        const double* h = tokens.row(s);
        double* o = out.row(s);
        for (int j = 0; j < routing.top_k; ++j) {
            const int e = routing.token_topk(s)[j];
            if (e < 0 || e >= bank.num_experts) {
                throw CorruptionError("moe_forward: expert index out of range");
            }
            const double pre = dot({bank.ffn_in.row(e), static_cast<std::size_t>(d)},
                                   {h, static_cast<std::size_t>(d)});
            if (pre <= 0.0) continue;  // relu
            const double w = routing.topk_weights[static_cast<std::size_t>(s) * routing.top_k + j];
            const double* v = bank.ffn_out.row(e);
            const double scale = w * pre;
            for (int x = 0; x < d; ++x) o[x] += scale * v[x];
        }
    }
    return out;
}

double load_balance_loss(const RoutingResult& routing, const RouterConfig& cfg) {
    if (cfg.balance_weight == 0.0) return 0.0;
    const int S = routing.batch;
    const int K = routing.top_k;
    const int E = routing.num_experts;
    const int C = routing.num_candidates;

    // p_e: mean over tokens of the full-candidate softmax probability.
    std::vector<double> mean_prob(E, 0.0);
    for (int s = 0; s < S; ++s) {
        const std::vector<double> probs =
            softmax({routing.candidate_scores.data() + static_cast<std::size_t>(s) * C,
                     static_cast<std::size_t>(C)});
        const int* cand = routing.token_candidates(s);
        for (int m = 0; m < C; ++m) mean_prob[cand[m]] += probs[m];
    }

    const double denom = static_cast<double>(S) * K;
    double acc = 0.0;
    for (int e = 0; e < E; ++e) {
        const double f = static_cast<double>(routing.usage_counts[e]) / denom;
        acc += f * (mean_prob[e] / S);
    }
    return cfg.balance_weight * E * acc;
}

}  // namespace airmoe
