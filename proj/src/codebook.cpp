#include "airmoe/codebook.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "airmoe/errors.hpp"

namespace airmoe {
namespace {

void check_dims(const CodebookState& cb, int token_dim) {
    if (token_dim != cb.dim) {
        throw InvalidInputError("codebook: token dim " + std::to_string(token_dim) +
                                " != codeword dim " + std::to_string(cb.dim));
    }
}

// Nearest codeword for one token. Cosine mode scores the raw token (the argmax
// is scale invariant); Euclidean mode compares the normalized token by squared
// distance. Ties go to the lower index.
int assign_one(const CodebookState& cb, std::span<const double> token) {
    int best = 0;
    if (cb.euclidean_mode) {
        const std::vector<double> unit = project_to_sphere(token);
        double best_d = std::numeric_limits<double>::infinity();
        for (int g = 0; g < cb.size; ++g) {
            const double* c = cb.codewords.row(g);
            double d2 = 0.0;
            for (int j = 0; j < cb.dim; ++j) {
                const double diff = unit[j] - c[j];
                d2 += diff * diff;
            }
            if (d2 < best_d) {
                best_d = d2;
                best = g;
            }
        }
    } else {
        double best_s = -std::numeric_limits<double>::infinity();
        for (int g = 0; g < cb.size; ++g) {
            const double s = cosine_similarity(token, cb.codewords.row_span(g));
            if (s > best_s) {
                best_s = s;
                best = g;
            }
        }
    }
    return best;
}

}  // namespace

CodebookState codebook_init(const Matrix& tokens, int G, RngStream& rng,
                            double decay, double dead_threshold, bool euclidean_mode) {
    if (tokens.rows < 1) throw InvalidInputError("codebook_init: empty batch");
    if (G < 1) throw InvalidInputError("codebook_init: G must be >= 1");
    require_finite({tokens.data.data(), tokens.data.size()}, "codebook_init");

    const int S = tokens.rows;
    std::vector<int> picks(G);
    if (S >= G) {
        // Partial Fisher-Yates: G distinct rows.
        std::vector<int> idx(S);
        std::iota(idx.begin(), idx.end(), 0);
        for (int i = 0; i < G; ++i) {
            const int j = i + rng.next_index(S - i);
            std::swap(idx[i], idx[j]);
            picks[i] = idx[i];
        }
    } else {
        for (int i = 0; i < G; ++i) picks[i] = rng.next_index(S);
    }

    CodebookState cb;
    cb.dim = tokens.cols;
    cb.size = G;
    cb.codewords = Matrix(G, tokens.cols);
    cb.ema_sums = Matrix(G, tokens.cols);
    cb.ema_counts.assign(G, 1.0);
    cb.decay = decay;
    cb.dead_threshold = dead_threshold;
    cb.euclidean_mode = euclidean_mode;
    for (int g = 0; g < G; ++g) {
        std::vector<double> unit = project_to_sphere(tokens.row_span(picks[g]));
        std::copy(unit.begin(), unit.end(), cb.codewords.row(g));
        std::copy(unit.begin(), unit.end(), cb.ema_sums.row(g));
    }
    return cb;
}

Assignment assign(const CodebookState& cb, const Matrix& tokens) {
    check_dims(cb, tokens.cols);
    Assignment out(tokens.rows);
    for (int s = 0; s < tokens.rows; ++s) out[s] = assign_one(cb, tokens.row_span(s));
    return out;
}

Assignment codebook_update(CodebookState& cb, const Matrix& tokens, RngStream& rng) {
    if (tokens.rows < 1) throw InvalidInputError("codebook_update: empty batch");
    check_dims(cb, tokens.cols);
    require_finite({tokens.data.data(), tokens.data.size()}, "codebook_update");

    if (cb.frozen) return assign(cb, tokens);

    const int S = tokens.rows;
    const int G = cb.size;
    const int d = cb.dim;

    // Assignment runs on normalized tokens; identical to assign() in cosine
    // mode, and the contract in Euclidean mode.
    Matrix unit_tokens(S, d);
    for (int s = 0; s < S; ++s) {
        std::vector<double> u = project_to_sphere(tokens.row_span(s));
        std::copy(u.begin(), u.end(), unit_tokens.row(s));
    }
    const Assignment which = assign(cb, unit_tokens);

    std::vector<double> batch_counts(G, 0.0);
    Matrix batch_sums(G, d);
    for (int s = 0; s < S; ++s) {
        const int g = which[s];
        batch_counts[g] += 1.0;
        const double* u = unit_tokens.row(s);
        double* acc = batch_sums.row(g);
        for (int j = 0; j < d; ++j) acc[j] += u[j];
    }

    const double gamma = cb.decay;
    for (int g = 0; g < G; ++g) {
        cb.ema_counts[g] = gamma * cb.ema_counts[g] + (1.0 - gamma) * batch_counts[g];
        double* m = cb.ema_sums.row(g);
        const double* b = batch_sums.row(g);
        for (int j = 0; j < d; ++j) m[j] = gamma * m[j] + (1.0 - gamma) * b[j];

        // Dead-code revival: independent uniform batch token per dead code.
        if (cb.ema_counts[g] < cb.dead_threshold) {
            const int u = rng.next_index(S);
            const double* repl = unit_tokens.row(u);
            std::copy(repl, repl + d, m);
            cb.ema_counts[g] = 1.0;
        }

        double* c = cb.codewords.row(g);
        if (cb.euclidean_mode) {
            const double inv = 1.0 / std::max(cb.ema_counts[g], kDegenerateNorm);
            for (int j = 0; j < d; ++j) c[j] = m[j] * inv;
        } else {
            std::vector<double> unit = project_to_sphere({m, static_cast<std::size_t>(d)});
            std::copy(unit.begin(), unit.end(), c);
        }
    }
    return which;
}

double quantization_error(const CodebookState& cb, std::span<const double> token) {
    check_dims(cb, static_cast<int>(token.size()));
    const int g = assign_one(cb, token);
    const double* c = cb.codewords.row(g);
    double d2 = 0.0;
    for (int j = 0; j < cb.dim; ++j) {
        const double diff = token[j] - c[j];
        d2 += diff * diff;
    }
    return std::sqrt(d2);
}

double mean_quantization_error(const CodebookState& cb, const Matrix& tokens) {
    if (tokens.rows == 0) return 0.0;
    double acc = 0.0;
    for (int s = 0; s < tokens.rows; ++s) acc += quantization_error(cb, tokens.row_span(s));
    return acc / tokens.rows;
}

}  // namespace airmoe
