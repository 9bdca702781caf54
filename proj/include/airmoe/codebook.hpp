// codebook.hpp - gradient-free adaptive spherical k-means codebook
//
// Assignment, EMA count/sum tracking and dead-code revival. The codebook never
// receives gradients; it is updated only through codebook_update.

#pragma once

#include <vector>

#include "airmoe/numerics.hpp"
#include "airmoe/rng.hpp"

namespace airmoe {

struct CodebookState {
    int dim = 0;
    int size = 0;             // G
    Matrix codewords;         // G x d, unit rows unless euclidean_mode
    std::vector<double> ema_counts;  // n_g, non-negative
    Matrix ema_sums;          // m_g, G x d
    double decay = 0.95;      // gamma in [0, 1)
    double dead_threshold = 1.0;  // tau > 0
    bool frozen = false;          // static-codebook ablation
    bool euclidean_mode = false;  // Euclidean-assignment ablation
};

// One codeword index per token, each in [0, G).
using Assignment = std::vector<int>;

// Codewords are tokens sampled without replacement when S >= G (with
// replacement otherwise), projected to the sphere. ema_counts start at 1 and
// ema_sums equal the codewords.
CodebookState codebook_init(const Matrix& tokens, int G, RngStream& rng,
                            double decay = 0.95, double dead_threshold = 1.0,
                            bool euclidean_mode = false);

// Nearest codeword per token: argmax cosine similarity, or argmin squared
// Euclidean distance between the normalized token and the codeword in
// euclidean_mode. Ties to the lower index.
Assignment assign(const CodebookState& cb, const Matrix& tokens);

// One adaptive k-means step: assign (on normalized tokens), EMA update of
// counts and sums, dead-code reinit (n_g < tau -> random normalized batch
// token, n_g = 1), then codeword refresh. Frozen codebooks are returned
// unchanged; only the assignment is computed.
Assignment codebook_update(CodebookState& cb, const Matrix& tokens, RngStream& rng);

// ||token - assigned codeword|| with the raw token and the same assignment
// rule as assign.
double quantization_error(const CodebookState& cb, std::span<const double> token);

// Batch mean of quantization_error; used as the clustering health metric.
double mean_quantization_error(const CodebookState& cb, const Matrix& tokens);

}  // namespace airmoe
