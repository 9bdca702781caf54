// numerics.hpp - dense vector/matrix kernels and randomized selection

#pragma once

#include <span>
#include <vector>

#include "airmoe/rng.hpp"

namespace airmoe {

// Row-major dense matrix. Token batches are S x d with one token per row.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

    double* row(int i) { return data.data() + static_cast<std::size_t>(i) * cols; }
    const double* row(int i) const { return data.data() + static_cast<std::size_t>(i) * cols; }

    std::span<double> row_span(int i) { return {row(i), static_cast<std::size_t>(cols)}; }
    std::span<const double> row_span(int i) const { return {row(i), static_cast<std::size_t>(cols)}; }

    double& at(int i, int j) { return data[static_cast<std::size_t>(i) * cols + j]; }
    double at(int i, int j) const { return data[static_cast<std::size_t>(i) * cols + j]; }
};

// Norm threshold below which a vector counts as degenerate (zero).
inline constexpr double kDegenerateNorm = 1e-12;

double dot(std::span<const double> x, std::span<const double> y);
double norm(std::span<const double> x);

bool all_finite(std::span<const double> x);

// Throws InvalidInputError if any entry is non-finite.
void require_finite(std::span<const double> x, const char* what);

// v / ||v||; the canonical unit vector e1 when ||v|| <= kDegenerateNorm.
std::vector<double> project_to_sphere(std::span<const double> v);
void project_to_sphere_inplace(std::span<double> v);

// <x,y> / (||x|| ||y||), clamped to [-1, 1]. Degenerate inputs follow the same
// e1 substitution as project_to_sphere.
double cosine_similarity(std::span<const double> x, std::span<const double> y);

// Max-subtracted stable softmax. Output positive, sums to 1.
std::vector<double> softmax(std::span<const double> scores);

struct TopK {
    std::vector<int> indices;
    std::vector<double> values;  // unperturbed scores, in perturbed descending order
};

// Adds N(0, sigma^2) noise to a copy of scores, selects the k largest perturbed
// entries (ties to the lower index) and returns their indices with the
// *unperturbed* scores. sigma = 0 is pure top-k and draws nothing from rng.
TopK noisy_topk(std::span<const double> scores, int k, double sigma, RngStream& rng);

}  // namespace airmoe
