#include "airmoe/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "airmoe/errors.hpp"

namespace airmoe {

double dot(std::span<const double> x, std::span<const double> y) {
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
    return acc;
}

double norm(std::span<const double> x) { return std::sqrt(dot(x, x)); }

bool all_finite(std::span<const double> x) {
    for (double v : x) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void require_finite(std::span<const double> x, const char* what) {
    if (!all_finite(x)) {
        throw InvalidInputError(std::string(what) + ": non-finite entry");
    }
}

std::vector<double> project_to_sphere(std::span<const double> v) {
    std::vector<double> out(v.begin(), v.end());
    project_to_sphere_inplace(out);
    return out;
}

void project_to_sphere_inplace(std::span<double> v) {
    require_finite(v, "project_to_sphere");
    const double n = norm(v);
    if (n <= kDegenerateNorm) {
        std::fill(v.begin(), v.end(), 0.0);
        if (!v.empty()) v[0] = 1.0;
        return;
    }
    const double inv = 1.0 / n;
    for (double& x : v) x *= inv;
}

double cosine_similarity(std::span<const double> x, std::span<const double> y) {
    require_finite(x, "cosine_similarity");
    require_finite(y, "cosine_similarity");
    const double nx = norm(x);
    const double ny = norm(y);
    if (nx <= kDegenerateNorm || ny <= kDegenerateNorm) {
        // Substitute e1 for the degenerate side, matching project_to_sphere.
        const std::vector<double> px = project_to_sphere(x);
        const std::vector<double> py = project_to_sphere(y);
        return std::clamp(dot(px, py), -1.0, 1.0);
    }
    return std::clamp(dot(x, y) / (nx * ny), -1.0, 1.0);
}

std::vector<double> softmax(std::span<const double> scores) {
    if (scores.empty()) throw InvalidInputError("softmax: empty input");
    require_finite(scores, "softmax");
    const double mx = *std::max_element(scores.begin(), scores.end());
    std::vector<double> out(scores.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        out[i] = std::exp(scores[i] - mx);
        sum += out[i];
    }
    const double inv = 1.0 / sum;
    for (double& v : out) v *= inv;
    return out;
}

TopK noisy_topk(std::span<const double> scores, int k, double sigma, RngStream& rng) {
    const int n = static_cast<int>(scores.size());
    if (k < 1 || k > n) {
        throw InvalidConfigError("noisy_topk: k=" + std::to_string(k) +
                                 " out of range for n=" + std::to_string(n));
    }
    require_finite(scores, "noisy_topk");

    std::vector<double> keys(scores.begin(), scores.end());
    if (sigma > 0.0) {
        for (double& key : keys) key += sigma * rng.next_gaussian();
    }

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    const auto better = [&keys](int a, int b) {
        if (keys[a] != keys[b]) return keys[a] > keys[b];
        return a < b;  // ties to the lower index
    };
    std::partial_sort(order.begin(), order.begin() + k, order.end(), better);

    TopK result;
    result.indices.assign(order.begin(), order.begin() + k);
    result.values.resize(k);
    for (int j = 0; j < k; ++j) result.values[j] = scores[result.indices[j]];
    return result;
}

}  // namespace airmoe
