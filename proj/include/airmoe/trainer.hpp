// trainer.hpp - desk-scale bi-level training loop
//
// Gradient descent on {encoder, expert bank, readout} with manual gradients,
// interleaved with gradient-free codebook updates and lazy shortlist-cache
// invalidation after every optimizer step. Routing selections are frozen
// before the backward pass: gradients are a function of the model parameters
// and the frozen selections only, never of the codebook.

#pragma once

#include <cstdint>
#include <vector>

#include "airmoe/analysis.hpp"
#include "airmoe/baselines.hpp"
#include "airmoe/codebook.hpp"
#include "airmoe/router.hpp"

namespace airmoe {

struct SyntheticTask {
    int d_in = 0;
    int d_out = 0;
    int clusters = 0;       // C
    Matrix cluster_means;   // C x d_in, unit rows
    std::vector<Matrix> maps;  // per-cluster linear target map, d_in x d_out
    double noise_std = 0.0;
    double input_spread = 0.1;  // stddev of x around its cluster mean
};

// C random unit cluster means, per-cluster maps with entries ~ N(0, 1/d_in).
SyntheticTask make_synthetic_task(int d_in, int d_out, int clusters, double noise_std,
                                  RngStream& rng);

// Samples x = mean_c + N(0, spread^2 I), y = Map_c^T x + N(0, noise_std^2 I).
// Sample i draws from sample_base.derive(first_sample_id + i), so any split of
// a window into micro-batches sees the same token stream.
void sample_task_batch(const SyntheticTask& task, int count, std::int64_t first_sample_id,
                       const RngStream& sample_base, Matrix* inputs, Matrix* targets);

struct ToyModel {
    Matrix encoder;   // d_in x d, h = x . encoder
    ExpertBank bank;  // centroids + rank-1 expert FFNs
    Matrix readout;   // d x d_out, pred = moe_out . readout
};

ToyModel make_toy_model(int d_in, int dim, int d_out, int num_experts, RngStream& rng,
                        bool normalize_centroids = true);

struct TrainConfig {
    int steps = 500;        // T
    int accum = 1;          // A, gradient accumulation micro-batches per step
    int micro_batch = 64;   // S
    double lr = 0.05;

    int d_in = 16;
    int d_out = 8;
    int clusters = 16;      // C
    double noise_std = 0.05;

    RouterConfig router;    // E, G, M, K, jitter, balance weight; d is router dim
    int dim = 16;           // d, encoder output / routing dimension
    double decay = 0.95;
    double dead_threshold = 1.0;

    bool no_projection = false;     // keep expert centroids raw at routing time
    bool static_codebook = false;   // freeze the codebook after init
    bool euclidean = false;         // Euclidean codebook assignment

    int eval_tokens = 4096;  // final evaluation batch size

    void validate() const;
};

// Trainer defaults: E=256, G=16, M=32, K=8, d=16, C=16, T=500.
TrainConfig default_train_config();

struct ForwardPass {
    Matrix h;        // S x d token representations
    RoutingResult routing;
    Matrix moe_out;  // S x d
    Matrix pred;     // S x d_out
    double mse = 0.0;
    double aux = 0.0;
    double total = 0.0;
};

// encoder -> air_route -> moe mixing -> readout -> mean squared error.
ForwardPass toy_forward(const ToyModel& model, const CodebookState& cb, ShortlistCache& cache,
                        const RouterConfig& cfg, const Matrix& inputs, const Matrix& targets,
                        RngStream& rng);

struct Gradients {
    Matrix encoder;
    Matrix readout;
    Matrix centroids;
    Matrix ffn_in;
    Matrix ffn_out;

    void add_scaled(const Gradients& other, double scale);
};

// Total loss as a pure function of the model parameters at frozen routing
// selections and candidate lists (dispatch fractions f_e frozen too). This is
// the function toy_gradients differentiates; finite-difference checks probe it.
double toy_loss_frozen(const ToyModel& model, const RoutingResult& frozen,
                       const RouterConfig& cfg, const Matrix& inputs, const Matrix& targets);

// Analytic gradients of toy_loss_frozen for all trained parameters. Expert
// centroid gradients flow through the top-K softmax, the candidate softmax of
// the balance loss, and the sphere projection Jacobian (I - w~ w~^T)/||w||.
Gradients toy_gradients(const ToyModel& model, const ForwardPass& fw, const RouterConfig& cfg,
                        const Matrix& inputs, const Matrix& targets);

struct StepMetrics {
    int step = 0;
    double loss = 0.0;           // prediction loss, mean over the step's micro-batches
    double aux_loss = 0.0;
    double overlap = 0.0;        // vs exact_route on the same batches
    double dead_frac = 0.0;      // over this step's dispatch window
    double entropy = 0.0;
    double mean_quant_err = 0.0;
    double flops_cumulative = 0.0;  // analytical routing FLOPs so far
};

struct EvalMetrics {
    double loss = 0.0;
    double overlap = 0.0;
    double dead_frac = 0.0;
    double entropy = 0.0;
    double mean_quant_err = 0.0;
};

struct TrainResult {
    std::vector<StepMetrics> history;  // one row per optimizer step
    EvalMetrics final_eval;            // deterministic eval pass over eval_tokens
    ToyModel model;
    CodebookState codebook;
    std::int64_t cache_rebuilds = 0;
};

// Full loop: per step, A micro-batches of codebook update + forward + gradient
// accumulation, then one gradient-descent step and cache invalidation.
// Deterministic given (task, cfg, rng seed). Throws DivergenceError with the
// step index if the loss turns non-finite.
TrainResult train_loop(const SyntheticTask& task, const TrainConfig& cfg, RngStream& rng);

}  // namespace airmoe
