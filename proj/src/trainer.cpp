#include "airmoe/trainer.hpp"

#include <cmath>
#include <string>

#include "airmoe/errors.hpp"
#include "airmoe/flops.hpp"

namespace airmoe {
namespace {

constexpr std::uint64_t kSiteModelInit = 0x6d6f64656c;
constexpr std::uint64_t kSiteCodebookInit = 0x6362696e69;
constexpr std::uint64_t kSiteKmeans = 0x6b6d65616e;
constexpr std::uint64_t kSiteRoute = 0x726f757465;
constexpr std::uint64_t kSiteSample = 0x73616d706c;
constexpr std::uint64_t kSiteEval = 0x6576616c00;
constexpr std::uint64_t kSiteEvalRoute = 0x6576726f75;

// C = A (SxP) . B (PxQ)
Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) throw InvalidInputError("matmul: inner dimension mismatch");
    Matrix c(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        const double* ar = a.row(i);
        double* cr = c.row(i);
        for (int p = 0; p < a.cols; ++p) {
            const double av = ar[p];
            if (av == 0.0) continue;
            const double* br = b.row(p);
            for (int q = 0; q < b.cols; ++q) cr[q] += av * br[q];
        }
    }
    return c;
}

// C += A^T (SxP)^T . B (SxQ), C is PxQ
void add_at_b(const Matrix& a, const Matrix& b, Matrix& c) {
    for (int s = 0; s < a.rows; ++s) {
        const double* ar = a.row(s);
        const double* br = b.row(s);
        for (int p = 0; p < a.cols; ++p) {
            const double av = ar[p];
            if (av == 0.0) continue;
            double* cr = c.row(p);
            for (int q = 0; q < b.cols; ++q) cr[q] += av * br[q];
        }
    }
}

Matrix gaussian_matrix(int rows, int cols, double scale, RngStream& rng) {
    Matrix m(rows, cols);
    for (double& v : m.data) v = scale * rng.next_gaussian();
    return m;
}

void sgd_update(Matrix& param, const Matrix& grad, double lr) {
    for (std::size_t i = 0; i < param.data.size(); ++i) param.data[i] -= lr * grad.data[i];
}

// Dispatch fractions f_e = usage_e / (S*K), the frozen half of the balance loss.
std::vector<double> dispatch_fractions(const RoutingResult& routing) {
    const double denom = static_cast<double>(routing.batch) * routing.top_k;
    std::vector<double> f(routing.num_experts, 0.0);
    for (int e = 0; e < routing.num_experts; ++e) {
        f[e] = static_cast<double>(routing.usage_counts[e]) / denom;
    }
    return f;
}

}  // namespace

SyntheticTask make_synthetic_task(int d_in, int d_out, int clusters, double noise_std,
                                  RngStream& rng) {
    if (d_in < 1 || d_out < 1 || clusters < 1) {
        throw InvalidConfigError("synthetic task: dimensions and cluster count must be >= 1");
    }
    if (noise_std < 0.0) throw InvalidConfigError("synthetic task: noise_std >= 0 required");

    SyntheticTask task;
    task.d_in = d_in;
    task.d_out = d_out;
    task.clusters = clusters;
    task.noise_std = noise_std;

    RngStream mean_rng = rng.derive(1);
    task.cluster_means = Matrix(clusters, d_in);
    for (int c = 0; c < clusters; ++c) {
        for (int j = 0; j < d_in; ++j) task.cluster_means.at(c, j) = mean_rng.next_gaussian();
        project_to_sphere_inplace(task.cluster_means.row_span(c));
    }

    RngStream map_rng = rng.derive(2);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d_in));
    task.maps.reserve(clusters);
    for (int c = 0; c < clusters; ++c) {
        task.maps.push_back(gaussian_matrix(d_in, d_out, scale, map_rng));
    }
    return task;
}

void sample_task_batch(const SyntheticTask& task, int count, std::int64_t first_sample_id,
                       const RngStream& sample_base, Matrix* inputs, Matrix* targets) {
    *inputs = Matrix(count, task.d_in);
    *targets = Matrix(count, task.d_out);
    for (int i = 0; i < count; ++i) {
        RngStream sr = sample_base.derive(static_cast<std::uint64_t>(first_sample_id + i));
        const int c = static_cast<int>(sr.next_index(task.clusters));
        double* x = inputs->row(i);
        const double* mean = task.cluster_means.row(c);
        for (int j = 0; j < task.d_in; ++j) {
            x[j] = mean[j] + task.input_spread * sr.next_gaussian();
        }
        double* y = targets->row(i);
        const Matrix& map = task.maps[c];
        for (int k = 0; k < task.d_out; ++k) {
            double acc = 0.0;
            for (int j = 0; j < task.d_in; ++j) acc += x[j] * map.at(j, k);
            y[k] = acc + task.noise_std * sr.next_gaussian();
        }
    }
}

ToyModel make_toy_model(int d_in, int dim, int d_out, int num_experts, RngStream& rng,
                        bool normalize_centroids) {
    ToyModel model;
    RngStream enc_rng = rng.derive(1);
    model.encoder = gaussian_matrix(d_in, dim, 1.0 / std::sqrt(static_cast<double>(d_in)), enc_rng);
    RngStream bank_rng = rng.derive(2);
    model.bank = make_expert_bank(num_experts, dim, bank_rng, normalize_centroids);
    RngStream read_rng = rng.derive(3);
    model.readout = gaussian_matrix(dim, d_out, 1.0 / std::sqrt(static_cast<double>(dim)), read_rng);
    return model;
}

void TrainConfig::validate() const {
    if (steps < 0) throw InvalidConfigError("trainer: steps >= 0 required");
    if (accum < 1) throw InvalidConfigError("trainer: accum >= 1 required");
    if (micro_batch < 1) throw InvalidConfigError("trainer: micro_batch >= 1 required");
    if (!(lr > 0.0) || !std::isfinite(lr)) throw InvalidConfigError("trainer: lr > 0 required");
    if (d_in < 1 || d_out < 1 || dim < 1) {
        throw InvalidConfigError("trainer: d_in, d_out, dim must be >= 1");
    }
    if (clusters < 1) throw InvalidConfigError("trainer: clusters >= 1 required");
    if (noise_std < 0.0) throw InvalidConfigError("trainer: noise_std >= 0 required");
    if (!(decay >= 0.0 && decay < 1.0)) throw InvalidConfigError("trainer: decay in [0,1) required");
    if (!(dead_threshold > 0.0)) throw InvalidConfigError("trainer: dead_threshold > 0 required");
    if (eval_tokens < 1) throw InvalidConfigError("trainer: eval_tokens >= 1 required");
    router.validate();
}

TrainConfig default_train_config() {
    TrainConfig cfg;
    cfg.router.num_codewords = 16;
    cfg.router.num_experts = 256;
    cfg.router.shortlist_size = 32;
    cfg.router.top_k = 8;
    // Tuned for the synthetic task: the rank-1 expert path attenuates the
    // signal at init (mixture weights ~1/K, relu ~0.1), so plain SGD needs a
    // large step size, and reviving starved experts needs strong jitter (for
    // shortlist churn) plus a firm balance penalty.
    cfg.lr = 6.0;
    cfg.router.jitter_sigma = 0.15;
    cfg.router.balance_weight = 0.03;
    return cfg;
}

ForwardPass toy_forward(const ToyModel& model, const CodebookState& cb, ShortlistCache& cache,
                        const RouterConfig& cfg, const Matrix& inputs, const Matrix& targets,
                        RngStream& rng) {
    if (inputs.rows != targets.rows) throw InvalidInputError("toy_forward: batch mismatch");
    ForwardPass fw;
    fw.h = matmul(inputs, model.encoder);
    fw.routing = air_route(fw.h, model.bank, cb, cache, cfg, rng);
    fw.moe_out = moe_forward(fw.routing, model.bank, fw.h);
    fw.pred = matmul(fw.moe_out, model.readout);

    double err = 0.0;
    for (std::size_t i = 0; i < fw.pred.data.size(); ++i) {
        const double r = fw.pred.data[i] - targets.data[i];
        err += r * r;
    }
    fw.mse = err / (static_cast<double>(inputs.rows) * targets.cols);
    fw.aux = load_balance_loss(fw.routing, cfg);
    fw.total = fw.mse + fw.aux;
    return fw;
}

double toy_loss_frozen(const ToyModel& model, const RoutingResult& frozen,
                       const RouterConfig& cfg, const Matrix& inputs, const Matrix& targets) {
    const int S = frozen.batch;
    const int K = frozen.top_k;
    const int d = model.bank.dim;
    const int d_out = targets.cols;
    if (inputs.rows != S || targets.rows != S) {
        throw InvalidInputError("toy_loss_frozen: batch mismatch");
    }

    const Matrix h = matmul(inputs, model.encoder);
    const Matrix routed = model.bank.routed_centroids();

    double err = 0.0;
    std::vector<double> z(K), o(d), pred(d_out);
    for (int s = 0; s < S; ++s) {
        const double* hs = h.row(s);
        const int* ti = frozen.token_topk(s);
        for (int j = 0; j < K; ++j) {
            z[j] = dot({hs, static_cast<std::size_t>(d)}, routed.row_span(ti[j]));
        }
        const std::vector<double> gamma = softmax(z);
        std::fill(o.begin(), o.end(), 0.0);
        for (int j = 0; j < K; ++j) {
            const int e = ti[j];
            const double a = dot({hs, static_cast<std::size_t>(d)}, model.bank.ffn_in.row_span(e));
            if (a <= 0.0) continue;
            const double w = gamma[j] * a;
            const double* v = model.bank.ffn_out.row(e);
            for (int t = 0; t < d; ++t) o[t] += w * v[t];
        }
        for (int k = 0; k < d_out; ++k) {
            double acc = 0.0;
            for (int t = 0; t < d; ++t) acc += o[t] * model.readout.at(t, k);
            pred[k] = acc;
        }
        const double* y = targets.row(s);
        for (int k = 0; k < d_out; ++k) {
            const double r = pred[k] - y[k];
            err += r * r;
        }
    }
    double loss = err / (static_cast<double>(S) * d_out);

    if (cfg.balance_weight > 0.0) {
        const std::vector<double> f = dispatch_fractions(frozen);
        const int C = frozen.num_candidates;
        std::vector<double> zc(C);
        double accum = 0.0;
        for (int s = 0; s < S; ++s) {
            const double* hs = h.row(s);
            const int* ci = frozen.token_candidates(s);
            for (int m = 0; m < C; ++m) {
                zc[m] = dot({hs, static_cast<std::size_t>(d)}, routed.row_span(ci[m]));
            }
            const std::vector<double> q = softmax(zc);
            for (int m = 0; m < C; ++m) accum += f[ci[m]] * q[m];
        }
        loss += cfg.balance_weight * frozen.num_experts * accum / S;
    }
    return loss;
}

void Gradients::add_scaled(const Gradients& other, double scale) {
    const auto axpy = [scale](Matrix& dst, const Matrix& src) {
        for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += scale * src.data[i];
    };
    axpy(encoder, other.encoder);
    axpy(readout, other.readout);
    axpy(centroids, other.centroids);
    axpy(ffn_in, other.ffn_in);
    axpy(ffn_out, other.ffn_out);
}

Gradients toy_gradients(const ToyModel& model, const ForwardPass& fw, const RouterConfig& cfg,
                        const Matrix& inputs, const Matrix& targets) {
    const RoutingResult& routing = fw.routing;
    const int S = routing.batch;
    const int K = routing.top_k;
    const int d = model.bank.dim;
    const int d_out = targets.cols;
    const int E = routing.num_experts;

    Gradients g;
    g.encoder = Matrix(model.encoder.rows, model.encoder.cols);
    g.readout = Matrix(model.readout.rows, model.readout.cols);
    g.centroids = Matrix(E, d);
    g.ffn_in = Matrix(E, d);
    g.ffn_out = Matrix(E, d);

    // dL/dpred for the mse term.
    Matrix g_pred(S, d_out);
    const double mse_scale = 2.0 / (static_cast<double>(S) * d_out);
    for (std::size_t i = 0; i < g_pred.data.size(); ++i) {
        g_pred.data[i] = mse_scale * (fw.pred.data[i] - targets.data[i]);
    }
    add_at_b(fw.moe_out, g_pred, g.readout);

    Matrix g_h(S, d);          // dL/dh, accumulated across both loss terms
    Matrix g_wtilde(E, d);     // dL/d(routed centroid), mapped through the
                               // projection Jacobian at the end
    const Matrix routed = model.bank.routed_centroids();

    std::vector<double> g_o(d), z(K), dgamma(K), dz(K), a(K);
    for (int s = 0; s < S; ++s) {
        const double* hs = fw.h.row(s);
        double* ghs = g_h.row(s);
        const int* ti = routing.token_topk(s);
        const double* tw = fw.routing.topk_weights.data() + static_cast<std::size_t>(s) * K;

        // g_o = g_pred . readout^T for this token
        const double* gps = g_pred.row(s);
        for (int t = 0; t < d; ++t) {
            double acc = 0.0;
            for (int k = 0; k < d_out; ++k) acc += gps[k] * model.readout.at(t, k);
            g_o[t] = acc;
        }

        for (int j = 0; j < K; ++j) {
            const int e = ti[j];
            a[j] = dot({hs, static_cast<std::size_t>(d)}, model.bank.ffn_in.row_span(e));
            const double r = a[j] > 0.0 ? a[j] : 0.0;
            const double vdot = dot({g_o.data(), static_cast<std::size_t>(d)},
                                    model.bank.ffn_out.row_span(e));
            dgamma[j] = r * vdot;

            // Expert FFN and token gradients through the relu path.
            double* gv = g.ffn_out.row(e);
            const double wo = tw[j] * r;
            if (wo != 0.0) {
                for (int t = 0; t < d; ++t) gv[t] += wo * g_o[t];
            }
            if (a[j] > 0.0) {
                const double da = tw[j] * vdot;
                double* gu = g.ffn_in.row(e);
                const double* u = model.bank.ffn_in.row(e);
                for (int t = 0; t < d; ++t) {
                    gu[t] += da * hs[t];
                    ghs[t] += da * u[t];
                }
            }
        }

        // Softmax backward over the K selected logits.
        double dot_gd = 0.0;
        for (int j = 0; j < K; ++j) dot_gd += tw[j] * dgamma[j];
        for (int j = 0; j < K; ++j) dz[j] = tw[j] * (dgamma[j] - dot_gd);
        for (int j = 0; j < K; ++j) {
            if (dz[j] == 0.0) continue;
            const int e = ti[j];
            const double* w = routed.row(e);
            double* gw = g_wtilde.row(e);
            for (int t = 0; t < d; ++t) {
                ghs[t] += dz[j] * w[t];
                gw[t] += dz[j] * hs[t];
            }
        }
    }

    // Balance-loss path: differentiates p_e, keeps f_e frozen.
    if (cfg.balance_weight > 0.0) {
        const std::vector<double> f = dispatch_fractions(routing);
        const int C = routing.num_candidates;
        std::vector<double> dzc(C);
        for (int s = 0; s < S; ++s) {
            const double* hs = fw.h.row(s);
            double* ghs = g_h.row(s);
            const int* ci = routing.token_candidates(s);
            const double* cs =
                routing.candidate_scores.data() + static_cast<std::size_t>(s) * C;
            const std::vector<double> q = softmax({cs, static_cast<std::size_t>(C)});

            double dot_qg = 0.0;
            for (int m = 0; m < C; ++m) {
                dot_qg += q[m] * f[ci[m]];
            }
            const double scale = cfg.balance_weight * E / S;
            for (int m = 0; m < C; ++m) {
                dzc[m] = scale * q[m] * (f[ci[m]] - dot_qg);
            }
            for (int m = 0; m < C; ++m) {
                if (dzc[m] == 0.0) continue;
                const int e = ci[m];
                const double* w = routed.row(e);
                double* gw = g_wtilde.row(e);
                for (int t = 0; t < d; ++t) {
                    ghs[t] += dzc[m] * w[t];
                    gw[t] += dzc[m] * hs[t];
                }
            }
        }
    }

    // Routed-centroid gradient back through the sphere projection.
    for (int e = 0; e < E; ++e) {
        const double* gw = g_wtilde.row(e);
        double* gc = g.centroids.row(e);
        if (!model.bank.normalize_centroids) {
            for (int t = 0; t < d; ++t) gc[t] = gw[t];
            continue;
        }
        const double nw = norm(model.bank.centroids.row_span(e));
        if (nw <= kDegenerateNorm) continue;  // projection is the constant e1 here
        const double* wt = routed.row(e);
        const double inner = dot({gw, static_cast<std::size_t>(d)},
                                 {wt, static_cast<std::size_t>(d)});
        for (int t = 0; t < d; ++t) gc[t] = (gw[t] - inner * wt[t]) / nw;
    }

    add_at_b(inputs, g_h, g.encoder);
    return g;
}

TrainResult train_loop(const SyntheticTask& task, const TrainConfig& cfg, RngStream& rng) {
    cfg.validate();
    if (task.d_in != cfg.d_in || task.d_out != cfg.d_out) {
        throw InvalidConfigError("trainer: task dimensions disagree with config");
    }

    RouterConfig rcfg = cfg.router;
    rcfg.training_mode = true;

    RngStream model_rng = rng.derive(kSiteModelInit);
    ToyModel model = make_toy_model(cfg.d_in, cfg.dim, cfg.d_out, rcfg.num_experts, model_rng,
                                    !cfg.no_projection);

    CodebookState cb;
    bool cb_ready = false;
    const auto ensure_codebook = [&](const Matrix& h) {
        if (cb_ready) return;
        RngStream init_rng = rng.derive(kSiteCodebookInit);
        cb = codebook_init(h, rcfg.num_codewords, init_rng, cfg.decay, cfg.dead_threshold,
                           cfg.euclidean);
        cb.frozen = cfg.static_codebook;
        cb_ready = true;
    };

    ShortlistCache cache;
    const RngStream sample_base = rng.derive(kSiteSample);
    const RngStream kmeans_base = rng.derive(kSiteKmeans);
    const RngStream route_base = rng.derive(kSiteRoute);

    TrainResult result;
    result.history.reserve(cfg.steps);

    const int S = cfg.micro_batch;
    const int E = rcfg.num_experts;
    const double fl_coarse = 2.0 * S * rcfg.num_codewords * cfg.dim;
    const double fl_fine = 2.0 * S * rcfg.shortlist_size * cfg.dim;
    const double fl_topk =
        flops_index(IndexKind::TopK, S, rcfg.shortlist_size, rcfg.top_k, 0);
    const double fl_softmax =
        flops_softmax(static_cast<std::int64_t>(S) * rcfg.top_k, rcfg.top_k, false);
    const double fl_refresh = 2.0 * static_cast<double>(E) * rcfg.num_codewords * cfg.dim;

    double flops_cum = 0.0;
    std::int64_t sample_cursor = 0;
    std::int64_t seen_rebuilds = 0;
    Matrix inputs, targets;

    // Cold-start the codebook from the first optimizer step's full token
    // window. The window is A micro-batches, so its content does not depend on
    // how it is sliced; that keeps accumulation-equivalence exact.
    if (cfg.steps > 0) {
        sample_task_batch(task, S * cfg.accum, 0, sample_base, &inputs, &targets);
        ensure_codebook(matmul(inputs, model.encoder));
    }

    for (int t = 0; t < cfg.steps; ++t) {
        Gradients acc;
        acc.encoder = Matrix(cfg.d_in, cfg.dim);
        acc.readout = Matrix(cfg.dim, cfg.d_out);
        acc.centroids = Matrix(E, cfg.dim);
        acc.ffn_in = Matrix(E, cfg.dim);
        acc.ffn_out = Matrix(E, cfg.dim);

        double loss_sum = 0.0;
        double aux_sum = 0.0;
        double overlap_sum = 0.0;
        double qerr_sum = 0.0;
        UsageStats window(E);

        for (int a = 0; a < cfg.accum; ++a) {
            const std::int64_t micro = static_cast<std::int64_t>(t) * cfg.accum + a;
            sample_task_batch(task, S, sample_cursor, sample_base, &inputs, &targets);
            sample_cursor += S;

            const Matrix h = matmul(inputs, model.encoder);
            ensure_codebook(h);
            if (!cb.frozen) {
                RngStream kr = kmeans_base.derive(static_cast<std::uint64_t>(micro));
                codebook_update(cb, h, kr);
            }
            qerr_sum += mean_quantization_error(cb, h);

            RngStream rr = route_base.derive(static_cast<std::uint64_t>(micro));
            const ForwardPass fw = toy_forward(model, cb, cache, rcfg, inputs, targets, rr);
            if (!std::isfinite(fw.total)) {
                throw DivergenceError("loss diverged at step " + std::to_string(t));
            }

            const Gradients grads = toy_gradients(model, fw, rcfg, inputs, targets);
            acc.add_scaled(grads, 1.0 / cfg.accum);

            loss_sum += fw.mse;
            aux_sum += fw.aux;
            const RoutingResult exact = exact_route(fw.h, model.bank, rcfg.top_k);
            overlap_sum += overlap_fraction(fw.routing, exact);
            window.accumulate(fw.routing);

            flops_cum += fl_coarse + fl_fine + fl_topk + fl_softmax;
            if (cache.rebuild_count > seen_rebuilds) {
                flops_cum += fl_refresh * (cache.rebuild_count - seen_rebuilds);
                seen_rebuilds = cache.rebuild_count;
            }
        }

        sgd_update(model.encoder, acc.encoder, cfg.lr);
        sgd_update(model.readout, acc.readout, cfg.lr);
        sgd_update(model.bank.centroids, acc.centroids, cfg.lr);
        sgd_update(model.bank.ffn_in, acc.ffn_in, cfg.lr);
        sgd_update(model.bank.ffn_out, acc.ffn_out, cfg.lr);
        invalidate_cache(cache);

        StepMetrics row;
        row.step = t;
        row.loss = loss_sum / cfg.accum;
        row.aux_loss = aux_sum / cfg.accum;
        row.overlap = overlap_sum / cfg.accum;
        row.dead_frac = dead_expert_fraction(window);
        row.entropy = usage_entropy(window);
        row.mean_quant_err = qerr_sum / cfg.accum;
        row.flops_cumulative = flops_cum;
        result.history.push_back(row);
    }

    result.cache_rebuilds = cache.rebuild_count;

    // Final evaluation: fresh tokens, jitter off, noise-free rebuilt index.
    const RngStream eval_base = rng.derive(kSiteEval);
    Matrix eval_x, eval_y;
    sample_task_batch(task, cfg.eval_tokens, 0, eval_base, &eval_x, &eval_y);
    if (!cb_ready) ensure_codebook(matmul(eval_x, model.encoder));

    RouterConfig ecfg = rcfg;
    ecfg.training_mode = false;
    RngStream er = rng.derive(kSiteEvalRoute);
    const ForwardPass fw = toy_forward(model, cb, cache, ecfg, eval_x, eval_y, er);
    const RoutingResult exact = exact_route(fw.h, model.bank, ecfg.top_k);
    UsageStats eval_usage(E);
    eval_usage.accumulate(fw.routing);

    result.final_eval.loss = fw.mse;
    result.final_eval.overlap = overlap_fraction(fw.routing, exact);
    result.final_eval.dead_frac = dead_expert_fraction(eval_usage);
    result.final_eval.entropy = usage_entropy(eval_usage);
    result.final_eval.mean_quant_err = mean_quantization_error(cb, fw.h);
    result.model = std::move(model);
    result.codebook = std::move(cb);
    return result;
}

}  // namespace airmoe
