#include "airmoe/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <bit>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "airmoe/analysis.hpp"
#include "airmoe/baselines.hpp"
#include "airmoe/codebook.hpp"
#include "airmoe/errors.hpp"
#include "airmoe/flops.hpp"
#include "airmoe/index_format.hpp"
#include "airmoe/router.hpp"
#include "airmoe/run_config.hpp"
#include "airmoe/trainer.hpp"

namespace airmoe {
namespace {

std::string fmt9(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

// CSV sink: --out path or stdout.
struct CsvOut {
    std::ofstream file;
    std::ostream* out = nullptr;

    explicit CsvOut(const std::string& path) {
        if (path.empty()) {
            out = &std::cout;
        } else {
            file.open(path, std::ios::binary);
            if (!file) throw InvalidInputError("cannot open '" + path + "' for writing");
            out = &file;
        }
    }
};

Matrix synthetic_unit_tokens(int count, int dim, const RngStream& base) {
    Matrix m(count, dim);
    for (int i = 0; i < count; ++i) {
        RngStream tr = base.derive(static_cast<std::uint64_t>(i));
        for (int j = 0; j < dim; ++j) m.at(i, j) = tr.next_gaussian();
        project_to_sphere_inplace(m.row_span(i));
    }
    return m;
}

Matrix read_tokens_bin(const std::string& path, int rows, int cols) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInputError("cannot open '" + path + "' for reading");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    const std::size_t expected = static_cast<std::size_t>(rows) * cols * 4;
    if (bytes.size() != expected) {
        throw FormatError("token file '" + path + "' holds " + std::to_string(bytes.size()) +
                          " bytes, expected " + std::to_string(expected));
    }
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.data.size(); ++i) {
        const std::uint32_t u = static_cast<std::uint32_t>(bytes[4 * i]) |
                                (static_cast<std::uint32_t>(bytes[4 * i + 1]) << 8) |
                                (static_cast<std::uint32_t>(bytes[4 * i + 2]) << 16) |
                                (static_cast<std::uint32_t>(bytes[4 * i + 3]) << 24);
        m.data[i] = static_cast<double>(std::bit_cast<float>(u));
    }
    return m;
}

Matrix read_tokens_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInputError("cannot open '" + path + "' for reading");
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) {
            try {
                std::size_t used = 0;
                row.push_back(std::stod(cell, &used));
                if (used != cell.size()) throw std::invalid_argument(cell);
            } catch (const std::exception&) {
                throw FormatError("token CSV '" + path + "': bad value '" + cell + "'");
            }
        }
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw FormatError("token CSV '" + path + "': ragged rows");
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw FormatError("token CSV '" + path + "' is empty");
    Matrix m(static_cast<int>(rows.size()), static_cast<int>(rows.front().size()));
    for (int i = 0; i < m.rows; ++i) {
        std::copy(rows[i].begin(), rows[i].end(), m.row(i));
    }
    return m;
}

struct TokenSource {
    std::string bin_path;
    std::string dims;  // "S,d" for the binary reader
    std::string csv_path;
    int synthetic = 0;

    Matrix load(int dim, const RngStream& rng) const {
        const int given = (!bin_path.empty() ? 1 : 0) + (!csv_path.empty() ? 1 : 0) +
                          (synthetic > 0 ? 1 : 0);
        if (given != 1) {
            throw InvalidConfigError(
                "exactly one of --tokens, --tokens-csv, --synthetic is required");
        }
        Matrix m;
        if (!bin_path.empty()) {
            int rows = 0;
            int cols = 0;
            if (std::sscanf(dims.c_str(), "%d,%d", &rows, &cols) != 2 || rows < 1 || cols < 1) {
                throw InvalidConfigError("--dims must be S,d with positive integers");
            }
            m = read_tokens_bin(bin_path, rows, cols);
        } else if (!csv_path.empty()) {
            m = read_tokens_csv(csv_path);
        } else {
            m = synthetic_unit_tokens(synthetic, dim, rng);
        }
        if (m.cols != dim) {
            throw InvalidInputError("token dimension " + std::to_string(m.cols) +
                                    " does not match index dimension " + std::to_string(dim));
        }
        require_finite({m.data.data(), m.data.size()}, "input tokens");
        return m;
    }
};

void add_token_source(CLI::App* cmd, TokenSource& src) {
    cmd->add_option("--tokens", src.bin_path, "headerless float32 little-endian token matrix");
    cmd->add_option("--dims", src.dims, "S,d shape of the --tokens file");
    cmd->add_option("--tokens-csv", src.csv_path, "token matrix as CSV rows");
    cmd->add_option("--synthetic", src.synthetic, "generate this many random unit tokens");
}

void print_ledger_table(const FlopLedger& ledger) {
    for (const FlopEntry& e : ledger.entries) {
        std::fprintf(stderr, "  %-20s %18s%s\n", e.label.c_str(), fmt9(e.flops).c_str(),
                     e.matmul ? "  [matmul]" : "");
    }
    std::fprintf(stderr, "  %-20s %18s\n", "matmul_subtotal", fmt9(ledger.matmul_total).c_str());
    std::fprintf(stderr, "  %-20s %18s\n", "total", fmt9(ledger.total).c_str());
}

void write_ledger_csv(const FlopLedger& ledger, std::ostream& out) {
    out << "label,flops\n";
    for (const FlopEntry& e : ledger.entries) out << e.label << "," << fmt9(e.flops) << "\n";
    out << "matmul_subtotal," << fmt9(ledger.matmul_total) << "\n";
    out << "total," << fmt9(ledger.total) << "\n";
}

struct FlopsOptions {
    std::string router = "air";
    std::int64_t E = 0, G = 0, M = 0, K = 0, l = 1, S = 0, d = 0;
    std::int64_t amortization = 0;
    std::string out;
};

void cmd_flops(const FlopsOptions& o) {
    RouterKind kind = RouterKind::Air;
    if (o.router == "standard") kind = RouterKind::Standard;
    else if (o.router == "hierarchical") kind = RouterKind::Hierarchical;

    RouterFlopParams p;
    p.tokens = o.S;
    p.experts = o.E;
    p.codewords = o.G;
    p.shortlist = o.M;
    p.top_k = o.K;
    p.clusters_selected = o.l;
    p.dim = o.d;
    p.amortization_tokens = o.amortization;

    const FlopLedger ledger = router_flop_ledger(kind, p);
    std::fprintf(stderr, "%s router, S=%lld d=%lld:\n", o.router.c_str(),
                 static_cast<long long>(o.S), static_cast<long long>(o.d));
    print_ledger_table(ledger);
    CsvOut sink(o.out);
    write_ledger_csv(ledger, *sink.out);
}

struct IndexBuildOptions {
    std::string index;
    int E = 256, G = 16, M = 32, d = 16;
    int tokens = 4096;
    int updates = 10;
    std::uint64_t seed = 0;
    bool no_normalize = false;
    bool euclidean = false;
};

void cmd_index_build(const IndexBuildOptions& o) {
    RngStream rng(o.seed);
    RngStream bank_rng = rng.derive(1);
    const ExpertBank bank = make_expert_bank(o.E, o.d, bank_rng, !o.no_normalize);
    const Matrix tokens = synthetic_unit_tokens(o.tokens, o.d, rng.derive(2));

    RngStream cb_rng = rng.derive(3);
    CodebookState cb = codebook_init(tokens, o.G, cb_rng, 0.95, 1.0, o.euclidean);
    const RngStream update_base = rng.derive(4);
    for (int r = 0; r < o.updates; ++r) {
        RngStream ur = update_base.derive(static_cast<std::uint64_t>(r));
        codebook_update(cb, tokens, ur);
    }

    RouterConfig rc;
    rc.num_codewords = o.G;
    rc.num_experts = o.E;
    rc.shortlist_size = o.M;
    rc.top_k = 1;
    rc.training_mode = false;  // noise-free index
    rc.validate();
    RngStream rr = rng.derive(5);
    const ShortlistCache cache = refresh_shortlists(cb, bank, rc, rr);

    const IndexFile file = capture_index(cb, bank, cache);
    save_index(file, o.index);
    const std::vector<std::uint8_t> bytes = serialize_index(file);
    std::fprintf(stderr, "wrote %s: d=%d G=%d E=%d M=%d (%zu bytes)\n", o.index.c_str(), o.d,
                 o.G, o.E, o.M, bytes.size());
}

struct RouteOptions {
    std::string index;
    TokenSource src;
    int K = 0;
    bool exact = false;
    int threads = 1;
    std::uint64_t seed = 0;
    std::string out;
};

void cmd_route(const RouteOptions& o) {
    const IndexFile file = load_index(o.index);
    CodebookState cb;
    ExpertBank bank;
    ShortlistCache cache;
    restore_index(file, 0.95, 1.0, &cb, &bank, &cache);

    RngStream rng(o.seed);
    const Matrix tokens = o.src.load(bank.dim, rng.derive(1));

    const int M = cache.shortlist_size;
    const int K = o.K > 0 ? o.K : std::min(8, o.exact ? bank.num_experts : M);

    RoutingResult result;
    RngStream route_rng = rng.derive(2);
    if (o.exact) {
        result = exact_route(tokens, bank, K);
    } else {
        RouterConfig rc;
        rc.num_codewords = cb.size;
        rc.num_experts = bank.num_experts;
        rc.shortlist_size = M;
        rc.top_k = K;
        rc.training_mode = false;
        rc.validate();
        result = o.threads > 1
                     ? air_route_parallel(tokens, bank, cb, cache, rc, route_rng, o.threads)
                     : air_route(tokens, bank, cb, cache, rc, route_rng);
    }

    CsvOut sink(o.out);
    *sink.out << "token,slot,expert,score,weight\n";
    for (int s = 0; s < result.batch; ++s) {
        for (int j = 0; j < result.top_k; ++j) {
            const std::size_t i = static_cast<std::size_t>(s) * result.top_k + j;
            *sink.out << s << "," << j << "," << result.topk_indices[i] << ","
                      << fmt9(result.topk_scores[i]) << "," << fmt9(result.topk_weights[i])
                      << "\n";
        }
    }
    std::fprintf(stderr, "routed %d tokens (K=%d, candidates per token=%d, %s)\n", result.batch,
                 result.top_k, result.num_candidates, o.exact ? "exact" : "air");
}

struct VerifyBoundOptions {
    std::string index;
    TokenSource src;
    std::uint64_t seed = 0;
    std::string out;
};

void cmd_verify_bound(const VerifyBoundOptions& o) {
    const IndexFile file = load_index(o.index);
    CodebookState cb;
    ExpertBank bank;
    ShortlistCache cache;
    restore_index(file, 0.95, 1.0, &cb, &bank, &cache);
    if (!bank.normalize_centroids) {
        throw InvalidConfigError(
            "bound precondition violated: index was built without centroid normalization");
    }

    RngStream rng(o.seed);
    const Matrix tokens = o.src.load(bank.dim, rng.derive(1));

    CsvOut sink(o.out);
    *sink.out << "token,mass_recall,eps,rho_m,lower_bound,margin,holds\n";
    int violations = 0;
    double min_margin = 0.0;
    bool first = true;
    for (int s = 0; s < tokens.rows; ++s) {
        const BoundReport rep = check_bound(tokens.row_span(s), cb, cache, bank);
        if (!rep.holds) ++violations;
        if (first || rep.margin < min_margin) min_margin = rep.margin;
        first = false;
        *sink.out << s << "," << fmt9(rep.mass_recall) << "," << fmt9(rep.eps_h) << ","
                  << fmt9(rep.rho_m) << "," << fmt9(rep.lower_bound) << "," << fmt9(rep.margin)
                  << "," << (rep.holds ? 1 : 0) << "\n";
    }
    std::fprintf(stderr, "checked %d tokens: violations=%d min_margin=%s\n", tokens.rows,
                 violations, fmt9(min_margin).c_str());
    if (violations > 0) {
        throw DivergenceError("mass-recall bound violated for " + std::to_string(violations) +
                              " of " + std::to_string(tokens.rows) + " tokens");
    }
}

struct BenchOptions {
    int E = 256, G = 16, M = 16, K = 8, l = 1, S = 4096, d = 32;
    int updates = 5;
    int threads = 1;
    std::int64_t amortization = 0;
    bool allow_unfair = false;
    std::uint64_t seed = 0;
    std::string out;
};

void cmd_bench(const BenchOptions& o) {
    RouterConfig rcfg;
    rcfg.num_codewords = o.G;
    rcfg.num_experts = o.E;
    rcfg.shortlist_size = o.M;
    rcfg.top_k = o.K;
    rcfg.training_mode = false;

    HierarchicalConfig hcfg;
    hcfg.num_clusters = o.G;
    hcfg.clusters_selected = o.l;
    hcfg.top_k = o.K;

    const FairnessReport fairness = validate_fairness(rcfg, hcfg);
    for (const std::string& v : fairness.violations) {
        std::fprintf(stderr, "fairness: %s\n", v.c_str());
    }
    for (const std::string& w : fairness.warnings) {
        std::fprintf(stderr, "fairness warning: %s\n", w.c_str());
    }
    if (!fairness.ok() && !o.allow_unfair) {
        throw InvalidConfigError("unfair comparison: " + fairness.violations.front());
    }
    rcfg.validate();

    RngStream rng(o.seed);
    RngStream bank_rng = rng.derive(1);
    const ExpertBank bank = make_expert_bank(o.E, o.d, bank_rng, true);
    const Matrix tokens = synthetic_unit_tokens(o.S, o.d, rng.derive(2));

    RngStream cb_rng = rng.derive(3);
    CodebookState cb = codebook_init(tokens, o.G, cb_rng, 0.95, 1.0, false);
    const RngStream update_base = rng.derive(4);
    for (int r = 0; r < o.updates; ++r) {
        RngStream ur = update_base.derive(static_cast<std::uint64_t>(r));
        codebook_update(cb, tokens, ur);
    }
    ShortlistCache cache;

    const auto time_ms = [](const auto& fn) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const auto t1 = std::chrono::steady_clock::now();
        return std::chrono::duration<double, std::milli>(t1 - t0).count();
    };

    RoutingResult air, exact, hier;
    RngStream air_rng = rng.derive(5);
    const double air_ms = time_ms([&] {
        air = o.threads > 1 ? air_route_parallel(tokens, bank, cb, cache, rcfg, air_rng, o.threads)
                            : air_route(tokens, bank, cb, cache, rcfg, air_rng);
    });
    const double exact_ms = time_ms([&] { exact = exact_route(tokens, bank, o.K); });

    bool have_hier = true;
    double hier_ms = 0.0;
    std::string hier_skip;
    RngStream hier_rng = rng.derive(6);
    try {
        hier_ms = time_ms([&] { hier = hierarchical_route(tokens, bank, hcfg, 0.0, hier_rng); });
    } catch (const InvalidConfigError& e) {
        have_hier = false;
        hier_skip = e.what();
    }

    RouterFlopParams p;
    p.tokens = o.S;
    p.experts = o.E;
    p.codewords = o.G;
    p.shortlist = o.M;
    p.top_k = o.K;
    p.clusters_selected = o.l;
    p.dim = o.d;
    p.amortization_tokens = o.amortization > 0 ? o.amortization : o.S;
    const FlopLedger air_fl = router_flop_ledger(RouterKind::Air, p);
    const FlopLedger std_fl = router_flop_ledger(RouterKind::Standard, p);

    CsvOut sink(o.out);
    *sink.out << "router,wall_ms,overlap,total_flops,matmul_flops\n";
    *sink.out << "air," << fmt9(air_ms) << "," << fmt9(overlap_fraction(air, exact)) << ","
              << fmt9(air_fl.total) << "," << fmt9(air_fl.matmul_total) << "\n";
    *sink.out << "standard," << fmt9(exact_ms) << "," << fmt9(1.0) << "," << fmt9(std_fl.total)
              << "," << fmt9(std_fl.matmul_total) << "\n";
    if (have_hier) {
        const FlopLedger hier_fl = router_flop_ledger(RouterKind::Hierarchical, p);
        *sink.out << "hierarchical," << fmt9(hier_ms) << ","
                  << fmt9(overlap_fraction(hier, exact)) << "," << fmt9(hier_fl.total) << ","
                  << fmt9(hier_fl.matmul_total) << "\n";
    } else {
        std::fprintf(stderr, "hierarchical skipped: %s\n", hier_skip.c_str());
    }
}

struct TrainToyOptions {
    std::string config;
    std::uint64_t seed = 0;
    std::string out;
    std::string save_index;
    int steps = -1;
    bool static_codebook = false;
    bool euclidean = false;
    bool no_projection = false;
};

void cmd_train_toy(const TrainToyOptions& o) {
    TrainConfig cfg = o.config.empty() ? default_train_config() : load_run_config(o.config);
    if (o.steps >= 0) cfg.steps = o.steps;
    if (o.static_codebook) cfg.static_codebook = true;
    if (o.euclidean) cfg.euclidean = true;
    if (o.no_projection) cfg.no_projection = true;
    cfg.validate();

    RngStream rng(o.seed);
    RngStream task_rng = rng.derive(100);
    const SyntheticTask task =
        make_synthetic_task(cfg.d_in, cfg.d_out, cfg.clusters, cfg.noise_std, task_rng);
    RngStream train_rng = rng.derive(200);
    const TrainResult result = train_loop(task, cfg, train_rng);

    CsvOut sink(o.out);
    *sink.out << "step,loss,aux_loss,overlap,dead_frac,entropy,quant_err,flops_cum\n";
    for (const StepMetrics& row : result.history) {
        *sink.out << row.step << "," << fmt9(row.loss) << "," << fmt9(row.aux_loss) << ","
                  << fmt9(row.overlap) << "," << fmt9(row.dead_frac) << "," << fmt9(row.entropy)
                  << "," << fmt9(row.mean_quant_err) << "," << fmt9(row.flops_cumulative) << "\n";
    }
    std::fprintf(stderr,
                 "final_eval: loss=%s overlap=%s dead_frac=%s entropy=%s quant_err=%s "
                 "cache_rebuilds=%lld\n",
                 fmt9(result.final_eval.loss).c_str(), fmt9(result.final_eval.overlap).c_str(),
                 fmt9(result.final_eval.dead_frac).c_str(),
                 fmt9(result.final_eval.entropy).c_str(),
                 fmt9(result.final_eval.mean_quant_err).c_str(),
                 static_cast<long long>(result.cache_rebuilds));

    if (!o.save_index.empty()) {
        RouterConfig ecfg = cfg.router;
        ecfg.training_mode = false;
        RngStream ir = rng.derive(300);
        const ShortlistCache cache =
            refresh_shortlists(result.codebook, result.model.bank, ecfg, ir);
        save_index(capture_index(result.codebook, result.model.bank, cache), o.save_index);
        std::fprintf(stderr, "wrote index %s\n", o.save_index.c_str());
    }
}

}  // namespace

int run_command(const std::vector<std::string>& args) {
    CLI::App app{"two-stage inverted-index MoE routing tools"};
    app.require_subcommand(1);

    FlopsOptions fo;
    CLI::App* flops_cmd = app.add_subcommand("flops", "analytical routing FLOP ledger");
    flops_cmd->add_option("--router", fo.router, "router kind")
        ->check(CLI::IsMember({"air", "standard", "hierarchical"}));
    flops_cmd->add_option("--E", fo.E, "number of experts")->required();
    flops_cmd->add_option("--G", fo.G, "number of codewords / clusters");
    flops_cmd->add_option("--M", fo.M, "shortlist size");
    flops_cmd->add_option("--K", fo.K, "active experts per token")->required();
    flops_cmd->add_option("--l", fo.l, "clusters selected (hierarchical)");
    flops_cmd->add_option("--S", fo.S, "tokens per batch")->required();
    flops_cmd->add_option("--d", fo.d, "routing dimension")->required();
    flops_cmd->add_option("--amortization", fo.amortization,
                          "tokens the refresh amortizes over (default: the batch itself)");
    flops_cmd->add_option("--out", fo.out, "CSV output path (default stdout)");
    flops_cmd->callback([&fo] { cmd_flops(fo); });

    CLI::App* index_cmd = app.add_subcommand("index", "index persistence");
    index_cmd->require_subcommand(1);
    IndexBuildOptions ibo;
    CLI::App* build_cmd = index_cmd->add_subcommand("build", "build an index on synthetic data");
    build_cmd->add_option("--index", ibo.index, "output index path")->required();
    build_cmd->add_option("--E", ibo.E, "number of experts");
    build_cmd->add_option("--G", ibo.G, "number of codewords");
    build_cmd->add_option("--M", ibo.M, "shortlist size");
    build_cmd->add_option("--d", ibo.d, "routing dimension");
    build_cmd->add_option("--tokens", ibo.tokens, "synthetic token count for clustering");
    build_cmd->add_option("--updates", ibo.updates, "codebook update rounds");
    build_cmd->add_option("--seed", ibo.seed, "RNG seed")->required();
    build_cmd->add_flag("--no-normalize", ibo.no_normalize, "keep expert centroids raw");
    build_cmd->add_flag("--euclidean", ibo.euclidean, "Euclidean codeword assignment");
    build_cmd->callback([&ibo] { cmd_index_build(ibo); });

    RouteOptions ro;
    CLI::App* route_cmd = app.add_subcommand("route", "route tokens through a saved index");
    route_cmd->add_option("--index", ro.index, "index path")->required();
    add_token_source(route_cmd, ro.src);
    route_cmd->add_option("--K", ro.K, "active experts per token (default min(8, M))");
    route_cmd->add_flag("--exact", ro.exact, "use the exact full-scoring oracle");
    route_cmd->add_option("--threads", ro.threads, "worker threads");
    route_cmd->add_option("--seed", ro.seed, "RNG seed")->required();
    route_cmd->add_option("--out", ro.out, "CSV output path (default stdout)");
    route_cmd->callback([&ro] { cmd_route(ro); });

    VerifyBoundOptions vo;
    CLI::App* verify_cmd =
        app.add_subcommand("verify-bound", "check the mass-recall lower bound per token");
    verify_cmd->add_option("--index", vo.index, "index path")->required();
    add_token_source(verify_cmd, vo.src);
    verify_cmd->add_option("--seed", vo.seed, "RNG seed")->required();
    verify_cmd->add_option("--out", vo.out, "CSV output path (default stdout)");
    verify_cmd->callback([&vo] { cmd_verify_bound(vo); });

    BenchOptions bo;
    CLI::App* bench_cmd = app.add_subcommand("bench", "compare routers on one synthetic workload");
    bench_cmd->add_option("--E", bo.E, "number of experts");
    bench_cmd->add_option("--G", bo.G, "number of codewords / clusters");
    bench_cmd->add_option("--M", bo.M, "shortlist size");
    bench_cmd->add_option("--K", bo.K, "active experts per token");
    bench_cmd->add_option("--l", bo.l, "clusters selected (hierarchical)");
    bench_cmd->add_option("--S", bo.S, "tokens");
    bench_cmd->add_option("--d", bo.d, "routing dimension");
    bench_cmd->add_option("--updates", bo.updates, "codebook update rounds");
    bench_cmd->add_option("--threads", bo.threads, "worker threads");
    bench_cmd->add_option("--amortization", bo.amortization, "refresh amortization tokens");
    bench_cmd->add_flag("--allow-unfair", bo.allow_unfair, "run despite fairness violations");
    bench_cmd->add_option("--seed", bo.seed, "RNG seed")->required();
    bench_cmd->add_option("--out", bo.out, "CSV output path (default stdout)");
    bench_cmd->callback([&bo] { cmd_bench(bo); });

    TrainToyOptions to;
    CLI::App* train_cmd = app.add_subcommand("train-toy", "desk-scale bi-level training loop");
    train_cmd->add_option("--config", to.config, "key=value run config file");
    train_cmd->add_option("--seed", to.seed, "RNG seed")->required();
    train_cmd->add_option("--steps", to.steps, "override step count");
    train_cmd->add_flag("--static-codebook", to.static_codebook, "freeze the codebook after init");
    train_cmd->add_flag("--euclidean", to.euclidean, "Euclidean codeword assignment");
    train_cmd->add_flag("--no-projection", to.no_projection, "keep expert centroids raw");
    train_cmd->add_option("--out", to.out, "CSV output path (default stdout)");
    train_cmd->add_option("--save-index", to.save_index, "write the final index here");
    train_cmd->callback([&to] { cmd_train_toy(to); });

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const InvalidConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const DivergenceError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return 0;
}

}  // namespace airmoe
