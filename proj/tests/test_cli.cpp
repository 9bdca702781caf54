#include <doctest.h>

#include <fcntl.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "airmoe/cli.hpp"
#include "airmoe/flops.hpp"

using namespace airmoe;
namespace fs = std::filesystem;

namespace {

const fs::path& work_dir() {
    static const fs::path dir = [] {
        fs::path p = fs::temp_directory_path() / ("airmoe_cli_" + std::to_string(::getpid()));
        fs::create_directories(p);
        return p;
    }();
    return dir;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) out.push_back(line);
    return out;
}

// The commands report progress with fprintf(stderr, ...), so capture at the
// file-descriptor level rather than through std::cerr.
struct StderrCapture {
    int saved = -1;
    fs::path path;

    StderrCapture() {
        path = work_dir() / "stderr.txt";
        std::fflush(stderr);
        saved = ::dup(2);
        const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
        REQUIRE(fd >= 0);
        ::dup2(fd, 2);
        ::close(fd);
    }
    std::string finish() {
        std::fflush(stderr);
        ::dup2(saved, 2);
        ::close(saved);
        saved = -1;
        return slurp(path);
    }
    ~StderrCapture() {
        if (saved >= 0) {
            ::dup2(saved, 2);
            ::close(saved);
        }
    }
};

int run_quiet(const std::vector<std::string>& args, std::string* err = nullptr) {
    StderrCapture cap;
    const int rc = run_command(args);
    const std::string text = cap.finish();
    if (err) *err = text;
    return rc;
}

}  // namespace

TEST_CASE("flops subcommand writes the ledger as CSV") {
    const fs::path out = work_dir() / "flops.csv";
    const int rc = run_quiet({"flops", "--router", "air", "--E", "512", "--G", "16", "--M", "32",
                              "--K", "8", "--S", "256", "--d", "64", "--amortization", "256",
                              "--out", out.string()});
    REQUIRE(rc == 0);

    const std::vector<std::string> rows = lines_of(slurp(out));
    REQUIRE(rows.size() >= 4);
    CHECK(rows.front() == "label,flops");
    CHECK(rows[rows.size() - 2].rfind("matmul_subtotal,", 0) == 0);
    CHECK(rows.back().rfind("total,", 0) == 0);

    RouterFlopParams p;
    p.tokens = 256;
    p.experts = 512;
    p.codewords = 16;
    p.shortlist = 32;
    p.top_k = 8;
    p.dim = 64;
    p.amortization_tokens = 256;
    const FlopLedger ledger = router_flop_ledger(RouterKind::Air, p);
    // The CSV carries 9 significant digits.
    const double reported = std::stod(rows.back().substr(std::string("total,").size()));
    CHECK(reported == doctest::Approx(ledger.total).epsilon(2e-8));

    std::string labels;
    for (const std::string& r : rows) labels += r + "\n";
    for (const char* want : {"coarse_assignment", "shortlist_refresh", "fine_scoring", "topk",
                             "softmax"}) {
        CHECK(labels.find(want) != std::string::npos);
    }
}

TEST_CASE("usage errors exit with code 1") {
    CHECK(run_quiet({}) == 1);
    CHECK(run_quiet({"frobnicate"}) == 1);
    CHECK(run_quiet({"flops", "--E", "8"}) == 1);            // missing required options
    CHECK(run_quiet({"route", "--no-such-flag"}) == 1);
}

TEST_CASE("index build, route, verify-bound round trip") {
    const fs::path idx = work_dir() / "toy.idx";
    REQUIRE(run_quiet({"index", "build", "--index", idx.string(), "--E", "32", "--G", "4", "--M",
                       "8", "--d", "16", "--tokens", "512", "--updates", "5", "--seed", "7"}) ==
            0);
    REQUIRE(fs::exists(idx));

    const fs::path route_csv = work_dir() / "route.csv";
    REQUIRE(run_quiet({"route", "--index", idx.string(), "--synthetic", "40", "--K", "4",
                       "--seed", "9", "--out", route_csv.string()}) == 0);
    const std::vector<std::string> rows = lines_of(slurp(route_csv));
    REQUIRE(rows.size() == 1 + 40 * 4);
    CHECK(rows.front() == "token,slot,expert,score,weight");
    // Every expert id stays in range.
    for (std::size_t i = 1; i < rows.size(); ++i) {
        int token = -1, slot = -1, expert = -1;
        REQUIRE(std::sscanf(rows[i].c_str(), "%d,%d,%d", &token, &slot, &expert) == 3);
        CHECK(token == static_cast<int>((i - 1) / 4));
        CHECK(slot == static_cast<int>((i - 1) % 4));
        CHECK(expert >= 0);
        CHECK(expert < 32);
    }

    const fs::path exact_csv = work_dir() / "route_exact.csv";
    REQUIRE(run_quiet({"route", "--index", idx.string(), "--synthetic", "40", "--K", "4",
                       "--exact", "--seed", "9", "--out", exact_csv.string()}) == 0);
    CHECK(lines_of(slurp(exact_csv)).size() == 1 + 40 * 4);

    const fs::path vb_csv = work_dir() / "bound.csv";
    std::string err;
    REQUIRE(run_quiet({"verify-bound", "--index", idx.string(), "--synthetic", "64", "--seed",
                       "11", "--out", vb_csv.string()},
                      &err) == 0);
    const std::vector<std::string> vb = lines_of(slurp(vb_csv));
    REQUIRE(vb.size() == 1 + 64);
    CHECK(vb.front() == "token,mass_recall,eps,rho_m,lower_bound,margin,holds");
    for (std::size_t i = 1; i < vb.size(); ++i) {
        CHECK(vb[i].back() == '1');  // bound holds for every token
    }
    CHECK(err.find("violations=0") != std::string::npos);
}

TEST_CASE("route output is identical across thread counts") {
    const fs::path idx = work_dir() / "threads.idx";
    REQUIRE(run_quiet({"index", "build", "--index", idx.string(), "--E", "24", "--G", "3", "--M",
                       "6", "--d", "8", "--tokens", "256", "--seed", "21"}) == 0);
    const fs::path one = work_dir() / "route_t1.csv";
    const fs::path many = work_dir() / "route_t3.csv";
    REQUIRE(run_quiet({"route", "--index", idx.string(), "--synthetic", "33", "--K", "3",
                       "--threads", "1", "--seed", "5", "--out", one.string()}) == 0);
    REQUIRE(run_quiet({"route", "--index", idx.string(), "--synthetic", "33", "--K", "3",
                       "--threads", "3", "--seed", "5", "--out", many.string()}) == 0);
    CHECK(slurp(one) == slurp(many));
}

TEST_CASE("corrupted index exits with code 3") {
    const fs::path idx = work_dir() / "corrupt.idx";
    REQUIRE(run_quiet({"index", "build", "--index", idx.string(), "--E", "16", "--G", "2", "--M",
                       "4", "--d", "8", "--tokens", "128", "--seed", "2"}) == 0);
    std::string bytes = slurp(idx);
    bytes[bytes.size() / 2] ^= 0x40;
    {
        std::ofstream out(idx, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    std::string err;
    CHECK(run_quiet({"route", "--index", idx.string(), "--synthetic", "4", "--seed", "1"}, &err) ==
          3);
    CHECK(run_quiet({"route", "--index", (work_dir() / "missing.idx").string(), "--synthetic",
                     "4", "--seed", "1"}) == 3);
}

TEST_CASE("token source validation maps to config and format exit codes") {
    const fs::path idx = work_dir() / "tokens.idx";
    REQUIRE(run_quiet({"index", "build", "--index", idx.string(), "--E", "16", "--G", "2", "--M",
                       "4", "--d", "4", "--tokens", "128", "--seed", "3"}) == 0);

    // No token source at all, then two sources at once: both config errors.
    CHECK(run_quiet({"route", "--index", idx.string(), "--seed", "1"}) == 2);
    const fs::path csv = work_dir() / "tok.csv";
    {
        std::ofstream out(csv);
        out << "1,0,0,0\n0,1,0,0\n";
    }
    CHECK(run_quiet({"route", "--index", idx.string(), "--tokens-csv", csv.string(),
                     "--synthetic", "4", "--seed", "1"}) == 2);
    // Correct source parses and routes.
    CHECK(run_quiet({"route", "--index", idx.string(), "--tokens-csv", csv.string(), "--seed",
                     "1", "--out", (work_dir() / "tok_route.csv").string()}) == 0);

    // Wrong width (input error) and ragged rows (format error) both exit 3.
    const fs::path narrow = work_dir() / "narrow.csv";
    {
        std::ofstream out(narrow);
        out << "0.5,0.25\n1,0\n";
    }
    CHECK(run_quiet({"route", "--index", idx.string(), "--tokens-csv", narrow.string(), "--seed",
                     "1"}) == 3);
    const fs::path ragged = work_dir() / "ragged.csv";
    {
        std::ofstream out(ragged);
        out << "1,0,0,0\n0,1\n";
    }
    CHECK(run_quiet({"route", "--index", idx.string(), "--tokens-csv", ragged.string(), "--seed",
                     "1"}) == 3);
}

TEST_CASE("bench rejects structurally unfair comparisons with exit 2") {
    std::string err;
    CHECK(run_quiet({"bench", "--E", "10", "--G", "3", "--seed", "1"}, &err) == 2);
    CHECK(err.find("E mod G = 0") != std::string::npos);
}

TEST_CASE("bench emits one row per router on a fair workload") {
    const fs::path out = work_dir() / "bench.csv";
    std::string err;
    REQUIRE(run_quiet({"bench", "--E", "16", "--G", "4", "--M", "4", "--K", "2", "--l", "1",
                       "--S", "64", "--d", "8", "--seed", "3", "--out", out.string()},
                      &err) == 0);
    const std::vector<std::string> rows = lines_of(slurp(out));
    REQUIRE(rows.size() == 4);
    CHECK(rows[0] == "router,wall_ms,overlap,total_flops,matmul_flops");
    CHECK(rows[1].rfind("air,", 0) == 0);
    CHECK(rows[2].rfind("standard,", 0) == 0);
    CHECK(rows[3].rfind("hierarchical,", 0) == 0);
    // The exact router always agrees with itself.
    std::stringstream ss(rows[2]);
    std::string cell;
    std::getline(ss, cell, ',');
    std::getline(ss, cell, ',');
    std::getline(ss, cell, ',');
    CHECK(cell == "1");
}

TEST_CASE("train-toy is deterministic for a fixed seed") {
    const fs::path cfg = work_dir() / "train.cfg";
    {
        std::ofstream out(cfg);
        out << "steps = 4\n"
               "micro_batch = 16\n"
               "eval_tokens = 128\n"
               "d_in = 6\n"
               "d_out = 3\n"
               "clusters = 4\n"
               "dim = 8\n"
               "experts = 16\n"
               "codewords = 4\n"
               "shortlist = 8\n"
               "top_k = 2\n";
    }
    const fs::path a = work_dir() / "train_a.csv";
    const fs::path b = work_dir() / "train_b.csv";
    std::string err_a, err_b;
    REQUIRE(run_quiet({"train-toy", "--config", cfg.string(), "--seed", "12", "--out", a.string()},
                      &err_a) == 0);
    REQUIRE(run_quiet({"train-toy", "--config", cfg.string(), "--seed", "12", "--out", b.string()},
                      &err_b) == 0);
    CHECK(slurp(a) == slurp(b));
    CHECK(err_a == err_b);
    CHECK(err_a.find("final_eval:") != std::string::npos);

    const std::vector<std::string> rows = lines_of(slurp(a));
    REQUIRE(rows.size() == 1 + 4);
    CHECK(rows.front() == "step,loss,aux_loss,overlap,dead_frac,entropy,quant_err,flops_cum");

    // A different seed changes the trajectory.
    const fs::path c = work_dir() / "train_c.csv";
    REQUIRE(run_quiet({"train-toy", "--config", cfg.string(), "--seed", "13", "--out",
                       c.string()}) == 0);
    CHECK(slurp(a) != slurp(c));
}

TEST_CASE("train-toy step override and saved index feed back into route") {
    const fs::path cfg = work_dir() / "train.cfg";  // written by the previous case
    REQUIRE(fs::exists(cfg));

    const fs::path empty_csv = work_dir() / "train_zero.csv";
    REQUIRE(run_quiet({"train-toy", "--config", cfg.string(), "--seed", "4", "--steps", "0",
                       "--out", empty_csv.string()}) == 0);
    CHECK(lines_of(slurp(empty_csv)).size() == 1);

    const fs::path idx = work_dir() / "trained.idx";
    REQUIRE(run_quiet({"train-toy", "--config", cfg.string(), "--seed", "4", "--steps", "2",
                       "--out", (work_dir() / "train_d.csv").string(), "--save-index",
                       idx.string()}) == 0);
    REQUIRE(fs::exists(idx));
    CHECK(run_quiet({"route", "--index", idx.string(), "--synthetic", "8", "--seed", "6", "--out",
                     (work_dir() / "trained_route.csv").string()}) == 0);
}

TEST_CASE("verify-bound refuses an unnormalized index") {
    const fs::path idx = work_dir() / "raw.idx";
    REQUIRE(run_quiet({"index", "build", "--index", idx.string(), "--E", "16", "--G", "2", "--M",
                       "4", "--d", "8", "--tokens", "128", "--seed", "5", "--no-normalize"}) ==
            0);
    std::string err;
    CHECK(run_quiet({"verify-bound", "--index", idx.string(), "--synthetic", "8", "--seed", "1"},
                    &err) == 2);
    CHECK(err.find("precondition") != std::string::npos);
}

TEST_CASE("bad run config exits with code 2") {
    const fs::path cfg = work_dir() / "bad.cfg";
    {
        std::ofstream out(cfg);
        out << "steps = seven\n";
    }
    CHECK(run_quiet({"train-toy", "--config", cfg.string(), "--seed", "1"}) == 2);
    CHECK(run_quiet({"train-toy", "--config", (work_dir() / "none.cfg").string(), "--seed",
                     "1"}) == 3);
}
