#include "airmoe/run_config.hpp"

#include <cstdio>
#include <cstdlib>
#include <sstream>
#include <string>

#include "airmoe/errors.hpp"

namespace airmoe {
namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

long long parse_int(const std::string& key, const std::string& value) {
    std::size_t used = 0;
    long long v = 0;
    try {
        v = std::stoll(value, &used);
    } catch (const std::exception&) {
        throw InvalidConfigError("bad integer for '" + key + "': " + value);
    }
    if (used != value.size()) throw InvalidConfigError("bad integer for '" + key + "': " + value);
    return v;
}

double parse_real(const std::string& key, const std::string& value) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(value, &used);
    } catch (const std::exception&) {
        throw InvalidConfigError("bad number for '" + key + "': " + value);
    }
    if (used != value.size()) throw InvalidConfigError("bad number for '" + key + "': " + value);
    return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw InvalidConfigError("bad flag for '" + key + "': " + value + " (use true/false)");
}

std::string fmt_real(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

TrainConfig parse_run_config(const std::string& text) {
    TrainConfig cfg = default_train_config();
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const std::size_t eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw InvalidConfigError("line " + std::to_string(lineno) +
                                     ": expected key=value, got '" + stripped + "'");
        }
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        if (key.empty()) {
            throw InvalidConfigError("line " + std::to_string(lineno) + ": empty key");
        }

        if (key == "steps") cfg.steps = static_cast<int>(parse_int(key, value));
        else if (key == "accum") cfg.accum = static_cast<int>(parse_int(key, value));
        else if (key == "micro_batch") cfg.micro_batch = static_cast<int>(parse_int(key, value));
        else if (key == "lr") cfg.lr = parse_real(key, value);
        else if (key == "d_in") cfg.d_in = static_cast<int>(parse_int(key, value));
        else if (key == "d_out") cfg.d_out = static_cast<int>(parse_int(key, value));
        else if (key == "clusters") cfg.clusters = static_cast<int>(parse_int(key, value));
        else if (key == "noise_std") cfg.noise_std = parse_real(key, value);
        else if (key == "experts") cfg.router.num_experts = static_cast<int>(parse_int(key, value));
        else if (key == "codewords") cfg.router.num_codewords = static_cast<int>(parse_int(key, value));
        else if (key == "shortlist") cfg.router.shortlist_size = static_cast<int>(parse_int(key, value));
        else if (key == "top_k") cfg.router.top_k = static_cast<int>(parse_int(key, value));
        else if (key == "jitter_sigma") cfg.router.jitter_sigma = parse_real(key, value);
        else if (key == "balance_weight") cfg.router.balance_weight = parse_real(key, value);
        else if (key == "dim") cfg.dim = static_cast<int>(parse_int(key, value));
        else if (key == "decay") cfg.decay = parse_real(key, value);
        else if (key == "dead_threshold") cfg.dead_threshold = parse_real(key, value);
        else if (key == "no_projection") cfg.no_projection = parse_bool(key, value);
        else if (key == "static_codebook") cfg.static_codebook = parse_bool(key, value);
        else if (key == "euclidean") cfg.euclidean = parse_bool(key, value);
        else if (key == "eval_tokens") cfg.eval_tokens = static_cast<int>(parse_int(key, value));
        else throw InvalidConfigError("unknown key '" + key + "'");
    }
    return cfg;
}

TrainConfig load_run_config(const std::string& path) {
    std::FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw InvalidInputError("cannot open config '" + path + "'");
    std::string text;
    char buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof(buf), fp)) > 0) text.append(buf, n);
    std::fclose(fp);
    return parse_run_config(text);
}

std::string serialize_run_config(const TrainConfig& cfg) {
    std::ostringstream out;
    out << "steps = " << cfg.steps << "\n";
    out << "accum = " << cfg.accum << "\n";
    out << "micro_batch = " << cfg.micro_batch << "\n";
    out << "lr = " << fmt_real(cfg.lr) << "\n";
    out << "d_in = " << cfg.d_in << "\n";
    out << "d_out = " << cfg.d_out << "\n";
    out << "clusters = " << cfg.clusters << "\n";
    out << "noise_std = " << fmt_real(cfg.noise_std) << "\n";
    out << "experts = " << cfg.router.num_experts << "\n";
    out << "codewords = " << cfg.router.num_codewords << "\n";
    out << "shortlist = " << cfg.router.shortlist_size << "\n";
    out << "top_k = " << cfg.router.top_k << "\n";
    out << "jitter_sigma = " << fmt_real(cfg.router.jitter_sigma) << "\n";
    out << "balance_weight = " << fmt_real(cfg.router.balance_weight) << "\n";
    out << "dim = " << cfg.dim << "\n";
    out << "decay = " << fmt_real(cfg.decay) << "\n";
    out << "dead_threshold = " << fmt_real(cfg.dead_threshold) << "\n";
    out << "no_projection = " << (cfg.no_projection ? "true" : "false") << "\n";
    out << "static_codebook = " << (cfg.static_codebook ? "true" : "false") << "\n";
    out << "euclidean = " << (cfg.euclidean ? "true" : "false") << "\n";
    out << "eval_tokens = " << cfg.eval_tokens << "\n";
    return out.str();
}

}  // namespace airmoe
