#pragma once

#include "argmax_bayes/experiments.hpp"
#include "argmax_bayes/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace argmax_bayes {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t");
    std::size_t b = s.find_last_not_of(" \t");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

inline nlohmann::json parse_toml_scalar(const std::string& raw) {
    const std::string v = trim(raw);
    if (v.empty()) throw ConfigError("config: empty value");
    if (v.front() == '"') {
        if (v.size() < 2 || v.back() != '"') throw ConfigError("config: unterminated string " + v);
        return v.substr(1, v.size() - 2);
    }
    if (v == "true") return true;
    if (v == "false") return false;
    try {
        if (v.find_first_of(".eE") == std::string::npos) return std::stol(v);
        return parse_double(v);
    } catch (...) {
        throw ConfigError("config: cannot parse value '" + v + "'");
    }
}

}  // namespace detail

/// Flat TOML subset: `key = value` lines with strings, booleans, numbers and
/// one-level arrays; # comments. Enough for experiment specs kept in
/// version control.
inline nlohmann::json parse_toml(std::istream& in) {
    nlohmann::json out = nlohmann::json::object();
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t hash = line.find('#');
        bool in_str = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') in_str = !in_str;
            if (line[i] == '#' && !in_str) {
                hash = i;
                break;
            }
        }
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[')
            throw ConfigError("config: TOML tables are not supported (line " +
                              std::to_string(lineno) + ")");
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: expected key = value at line " + std::to_string(lineno));
        std::string key = detail::trim(line.substr(0, eq));
        std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("config: empty key at line " + std::to_string(lineno));
        if (!value.empty() && value.front() == '[') {
            if (value.back() != ']')
                throw ConfigError("config: unterminated array at line " + std::to_string(lineno));
            nlohmann::json arr = nlohmann::json::array();
            std::string body = value.substr(1, value.size() - 2);
            std::stringstream ss(body);
            std::string item;
            while (std::getline(ss, item, ',')) {
                item = detail::trim(item);
                if (!item.empty()) arr.push_back(detail::parse_toml_scalar(item));
            }
            out[key] = std::move(arr);
        } else {
            out[key] = detail::parse_toml_scalar(value);
        }
    }
    return out;
}

inline nlohmann::json load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    if (path.size() >= 5 && path.substr(path.size() - 5) == ".json") {
        nlohmann::json j;
        try {
            in >> j;
        } catch (const std::exception& e) {
            throw ConfigError(std::string("config: JSON parse error: ") + e.what());
        }
        if (!j.is_object()) throw ConfigError("config: top level must be an object");
        return j;
    }
    return parse_toml(in);
}

/// Everything a CLI run needs: the experiment spec plus command extras.
struct RunConfig {
    ExperimentSpec spec;
    std::string method = "two_stage_bayes";  // or single_bayes / two_stage_freq / all
    std::string data_csv;                    // optional external dataset
    int grid_eval = 101;                     // resolution of exported surface grids
    long band_count = 500;                   // paths behind each band radius
    nlohmann::json resolved;                 // effective settings snapshot
};

namespace detail {

template <typename T>
T get_number(const nlohmann::json& v, const std::string& key) {
    if (!v.is_number()) throw ConfigError("config: key '" + key + "' must be a number");
    return v.get<T>();
}

inline std::vector<double> get_double_list(const nlohmann::json& v, const std::string& key) {
    if (!v.is_array()) throw ConfigError("config: key '" + key + "' must be an array");
    std::vector<double> out;
    for (const auto& e : v) {
        if (!e.is_number()) throw ConfigError("config: key '" + key + "' must hold numbers");
        out.push_back(e.get<double>());
    }
    return out;
}

inline std::vector<int> get_int_list(const nlohmann::json& v, const std::string& key) {
    if (!v.is_array()) throw ConfigError("config: key '" + key + "' must be an array");
    std::vector<int> out;
    for (const auto& e : v) {
        if (!e.is_number_integer()) throw ConfigError("config: key '" + key + "' must hold integers");
        out.push_back(e.get<int>());
    }
    return out;
}

}  // namespace detail

/// Builds a RunConfig from merged settings, rejecting unknown keys. The
/// returned snapshot carries every effective value (defaults included).
inline RunConfig make_run_config(const nlohmann::json& merged) {
    RunConfig cfg;
    ExperimentSpec& spec = cfg.spec;
    std::set<std::string> known = {
        "design",        "midpoint_grid",    "sigma0",       "n1",
        "n2",            "replications",     "seed",         "method",
        "order",         "j_max",            "fix_j",        "fix_sigma_at_reference",
        "gamma",         "rho",              "rho_n",        "floor",
        "mu_samples",    "stage2_draws",     "argmax_grid",  "mode_grid",
        "refine_argmax",
        "reduced_quadratic", "sigma_policy", "beta1",        "beta2",
        "loess_spans",   "freq_delta",       "threads",      "data_csv",
        "grid_eval",     "band_count"};
    for (auto it = merged.begin(); it != merged.end(); ++it)
        if (!known.count(it.key())) throw ConfigError("config: unknown key '" + it.key() + "'");

    auto has = [&](const char* k) { return merged.contains(k); };
    if (has("design")) {
        std::string d = merged["design"].get<std::string>();
        if (d == "grid")
            spec.design = ExperimentSpec::Design::Grid;
        else if (d == "iid_uniform")
            spec.design = ExperimentSpec::Design::IidUniform;
        else
            throw ConfigError("config: design must be grid or iid_uniform");
    }
    if (has("midpoint_grid")) spec.midpoint_grid = merged["midpoint_grid"].get<bool>();
    if (has("sigma0")) spec.sigma0 = detail::get_number<double>(merged["sigma0"], "sigma0");
    if (has("n1")) spec.n1 = detail::get_number<long>(merged["n1"], "n1");
    if (has("n2")) spec.n2 = detail::get_number<long>(merged["n2"], "n2");
    if (has("replications"))
        spec.replications = detail::get_number<long>(merged["replications"], "replications");
    if (has("seed")) spec.master_seed = merged["seed"].get<std::uint64_t>();
    if (has("method")) {
        cfg.method = merged["method"].get<std::string>();
        static const std::set<std::string> ok = {"single_bayes", "two_stage_bayes",
                                                 "two_stage_freq", "all"};
        if (!ok.count(cfg.method)) throw ConfigError("config: unknown method " + cfg.method);
    }
    if (has("order")) {
        if (merged["order"].is_array())
            spec.orders = detail::get_int_list(merged["order"], "order");
        else
            spec.orders = std::vector<int>(2, detail::get_number<int>(merged["order"], "order"));
    }
    if (has("j_max")) spec.j_max = detail::get_number<int>(merged["j_max"], "j_max");
    if (has("fix_j")) spec.fix_j = detail::get_int_list(merged["fix_j"], "fix_j");
    if (has("fix_sigma_at_reference"))
        spec.fix_sigma_at_reference = merged["fix_sigma_at_reference"].get<bool>();
    if (has("gamma")) spec.gamma = detail::get_number<double>(merged["gamma"], "gamma");
    if (has("rho")) spec.rho = detail::get_number<double>(merged["rho"], "rho");
    if (has("rho_n")) spec.rho_n = detail::get_number<double>(merged["rho_n"], "rho_n");
    if (has("floor")) spec.floor_hw = detail::get_number<double>(merged["floor"], "floor");
    if (has("mu_samples"))
        spec.mu_samples = detail::get_number<long>(merged["mu_samples"], "mu_samples");
    if (has("stage2_draws"))
        spec.stage2_draws = detail::get_number<long>(merged["stage2_draws"], "stage2_draws");
    if (has("argmax_grid"))
        spec.argmax_grid = detail::get_number<int>(merged["argmax_grid"], "argmax_grid");
    if (has("mode_grid"))
        spec.mode_grid = detail::get_number<int>(merged["mode_grid"], "mode_grid");
    if (has("refine_argmax")) spec.refine_argmax = merged["refine_argmax"].get<bool>();
    if (has("reduced_quadratic")) spec.reduced_quadratic = merged["reduced_quadratic"].get<bool>();
    if (has("sigma_policy")) {
        std::string p = merged["sigma_policy"].get<std::string>();
        if (p == "stage2_only")
            spec.sigma_policy = SigmaPolicy::Stage2Only;
        else if (p == "weighted")
            spec.sigma_policy = SigmaPolicy::Weighted;
        else if (p == "hierarchical")
            spec.sigma_policy = SigmaPolicy::Hierarchical;
        else
            throw ConfigError("config: unknown sigma_policy " + p);
    }
    if (has("beta1")) spec.hyper.beta1 = detail::get_number<double>(merged["beta1"], "beta1");
    if (has("beta2")) spec.hyper.beta2 = detail::get_number<double>(merged["beta2"], "beta2");
    if (has("loess_spans")) spec.loess_spans = detail::get_double_list(merged["loess_spans"], "loess_spans");
    if (has("freq_delta")) spec.freq_delta = detail::get_double_list(merged["freq_delta"], "freq_delta");
    if (has("threads")) spec.threads = detail::get_number<int>(merged["threads"], "threads");
    if (has("data_csv")) cfg.data_csv = merged["data_csv"].get<std::string>();
    if (has("grid_eval")) cfg.grid_eval = detail::get_number<int>(merged["grid_eval"], "grid_eval");
    if (has("band_count")) cfg.band_count = detail::get_number<long>(merged["band_count"], "band_count");

    // effective-settings snapshot, defaults included
    nlohmann::json r;
    r["design"] = spec.design == ExperimentSpec::Design::Grid ? "grid" : "iid_uniform";
    r["midpoint_grid"] = spec.midpoint_grid;
    r["sigma0"] = spec.sigma0;
    r["n1"] = spec.n1;
    r["n2"] = spec.n2;
    r["replications"] = spec.replications;
    r["seed"] = spec.master_seed;
    r["method"] = cfg.method;
    r["order"] = spec.orders;
    r["j_max"] = spec.j_max;
    r["fix_j"] = spec.fix_j;
    r["fix_sigma_at_reference"] = spec.fix_sigma_at_reference;
    r["gamma"] = spec.gamma;
    r["rho"] = spec.rho;
    r["rho_n"] = spec.rho_n;
    r["floor"] = spec.floor_hw;
    r["mu_samples"] = spec.mu_samples;
    r["stage2_draws"] = spec.stage2_draws;
    r["argmax_grid"] = spec.argmax_grid;
    r["mode_grid"] = spec.mode_grid;
    r["refine_argmax"] = spec.refine_argmax;
    r["reduced_quadratic"] = spec.reduced_quadratic;
    r["sigma_policy"] = spec.sigma_policy == SigmaPolicy::Stage2Only ? "stage2_only"
                        : spec.sigma_policy == SigmaPolicy::Weighted ? "weighted"
                                                                     : "hierarchical";
    r["beta1"] = spec.hyper.beta1;
    r["beta2"] = spec.hyper.beta2;
    r["loess_spans"] = spec.loess_spans;
    r["freq_delta"] = spec.freq_delta;
    r["threads"] = spec.threads;
    r["data_csv"] = cfg.data_csv;
    r["grid_eval"] = cfg.grid_eval;
    r["band_count"] = cfg.band_count;
    cfg.resolved = std::move(r);
    return cfg;
}

/// Parses `key=value` CLI overrides on top of the config file contents.
inline nlohmann::json apply_overrides(nlohmann::json base,
                                      const std::vector<std::string>& overrides) {
    for (const auto& kv : overrides) {
        std::size_t eq = kv.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: override must look like key=value, got '" + kv + "'");
        std::string key = detail::trim(kv.substr(0, eq));
        std::string value = detail::trim(kv.substr(eq + 1));
        if (!value.empty() && value.front() == '[') {
            std::stringstream ss;
            ss << key << " = " << value << "\n";
            nlohmann::json one = parse_toml(ss);
            base[key] = one[key];
        } else {
            base[key] = detail::parse_toml_scalar(value);
        }
    }
    return base;
}

}  // namespace argmax_bayes
