#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "core.hpp"
#include "encoder.hpp"
#include "losses.hpp"

namespace infoadv {

/// Source of the first view: the learned generator, or uniform random edge
/// dropping at rate p_ea (the "without generator" ablation).
enum class ViewMode { learned, random };

inline std::string to_string(ViewMode m) { return m == ViewMode::learned ? "learned" : "random"; }

inline ViewMode parse_view_mode(const std::string& s) {
    if (s == "learned") return ViewMode::learned;
    if (s == "random") return ViewMode::random;
    throw ConfigError("unknown view1 mode '" + s + "' (expected learned or random)");
}

struct TrainConfig {
    double lambda = 1e-5;
    double p_f1 = 0.4;
    double p_f2 = 0.3;
    double p_ea = 0.8;  // upper bound of the generator's drop probability
    double p_e2 = 0.2;
    double lr_encoder = 5e-4;
    double lr_generator = 5e-4;
    double weight_decay = 1e-5;
    int epochs = 1000;
    int hidden_dim = 128;
    Activation activation = Activation::relu;
    double tau_nce = 0.5;
    double t_g = 0.5;
    int freq_ratio = 1;
    GeneratorObjective generator_objective = GeneratorObjective::kl;
    ViewMode view1 = ViewMode::learned;
    int gen_hidden_dim = 64;
    bool hard_mask = true;
    std::uint64_t seed = 1;

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;

    void validate() const {
        auto prob = [](const char* k, double p) {
            if (!(p >= 0.0 && p < 1.0)) throw ConfigError(std::string(k) + " must be in [0,1), got " + std::to_string(p));
        };
        prob("p_f1", p_f1);
        prob("p_f2", p_f2);
        prob("p_e2", p_e2);
        if (!(p_ea >= 0.0 && p_ea < 1.0)) throw ConfigError("p_ea must be in [0,1), got " + std::to_string(p_ea));
        if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
        if (!(lr_encoder > 0 && lr_generator > 0)) throw ConfigError("learning rates must be positive");
        if (!(weight_decay >= 0)) throw ConfigError("weight_decay must be non-negative");
        if (epochs < 1) throw ConfigError("epochs must be >= 1");
        if (hidden_dim < 1 || gen_hidden_dim < 1) throw ConfigError("hidden dims must be >= 1");
        if (!(tau_nce > 0)) throw ConfigError("tau_nce must be positive");
        if (!(t_g > 0)) throw ConfigError("t_g must be positive");
        if (freq_ratio < 1) throw ConfigError("freq_ratio must be an integer >= 1");
    }
};

/// Per-dataset defaults (hyperparameter table of the original experiments).
/// The generator learning rate follows the encoder rate.
inline TrainConfig default_config(const std::string& dataset) {
    std::string key = dataset;
    std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    struct Row {
        const char* name;
        double lambda, pf1, pf2, pea, pe2, lr;
        int epochs, hidden;
        Activation act;
    };
    static const Row rows[] = {
        {"cora", 1e-5, 0.4, 0.3, 0.8, 0.2, 5e-4, 1000, 128, Activation::relu},
        {"citeseer", 1e-5, 0.3, 0.2, 0.2, 0.0, 1e-3, 500, 256, Activation::prelu},
        {"pubmed", 10, 0.1, 0.1, 0.3, 0.5, 1e-3, 2500, 256, Activation::relu},
        {"coauthor-cs", 1e-5, 0.3, 0.4, 0.3, 0.2, 5e-4, 1000, 256, Activation::rrelu},
        {"coauthor-phy", 10, 0.1, 0.4, 0.4, 0.1, 1e-2, 1900, 128, Activation::rrelu},
        {"wikics", 10, 0.1, 0.1, 0.2, 0.3, 1e-2, 3100, 256, Activation::prelu},
        {"amazon-photo", 60, 0.1, 0.1, 0.9, 0.3, 1e-2, 2700, 256, Activation::relu},
        {"amazon-computers", 0.5, 0.2, 0.3, 0.9, 0.3, 1e-2, 2000, 128, Activation::rrelu},
    };
    for (const auto& r : rows) {
        if (key != r.name) continue;
        TrainConfig c;
        c.lambda = r.lambda;
        c.p_f1 = r.pf1;
        c.p_f2 = r.pf2;
        c.p_ea = r.pea;
        c.p_e2 = r.pe2;
        c.lr_encoder = r.lr;
        c.lr_generator = r.lr;
        c.weight_decay = 1e-5;
        c.epochs = r.epochs;
        c.hidden_dim = r.hidden;
        c.activation = r.act;
        return c;
    }
    throw ConfigError("no defaults for dataset '" + dataset + "'");
}

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::string fmt_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double to_double(const std::string& key, const std::string& v) {
    double out = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size()) throw ConfigError("config key '" + key + "': not a number: '" + v + "'");
    return out;
}

inline long long to_int(const std::string& key, const std::string& v) {
    long long out = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size()) throw ConfigError("config key '" + key + "': not an integer: '" + v + "'");
    return out;
}

inline bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config key '" + key + "': not a boolean: '" + v + "'");
}

}  // namespace detail

/// Ordered key -> text representation (shortest round-trip for reals).
inline std::map<std::string, std::string> config_entries(const TrainConfig& c) {
    using detail::fmt_double;
    return {
        {"lambda", fmt_double(c.lambda)},
        {"p_f1", fmt_double(c.p_f1)},
        {"p_f2", fmt_double(c.p_f2)},
        {"p_ea", fmt_double(c.p_ea)},
        {"p_e2", fmt_double(c.p_e2)},
        {"lr_encoder", fmt_double(c.lr_encoder)},
        {"lr_generator", fmt_double(c.lr_generator)},
        {"weight_decay", fmt_double(c.weight_decay)},
        {"epochs", std::to_string(c.epochs)},
        {"hidden_dim", std::to_string(c.hidden_dim)},
        {"activation", to_string(c.activation)},
        {"tau_nce", fmt_double(c.tau_nce)},
        {"t_g", fmt_double(c.t_g)},
        {"freq_ratio", std::to_string(c.freq_ratio)},
        {"generator_objective", to_string(c.generator_objective)},
        {"view1", to_string(c.view1)},
        {"gen_hidden_dim", std::to_string(c.gen_hidden_dim)},
        {"hard_mask", c.hard_mask ? "true" : "false"},
        {"seed", std::to_string(c.seed)},
    };
}

/// Apply one key=value pair; unknown keys are rejected.
inline void set_config_value(TrainConfig& c, const std::string& key, const std::string& value) {
    using namespace detail;
    if (key == "lambda") c.lambda = to_double(key, value);
    else if (key == "p_f1") c.p_f1 = to_double(key, value);
    else if (key == "p_f2") c.p_f2 = to_double(key, value);
    else if (key == "p_ea") c.p_ea = to_double(key, value);
    else if (key == "p_e2") c.p_e2 = to_double(key, value);
    else if (key == "lr_encoder") c.lr_encoder = to_double(key, value);
    else if (key == "lr_generator") c.lr_generator = to_double(key, value);
    else if (key == "weight_decay") c.weight_decay = to_double(key, value);
    else if (key == "epochs") c.epochs = static_cast<int>(to_int(key, value));
    else if (key == "hidden_dim") c.hidden_dim = static_cast<int>(to_int(key, value));
    else if (key == "activation") c.activation = parse_activation(value);
    else if (key == "tau_nce") c.tau_nce = to_double(key, value);
    else if (key == "t_g") c.t_g = to_double(key, value);
    else if (key == "freq_ratio") c.freq_ratio = static_cast<int>(to_int(key, value));
    else if (key == "generator_objective") c.generator_objective = parse_generator_objective(value);
    else if (key == "view1") c.view1 = parse_view_mode(value);
    else if (key == "gen_hidden_dim") c.gen_hidden_dim = static_cast<int>(to_int(key, value));
    else if (key == "hard_mask") c.hard_mask = to_bool(key, value);
    else if (key == "seed") {
        const auto s = to_int(key, value);
        if (s < 0) throw ConfigError("seed must be non-negative");
        c.seed = static_cast<std::uint64_t>(s);
    } else
        throw ConfigError("unknown config key '" + key + "'");
}

inline std::string config_to_text(const TrainConfig& c) {
    std::string out;
    for (const auto& [k, v] : config_entries(c)) out += k + "=" + v + "\n";
    return out;
}

/// Parse flat key=value text ('#' starts a comment). When lr_generator is not
/// given it follows lr_encoder.
inline TrainConfig parse_config(const std::string& text, const TrainConfig& base = {}) {
    TrainConfig c = base;
    bool lr_gen_set = false;
    std::istringstream in(text);
    std::string line;
    for (int ln = 1; std::getline(in, line); ++ln) {
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(ln) + ": expected key=value");
        const auto key = detail::trim(line.substr(0, eq));
        set_config_value(c, key, detail::trim(line.substr(eq + 1)));
        lr_gen_set = lr_gen_set || key == "lr_generator";
    }
    if (!lr_gen_set) c.lr_generator = c.lr_encoder;
    c.validate();
    return c;
}

inline TrainConfig load_config(const std::filesystem::path& path, const TrainConfig& base = {}) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), base);
}

inline void save_config(const TrainConfig& c, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write config file " + path.string());
    out << config_to_text(c);
}

}  // namespace infoadv
