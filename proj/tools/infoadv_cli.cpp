// infoadv command-line tool.
//
// Exit codes: 0 success, 1 a check failed, 2 configuration error,
// 3 data error, 4 numeric divergence.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "infoadv/infoadv.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace infoadv;

namespace {

constexpr int kExitCheckFailed = 1;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Write via a temporary sibling and rename, so readers never see a partial file.
void write_atomic(const fs::path& p, const std::string& content) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    const fs::path tmp = p.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw DataError("cannot write " + tmp.string());
        out << content;
        if (!out.flush()) throw DataError("failed writing " + tmp.string());
    }
    fs::rename(tmp, p);
}

/// SHA-1 of "blob <size>\0<content>", the object id git assigns to a file.
std::string git_blob_sha1(const std::string& content) {
    const std::string header = "blob " + std::to_string(content.size()) + std::string(1, '\0');
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr);
    EVP_DigestUpdate(ctx, header.data(), header.size());
    EVP_DigestUpdate(ctx, content.data(), content.size());
    EVP_DigestFinal_ex(ctx, md, &len);
    EVP_MD_CTX_free(ctx);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

/// Hash a file, or every regular file of a directory (sorted by name).
json hash_inputs(const fs::path& p) {
    json h = json::object();
    if (fs::is_directory(p)) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(p))
            if (e.is_regular_file()) files.push_back(e.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) h[(p / f.filename()).string()] = git_blob_sha1(read_file(f));
    } else if (fs::exists(p)) {
        h[p.string()] = git_blob_sha1(read_file(p));
    }
    return h;
}

class Manifest {
public:
    Manifest(fs::path dir, std::string command) : dir_(std::move(dir)), start_(std::chrono::steady_clock::now()) {
        j_["command"] = std::move(command);
        j_["inputs"] = json::object();
        j_["outputs"] = json::array();
        j_["seeds"] = json::array();
        j_["wall_seconds"] = nullptr;
    }

    void config(const TrainConfig& c) {
        for (const auto& [k, v] : config_entries(c)) j_["config"][k] = v;
    }
    void seeds(const std::vector<std::uint64_t>& s) { j_["seeds"] = s; }
    void input(const fs::path& p) { j_["inputs"].update(hash_inputs(p)); }
    void output(const std::string& name) { j_["outputs"].push_back(name); }

    fs::path path() const { return dir_ / "manifest.json"; }

    /// Written once before any result file, then again with the wall time.
    void write() { write_atomic(path(), j_.dump(2) + "\n"); }
    void finish() {
        j_["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        write();
    }

private:
    fs::path dir_;
    std::chrono::steady_clock::time_point start_;
    json j_;
};

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ','))
        if (!detail::trim(tok).empty()) out.push_back(detail::trim(tok));
    if (out.empty()) throw ConfigError("empty list '" + s + "'");
    return out;
}

std::vector<double> parse_reals(const std::string& s, const std::string& what) {
    std::vector<double> out;
    for (const auto& t : split_list(s)) out.push_back(detail::to_double(what, t));
    return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
    std::vector<std::uint64_t> out;
    for (const auto& t : split_list(s)) {
        const long long v = detail::to_int("seeds", t);
        if (v < 0) throw ConfigError("seeds must be nonnegative");
        out.push_back(static_cast<std::uint64_t>(v));
    }
    return out;
}

/// --seeds N means seeds 1..N; a comma list is taken verbatim.
std::vector<std::uint64_t> seed_list(const std::string& s) {
    if (s.find(',') != std::string::npos) return parse_seeds(s);
    const long long n = detail::to_int("seeds", s);
    if (n < 1) throw ConfigError("--seeds must be >= 1");
    std::vector<std::uint64_t> out;
    for (long long i = 1; i <= n; ++i) out.push_back(static_cast<std::uint64_t>(i));
    return out;
}

/// Shared by every command that trains: base config, overrides, epochs.
struct ConfigArgs {
    std::string config_file;
    std::string dataset = "cora";
    std::vector<std::string> overrides;
    int epochs = 0;

    void attach(CLI::App* cmd) {
        auto* file = cmd->add_option("--config", config_file, "key=value config file");
        auto* defaults = cmd->add_option("--dataset-defaults", dataset, "start from a dataset's default hyperparameters");
        file->excludes(defaults);
        cmd->add_option("--set", overrides, "override one config key (key=value), repeatable");
        cmd->add_option("--epochs", epochs, "override the epoch budget");
    }

    TrainConfig resolve() const {
        TrainConfig c = config_file.empty() ? default_config(dataset) : load_config(config_file, default_config(dataset));
        for (const auto& kv : overrides) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
            set_config_value(c, detail::trim(kv.substr(0, eq)), detail::trim(kv.substr(eq + 1)));
        }
        if (epochs) c.epochs = epochs;
        c.validate();
        return c;
    }
};

std::string command_line(int argc, char** argv) {
    std::string s;
    for (int i = 0; i < argc; ++i) s += (i ? " " : "") + std::string(argv[i]);
    return s;
}

Graph load_data(const std::string& dir, Manifest& m) {
    Graph g = load_graph(dir);
    m.input(dir);
    return g;
}

void check_dims(const TrainedModel& model, const Graph& g) {
    if (model.encoder.dims.in_dim != g.feat_dim())
        throw DataError("checkpoint expects " + std::to_string(model.encoder.dims.in_dim) + " feature columns, dataset has " +
                        std::to_string(g.feat_dim()));
}

void write_report(const EvalReport& r, Manifest& m, const fs::path& out) {
    json j = r.to_json();
    j["manifest"] = "manifest.json";
    m.output("report.json");
    m.output("report.csv");
    m.write();
    write_atomic(out / "report.json", j.dump(2) + "\n");
    write_atomic(out / "report.csv", r.to_csv());
    for (const auto& [name, v] : r.values)
        std::cout << r.task << " " << name << " " << EvalReport::mean_of(v) << " +- " << EvalReport::std_of(v) << " over " << v.size() << " runs\n";
}

json theory_verdict(const std::string& check, int trials, std::uint64_t seed) {
    Rng rng(seed);
    json v;
    v["check"] = check;
    v["trials"] = trials;
    int failures = 0;
    if (check == "decomposition") {
        double worst = 0;
        for (int i = 0; i < trials; ++i) {
            const double gap = theory::decomposition_gap(theory::contrastive_risk(theory::random_spec(rng)));
            worst = std::max(worst, gap);
            failures += !(gap < 1e-12);
        }
        v["max_gap"] = worst;
    } else if (check == "dpi") {
        double worst = -1e300;
        for (int i = 0; i < trials; ++i) {
            const auto r = theory::check_dpi(theory::random_chain(rng));
            worst = std::max(worst, r.i_xz - std::min(r.i_xy, r.i_yz));
            failures += !r.holds;
        }
        v["max_excess"] = worst;
    } else if (check == "mean-vs-lr") {
        double least = 1e300;
        for (int i = 0; i < trials; ++i) {
            const auto b = theory::random_blobs(rng);
            const auto r = theory::check_mean_vs_lr(b.h, b.y);
            least = std::min(least, r.initial_loss - r.final_loss);
            failures += !(r.holds && r.monotone);
        }
        v["min_improvement"] = least;
    } else {
        throw ConfigError("unknown check '" + check + "' (expected decomposition, dpi, mean-vs-lr or all)");
    }
    v["failures"] = failures;
    v["pass"] = failures == 0;
    return v;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"InfoAdv graph contrastive learning"};
    app.require_subcommand(1);

    // train
    auto* train_cmd = app.add_subcommand("train", "train a model and write checkpoint + log");
    std::string data, out = "run";
    std::uint64_t seed = 1;
    bool record_time = false;
    ConfigArgs train_cfg;
    train_cmd->add_option("--data", data, "dataset directory")->required();
    train_cfg.attach(train_cmd);
    train_cmd->add_option("--seed", seed, "training seed");
    train_cmd->add_option("--out", out, "output directory");
    train_cmd->add_flag("--record-time", record_time, "fill the seconds column with wall time");

    // eval-node / eval-link
    std::string checkpoint, seeds_arg = "3";
    auto* eval_node = app.add_subcommand("eval-node", "linear-probe node classification over several splits");
    auto* eval_link = app.add_subcommand("eval-link", "link prediction AUC/AP over several edge splits");
    for (auto* cmd : {eval_node, eval_link}) {
        cmd->add_option("--checkpoint", checkpoint, "checkpoint JSON")->required();
        cmd->add_option("--data", data, "dataset directory")->required();
        cmd->add_option("--seeds", seeds_arg, "number of splits, or a comma list of seeds");
        cmd->add_option("--out", out, "output directory");
    }

    // sweeps
    std::string levels, variants = "infoadv,grace", lambdas, p_eas, ratios = "1,5,10,100";
    ConfigArgs sweep_cfg;
    auto* noise_cmd = app.add_subcommand("noise-sweep", "inject noise edges, train, probe");
    noise_cmd->add_option("--levels", levels, "comma list of noise probabilities")->required();
    noise_cmd->add_option("--variants", variants, "comma list of infoadv, grace");
    auto* hparam_cmd = app.add_subcommand("hparam-sweep", "probe F1 over a lambda x p_ea grid");
    hparam_cmd->add_option("--lambdas", lambdas, "comma list of lambda values")->required();
    hparam_cmd->add_option("--p-ea", p_eas, "comma list of p_ea values")->required();
    auto* freq_cmd = app.add_subcommand("freq-sweep", "probe F1 and edge preserve rate per update-frequency ratio");
    freq_cmd->add_option("--ratios", ratios, "comma list of generator:encoder ratios");
    for (auto* cmd : {noise_cmd, hparam_cmd, freq_cmd}) {
        cmd->add_option("--data", data, "dataset directory")->required();
        cmd->add_option("--seeds", seeds_arg, "number of seeds, or a comma list");
        cmd->add_option("--out", out, "output directory");
        sweep_cfg.attach(cmd);
    }

    // checks and data
    std::string check = "all";
    int trials = 0;
    double tol = 1e-4;
    auto* theory_cmd = app.add_subcommand("theory-check", "numerical checks of the theoretical identities");
    theory_cmd->add_option("--check", check, "decomposition, dpi, mean-vs-lr or all");
    theory_cmd->add_option("--trials", trials, "random instances per check (default 200, 1000, 50)");
    theory_cmd->add_option("--seed", seed, "instance seed");
    auto* grad_cmd = app.add_subcommand("grad-check", "finite-difference check of the composed model");
    grad_cmd->add_option("--seed", seed, "graph and parameter seed");
    grad_cmd->add_option("--tol", tol, "maximum accepted relative error");

    std::string blocks = "50,50";
    double p_in = 0.1, p_out = 0.01, feat_noise = 1.0;
    Index feat_dim = 16;
    auto* gen_cmd = app.add_subcommand("gen-data", "write a stochastic block model dataset");
    gen_cmd->add_option("--blocks", blocks, "comma list of block sizes");
    gen_cmd->add_option("--p-in", p_in, "within-block edge probability");
    gen_cmd->add_option("--p-out", p_out, "between-block edge probability");
    gen_cmd->add_option("--feat-dim", feat_dim, "feature dimension");
    gen_cmd->add_option("--feat-noise", feat_noise, "feature noise standard deviation");
    gen_cmd->add_option("--seed", seed, "generator seed");
    gen_cmd->add_option("--out", out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    const std::string cmdline = command_line(argc, argv);
    try {
        thread_cap();  // validate early
        if (*train_cmd) {
            TrainConfig c = train_cfg.resolve();
            c.seed = seed;
            Manifest m(out, cmdline);
            const Graph g = load_data(data, m);
            m.config(c);
            m.seeds({seed});
            for (const char* f : {"checkpoint.json", "train_log.csv", "config.txt"}) m.output(f);
            m.write();
            TrainOptions opt;
            opt.record_time = record_time;
            TrainResult r = train(g, c, opt);
            json ck = checkpoint_json(r.model);
            ck["manifest"] = "manifest.json";
            write_atomic(fs::path(out) / "checkpoint.json", ck.dump() + "\n");
            write_atomic(fs::path(out) / "train_log.csv", r.log.to_csv());
            write_atomic(fs::path(out) / "config.txt", config_to_text(c));
            m.finish();
            const auto& last = r.log.records.back();
            std::cout << "trained " << c.epochs << " epochs, final J1 " << last.j1 << ", J2 " << last.j2 << "\n";
        } else if (*eval_node || *eval_link) {
            const bool node = eval_node->parsed();
            TrainedModel model = load_checkpoint(checkpoint);
            Manifest m(out, cmdline);
            m.input(checkpoint);
            const Graph g = load_data(data, m);
            check_dims(model, g);
            const auto seeds = seed_list(seeds_arg);
            m.config(model.config);
            m.seeds(seeds);
            EvalReport rep;
            rep.task = node ? "node" : "link";
            rep.dataset = fs::path(data).filename().string();
            rep.variant = model.config.view1 == ViewMode::learned ? "infoadv" : "grace";
            rep.seeds = seeds;
            if (node) {
                const Mat emb = model_embeddings(model, g);
                for (auto s : seeds) rep.values["f1"].push_back(probe_f1(emb, g, s));
            } else {
                // Held-out edges must be unseen during training, so each split retrains with the checkpoint's config.
                for (auto s : seeds) {
                    TrainConfig c = model.config;
                    c.seed = s;
                    const LinkMetrics lm = link_run(g, c, s);
                    rep.values["auc"].push_back(lm.auc);
                    rep.values["ap"].push_back(lm.ap);
                }
            }
            write_report(rep, m, out);
            m.finish();
        } else if (*noise_cmd || *hparam_cmd || *freq_cmd) {
            const TrainConfig c = sweep_cfg.resolve();
            const auto seeds = seed_list(seeds_arg);
            Manifest m(out, cmdline);
            const Graph g = load_data(data, m);
            m.config(c);
            m.seeds(seeds);
            const fs::path dir(out);
            if (*noise_cmd) {
                std::vector<Variant> vs;
                for (const auto& v : split_list(variants)) vs.push_back(parse_variant(v));
                const auto hs = parse_reals(levels, "levels");
                for (double h : hs)
                    if (!(h >= 0 && h <= 1)) throw ConfigError("noise levels must be in [0,1]");
                m.output("noise_sweep.csv");
                m.write();
                std::string csv = "level,variant,seed,f1\n";
                for (const auto& r : noise_sweep(g, c, hs, vs, seeds))
                    csv += detail::fmt_double(r.level) + "," + to_string(r.variant) + "," + std::to_string(r.seed) + "," + detail::fmt_double(r.f1) + "\n";
                write_atomic(dir / "noise_sweep.csv", csv);
            } else if (*hparam_cmd) {
                m.output("hparam_sweep.csv");
                m.write();
                std::string csv = "lambda,p_ea,seed,f1\n";
                for (const auto& r : hparam_sweep(g, c, parse_reals(lambdas, "lambdas"), parse_reals(p_eas, "p_ea"), seeds))
                    csv += detail::fmt_double(r.lambda) + "," + detail::fmt_double(r.p_ea) + "," + std::to_string(r.seed) + "," + detail::fmt_double(r.f1) + "\n";
                write_atomic(dir / "hparam_sweep.csv", csv);
            } else {
                std::vector<int> rs;
                for (const auto& t : split_list(ratios)) rs.push_back(static_cast<int>(detail::to_int("ratios", t)));
                m.output("freq_sweep.csv");
                m.output("freq_preserve.csv");
                m.write();
                std::string csv = "ratio,seed,f1\n", preserve = "ratio,seed,epoch,edge_preserve_rate\n";
                for (const auto& r : freq_sweep(g, c, rs, seeds)) {
                    csv += std::to_string(r.ratio) + "," + std::to_string(r.seed) + "," + detail::fmt_double(r.f1) + "\n";
                    for (std::size_t e = 0; e < r.preserve_rate.size(); ++e)
                        preserve += std::to_string(r.ratio) + "," + std::to_string(r.seed) + "," + std::to_string(e + 1) + "," +
                                    detail::fmt_double(r.preserve_rate[e]) + "\n";
                }
                write_atomic(dir / "freq_sweep.csv", csv);
                write_atomic(dir / "freq_preserve.csv", preserve);
            }
            m.finish();
        } else if (*theory_cmd) {
            const std::vector<std::pair<std::string, int>> all{{"decomposition", 200}, {"dpi", 1000}, {"mean-vs-lr", 50}};
            json verdicts = json::array();
            bool pass = true;
            for (const auto& [name, default_trials] : all) {
                if (check != "all" && check != name) continue;
                verdicts.push_back(theory_verdict(name, trials ? trials : default_trials, seed));
                pass = pass && verdicts.back()["pass"].get<bool>();
            }
            if (verdicts.empty()) theory_verdict(check, 1, seed);  // raises the unknown-check error
            std::cout << verdicts.dump(2) << "\n";
            return pass ? 0 : kExitCheckFailed;
        } else if (*grad_cmd) {
            const GradCheckResult r = composed_grad_check(seed);
            const bool pass = r.max_rel_error < tol;
            std::cout << json{{"max_rel_error", r.max_rel_error}, {"worst_param", r.worst_param}, {"entries", r.entries}, {"tol", tol}, {"pass", pass}}.dump(2)
                      << "\n";
            return pass ? 0 : kExitCheckFailed;
        } else if (*gen_cmd) {
            std::vector<Index> sizes;
            for (const auto& t : split_list(blocks)) sizes.push_back(static_cast<Index>(detail::to_int("blocks", t)));
            save_graph(sbm_generate(sizes, p_in, p_out, feat_dim, feat_noise, seed), out);
            std::cout << "wrote " << out << "\n";
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const ShapeError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    }
    return 0;
}
