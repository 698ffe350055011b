#pragma once

// End-to-end pipelines shared by the command-line tool and the acceptance
// suite: train then probe, the per-epoch generalization gap, link prediction
// on held-out edges, and the noise / hyperparameter / update-ratio sweeps.

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "evaluation.hpp"
#include "trainer.hpp"

namespace infoadv {

/// INFOADV_THREADS: 0 or unset means serial, otherwise at most that many workers.
inline int thread_cap() {
    const char* v = std::getenv("INFOADV_THREADS");
    if (!v || !*v) return 0;
    char* end = nullptr;
    const long n = std::strtol(v, &end, 10);
    if (*end != '\0' || n < 0) throw ConfigError(std::string("INFOADV_THREADS must be a nonnegative integer, got '") + v + "'");
    return static_cast<int>(n);
}

/// Run cell(i) for i in [0, count). Cells own all their state, so the output
/// does not depend on the worker count.
inline void run_cells(std::size_t count, const std::function<void(std::size_t)>& cell, int threads = thread_cap()) {
    if (threads <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) cell(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(count);
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), count);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < count; i += workers) {
                try {
                    cell(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
}

/// Frozen U_mu embeddings of the clean graph.
inline Mat model_embeddings(TrainedModel& m, const Graph& g) { return embed(m.encoder, sym_normalize(g), g.features()); }

inline const std::vector<int>& require_labels(const Graph& g) {
    if (!g.labels()) throw DataError("this task needs node labels (labels.csv)");
    return *g.labels();
}

inline double probe_f1(const Mat& emb, const Graph& g, std::uint64_t seed) { return linear_probe(emb, require_labels(g), seed).f1; }

/// Train with cfg (its seed drives training) and probe with `probe_seed`.
inline double train_and_probe(const Graph& g, const TrainConfig& cfg, std::uint64_t probe_seed) {
    TrainResult r = train(g, cfg);
    return probe_f1(model_embeddings(r.model, g), g, probe_seed);
}

/// Per-epoch pretext (J1) and downstream (Mean Classifier cross-entropy on
/// held-out nodes) losses, measured on the same parameters, and their gap.
struct GapTrace {
    std::vector<double> pretext;
    std::vector<double> downstream;
    std::vector<double> gap;
    TrainLog log;

    double final_gap() const { return gap.empty() ? 0.0 : gap.back(); }
};

inline GapTrace gcl_ge_run(const Graph& g, const TrainConfig& cfg, std::uint64_t split_seed) {
    const auto& y = require_labels(g);
    const int k = *std::max_element(y.begin(), y.end()) + 1;
    const auto split = classification_split(y, k, 0.10, split_seed);
    const SparseMatrix adj = sym_normalize(g);
    GapTrace trace;
    TrainOptions opt;
    opt.before_epoch = [&](int, TrainedModel& m) {
        const Mat emb = embed(m.encoder, adj, g.features());
        const auto mc = MeanClassifier::fit(emb, y, split.train, k);
        trace.downstream.push_back(softmax_cross_entropy(mc.logits(rows_of(emb, split.test)), labels_of(y, split.test)));
    };
    TrainResult r = train(g, cfg, opt);
    for (const auto& rec : r.log.records) trace.pretext.push_back(rec.j1);
    trace.gap = gcl_ge(trace.pretext, trace.downstream);
    trace.log = std::move(r.log);
    return trace;
}

/// Split edges, train on the training edges only, score the test pairs.
inline LinkMetrics link_run(const Graph& g, const TrainConfig& cfg, std::uint64_t split_seed) {
    const LinkSplit split = split_links(g, split_seed);
    const Graph train_graph = g.with_edges(split.train_edges);
    TrainResult r = train(train_graph, cfg);
    return link_predict_eval(model_embeddings(r.model, train_graph), split);
}

enum class Variant { infoadv, grace };

inline std::string to_string(Variant v) { return v == Variant::infoadv ? "infoadv" : "grace"; }

inline Variant parse_variant(const std::string& s) {
    if (s == "infoadv") return Variant::infoadv;
    if (s == "grace") return Variant::grace;
    throw ConfigError("unknown variant '" + s + "' (expected infoadv or grace)");
}

inline TrainConfig variant_config(const TrainConfig& cfg, Variant v) { return v == Variant::infoadv ? cfg : baseline_config(cfg); }

struct SweepRow {
    double level = 0;
    Variant variant = Variant::infoadv;
    std::uint64_t seed = 0;
    double f1 = 0;
};

/// For every (level, variant, seed): inject noise at that level, train, probe.
/// Rows come out sorted by (level, variant, seed) regardless of input order.
inline std::vector<SweepRow> noise_sweep(const Graph& g, const TrainConfig& cfg, std::vector<double> levels, std::vector<Variant> variants,
                                         std::vector<std::uint64_t> seeds) {
    std::sort(levels.begin(), levels.end());
    std::sort(variants.begin(), variants.end());
    std::sort(seeds.begin(), seeds.end());
    std::vector<SweepRow> rows;
    for (double h : levels)
        for (Variant v : variants)
            for (std::uint64_t s : seeds) rows.push_back({h, v, s, 0.0});
    run_cells(rows.size(), [&](std::size_t i) {
        SweepRow& r = rows[i];
        // The noisy graph depends on (level, seed) only, so both variants see the same edges.
        const Graph noisy = inject_noise(g, r.level, derive_seed(r.seed, 0x6e6f697379ULL));
        TrainConfig c = variant_config(cfg, r.variant);
        c.seed = r.seed;
        r.f1 = train_and_probe(noisy, c, r.seed);
    });
    return rows;
}

struct GridRow {
    double lambda = 0;
    double p_ea = 0;
    std::uint64_t seed = 0;
    double f1 = 0;
};

/// Probe F1 over the lambda x p_ea grid, sorted by (lambda, p_ea, seed).
inline std::vector<GridRow> hparam_sweep(const Graph& g, const TrainConfig& cfg, std::vector<double> lambdas, std::vector<double> p_eas,
                                         std::vector<std::uint64_t> seeds) {
    std::sort(lambdas.begin(), lambdas.end());
    std::sort(p_eas.begin(), p_eas.end());
    std::sort(seeds.begin(), seeds.end());
    std::vector<GridRow> rows;
    for (double l : lambdas)
        for (double p : p_eas)
            for (std::uint64_t s : seeds) rows.push_back({l, p, s, 0.0});
    for (const auto& r : rows) {
        TrainConfig c = cfg;
        c.lambda = r.lambda;
        c.p_ea = r.p_ea;
        c.validate();
    }
    run_cells(rows.size(), [&](std::size_t i) {
        GridRow& r = rows[i];
        TrainConfig c = cfg;
        c.lambda = r.lambda;
        c.p_ea = r.p_ea;
        c.seed = r.seed;
        r.f1 = train_and_probe(g, c, r.seed);
    });
    return rows;
}

struct FreqRun {
    int ratio = 1;
    std::uint64_t seed = 0;
    double f1 = 0;
    std::vector<double> preserve_rate;  // per epoch
};

/// Probe F1 and the per-epoch edge preserve rate for each generator:encoder ratio.
inline std::vector<FreqRun> freq_sweep(const Graph& g, const TrainConfig& cfg, std::vector<int> ratios, std::vector<std::uint64_t> seeds) {
    std::sort(ratios.begin(), ratios.end());
    std::sort(seeds.begin(), seeds.end());
    std::vector<FreqRun> runs;
    for (int r : ratios)
        for (std::uint64_t s : seeds) runs.push_back({r, s, 0.0, {}});
    for (const auto& r : runs) {
        TrainConfig c = cfg;
        c.freq_ratio = r.ratio;
        c.validate();
    }
    run_cells(runs.size(), [&](std::size_t i) {
        FreqRun& r = runs[i];
        TrainConfig c = cfg;
        c.freq_ratio = r.ratio;
        c.seed = r.seed;
        TrainResult res = train(g, c);
        for (const auto& rec : res.log.records) r.preserve_rate.push_back(rec.edge_preserve_rate);
        r.f1 = probe_f1(model_embeddings(res.model, g), g, r.seed);
    });
    return runs;
}

/// Finite-difference check of the whole model with all noise frozen:
/// generator -> soft-masked first view -> encoder -> J1 + lambda * J2, on a
/// random 8-node graph. Every parameter of all three players is checked.
inline GradCheckResult composed_grad_check(std::uint64_t seed, double lambda = 0.5) {
    Rng rng(seed);
    const Index n = 8, d = 5, hidden = 4;
    std::vector<std::pair<Index, Index>> pairs;
    for (Index i = 0; i < n; ++i) pairs.emplace_back(i, (i + 1) % n);
    for (Index i = 0; i < n; ++i)
        for (Index j = i + 2; j < n; ++j)
            if (rng.bernoulli(0.3)) pairs.emplace_back(i, j);
    const Graph g = Graph::from_edges(n, pairs, rng.normal_matrix(n, d));
    const SparseMatrix adj = sym_normalize(g);

    TrainConfig cfg;
    cfg.hidden_dim = hidden;
    cfg.gen_hidden_dim = hidden;
    cfg.activation = Activation::prelu;
    cfg.lambda = lambda;
    cfg.seed = seed;
    TrainedModel m = TrainedModel::init(d, cfg);
    // Nonzero biases keep every ReLU unit away from its kink at the check point.
    m.head.params.set("b1", rng.normal_matrix(1, hidden));
    m.head.params.set("b2", rng.normal_matrix(1, hidden));
    m.generator.params.set("mlp_b1", rng.normal_matrix(1, hidden));

    const Mat gumbel = rng.logistic_matrix(g.num_edges(), 1);
    const Mat x1 = feature_mask(g.features(), cfg.p_f1, derive_seed(seed, 1));
    const Mat x2 = feature_mask(g.features(), cfg.p_f2, derive_seed(seed, 2));
    const SparseMatrix adj2 = sym_normalize(drop_edges_random(g, cfg.p_e2, derive_seed(seed, 3)));
    const Mat noise_u = rng.normal_matrix(n, hidden), noise_v = rng.normal_matrix(n, hidden);

    auto loss = [&](Tape& t) {
        const GeneratedView view = generate_view(t, m.generator, g, adj, gumbel, false, true);
        const Encoding u = encode(t, m.encoder, view.adj, t.constant(x1), noise_u, true);
        const Encoding v = encode(t, m.encoder, ViewAdjacency::of(adj2), t.constant(x2), noise_v, true);
        return ad::add(j1_loss(t, &m.head, u, v, cfg.tau_nce, true), ad::scale(j2_loss(u, v), cfg.lambda));
    };
    ParamStore* stores[] = {&m.encoder.params, &m.head.params, &m.generator.params};
    return grad_check(std::span<ParamStore* const>(stores), loss);
}

}  // namespace infoadv
