#pragma once

// Alternating two-player training loop.
//
// Each iteration builds both views, then computes the generator gradient
// (encoder frozen) and the encoder/head gradient (generator output frozen)
// from identical forward values, and only then applies the updates:
// the generator steps every iteration, the encoder and projection head every
// freq_ratio-th iteration.

#include <chrono>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "autodiff.hpp"
#include "config.hpp"
#include "encoder.hpp"
#include "graph.hpp"
#include "losses.hpp"
#include "rng.hpp"
#include "view_generator.hpp"

namespace infoadv {

struct EpochRecord {
    int epoch = 0;  // 1-based
    double j1 = 0;
    double j2 = 0;
    double j2_prime = 0;
    double encoder_loss = 0;
    double generator_loss = 0;
    double edge_preserve_rate = 0;
    double seconds = 0;
    bool encoder_stepped = false;
};

struct TrainLog {
    std::vector<EpochRecord> records;

    static constexpr const char* kCsvHeader = "epoch,J1,J2,J2prime,encoder_loss,generator_loss,edge_preserve_rate,seconds";

    std::string to_csv() const {
        using detail::fmt_double;
        std::string out = std::string(kCsvHeader) + "\n";
        for (const auto& r : records) {
            out += std::to_string(r.epoch) + "," + fmt_double(r.j1) + "," + fmt_double(r.j2) + "," + fmt_double(r.j2_prime) + "," +
                   fmt_double(r.encoder_loss) + "," + fmt_double(r.generator_loss) + "," + fmt_double(r.edge_preserve_rate) + "," +
                   fmt_double(r.seconds) + "\n";
        }
        return out;
    }
};

/// Everything needed to reproduce embeddings: configuration plus the three
/// parameter groups (encoder θ, projection head ω, generator φ).
struct TrainedModel {
    TrainConfig config;
    TargetEncoder encoder;
    ProjectionHead head;
    ViewGenerator generator;

    static TrainedModel init(Index in_dim, const TrainConfig& cfg) {
        cfg.validate();
        TrainedModel m;
        m.config = cfg;
        const EncoderDims dims{in_dim, cfg.hidden_dim, cfg.hidden_dim, cfg.activation};
        m.encoder = TargetEncoder::init(dims, derive_seed(cfg.seed, 1));
        m.head = ProjectionHead::init(cfg.hidden_dim, derive_seed(cfg.seed, 2));
        m.generator = ViewGenerator::init(in_dim, cfg.gen_hidden_dim, 0.0, cfg.p_ea, cfg.t_g, derive_seed(cfg.seed, 3));
        return m;
    }
};

struct TrainResult {
    TrainedModel model;
    TrainLog log;
};

/// Per-iteration randomness, drawn once so both gradient passes see it.
struct EpochInputs {
    Mat x1, x2;
    Graph view2_graph;
    SparseMatrix adj2;
    Graph view1_graph;  // random view-1 mode only
    SparseMatrix adj1;  // random view-1 mode only
    Mat noise_u, noise_v;
    Mat gumbel;  // learned mode only, |E| x 1
};

struct TrainOptions {
    /// Fill the `seconds` column with wall time; off keeps logs byte-reproducible.
    bool record_time = false;
    /// Called at the start of every iteration with the current model (before any update).
    std::function<void(int epoch, TrainedModel&)> before_epoch;
};

class Trainer {
public:
    Trainer(const Graph& g, const TrainConfig& cfg) : graph_(g), model_(TrainedModel::init(g.feat_dim(), cfg)), adj_(sym_normalize(g)) {
        if (g.num_nodes() < 2) throw DataError("training needs at least two nodes");
    }

    TrainedModel& model() { return model_; }
    const TrainConfig& config() const { return model_.config; }
    int epoch() const { return epoch_; }

    EpochInputs sample_inputs(int epoch) const {
        const auto& c = model_.config;
        const std::uint64_t base = derive_seed(c.seed, 0x65706f6368ULL + static_cast<std::uint64_t>(epoch));
        EpochInputs in;
        in.x1 = feature_mask(graph_.features(), c.p_f1, derive_seed(base, 1));
        in.x2 = feature_mask(graph_.features(), c.p_f2, derive_seed(base, 2));
        in.view2_graph = drop_edges_random(graph_, c.p_e2, derive_seed(base, 3));
        in.adj2 = sym_normalize(in.view2_graph);
        Rng noise(derive_seed(base, 4));
        in.noise_u = noise.normal_matrix(graph_.num_nodes(), c.hidden_dim);
        in.noise_v = noise.normal_matrix(graph_.num_nodes(), c.hidden_dim);
        if (c.view1 == ViewMode::learned) {
            Rng gum(derive_seed(base, 5));
            in.gumbel = gum.logistic_matrix(graph_.num_edges(), 1);
        } else {
            in.view1_graph = drop_edges_random(graph_, c.p_ea, derive_seed(base, 6));
            in.adj1 = sym_normalize(in.view1_graph);
        }
        return in;
    }

    /// Forward both passes and accumulate gradients; no parameter changes.
    EpochRecord compute_gradients() {
        const auto& c = model_.config;
        const int e = epoch_ + 1;
        EpochRecord rec;
        rec.epoch = e;
        rec.encoder_stepped = (e % c.freq_ratio) == 0;
        inputs_ = sample_inputs(epoch_);
        try {
            Mat mask_values;
            if (c.view1 == ViewMode::learned) {
                Tape tape;
                GeneratedView view = generate_view(tape, model_.generator, graph_, adj_, inputs_.gumbel, c.hard_mask, true);
                Encoding u = encode(tape, model_.encoder, view.adj, tape.constant(inputs_.x1), inputs_.noise_u, false);
                LossBundle b;
                if (c.generator_objective == GeneratorObjective::kl) {
                    b.j2_prime = j2_prime_loss(u);
                } else {
                    Encoding v = encode(tape, model_.encoder, ViewAdjacency::of(inputs_.adj2), tape.constant(inputs_.x2), inputs_.noise_v, false);
                    b.j1 = j1_loss(tape, &model_.head, u, v, c.tau_nce, false);
                }
                Var loss = generator_loss(b, c.generator_objective);
                rec.generator_loss = loss.scalar();
                tape.backward(loss);
                mask_values = view.mask.value();
                rec.edge_preserve_rate = edge_preserve_rate(mask_values);
            } else {
                rec.edge_preserve_rate =
                    graph_.num_edges() ? static_cast<double>(inputs_.view1_graph.num_edges()) / static_cast<double>(graph_.num_edges()) : 1.0;
            }

            Tape tape;
            const bool step = rec.encoder_stepped;
            ViewAdjacency adj1 = c.view1 == ViewMode::learned ? ViewAdjacency::weighted(graph_.edges(), tape.constant(mask_values))
                                                              : ViewAdjacency::of(inputs_.adj1);
            Encoding u = encode(tape, model_.encoder, adj1, tape.constant(inputs_.x1), inputs_.noise_u, step);
            Encoding v = encode(tape, model_.encoder, ViewAdjacency::of(inputs_.adj2), tape.constant(inputs_.x2), inputs_.noise_v, step);
            LossBundle b;
            b.lambda = c.lambda;
            b.tau = c.tau_nce;
            b.j1 = j1_loss(tape, &model_.head, u, v, c.tau_nce, step);
            b.j2 = j2_loss(u, v);
            b.j2_prime = j2_prime_loss(u);
            Var loss = encoder_loss(b);
            rec.j1 = b.j1.scalar();
            rec.j2 = b.j2.scalar();
            rec.j2_prime = b.j2_prime.scalar();
            rec.encoder_loss = loss.scalar();
            if (c.view1 == ViewMode::random) rec.generator_loss = c.generator_objective == GeneratorObjective::kl ? rec.j2_prime : -rec.j1;
            if (step) tape.backward(loss);
        } catch (const NumericError& err) {
            throw NumericError("training diverged at epoch " + std::to_string(e) + ": " + err.what());
        }
        for (double v : {rec.j1, rec.j2, rec.j2_prime, rec.encoder_loss, rec.generator_loss})
            if (!std::isfinite(v)) throw NumericError("training diverged at epoch " + std::to_string(e) + ": non-finite loss");
        pending_ = rec;
        return rec;
    }

    /// φ ← Adam(φ, ∇φ generator loss). No-op for the random view-1 mode and
    /// for edgeless graphs (nothing to score).
    void apply_generator_step() {
        const auto& c = model_.config;
        if (c.view1 == ViewMode::learned && graph_.num_edges() > 0) adam_step(model_.generator.params, {c.lr_generator, 0.9, 0.999, 1e-8, c.weight_decay});
    }

    /// (θ, ω) ← Adam on J1 + λ J2 when this iteration is an encoder iteration.
    void apply_encoder_step() {
        const auto& c = model_.config;
        if (!pending_.encoder_stepped) return;
        const AdamOptions opt{c.lr_encoder, 0.9, 0.999, 1e-8, c.weight_decay};
        adam_step(model_.encoder.params, opt);
        adam_step(model_.head.params, opt);
    }

    EpochRecord run_epoch() {
        EpochRecord rec = compute_gradients();
        apply_generator_step();
        apply_encoder_step();
        ++epoch_;
        return rec;
    }

private:
    const Graph& graph_;
    TrainedModel model_;
    SparseMatrix adj_;
    int epoch_ = 0;
    EpochInputs inputs_;
    EpochRecord pending_;
};

/// Run cfg.epochs iterations; deterministic for a fixed seed.
inline TrainResult train(const Graph& g, const TrainConfig& cfg, const TrainOptions& opt = {}) {
    Trainer trainer(g, cfg);
    TrainLog log;
    log.records.reserve(static_cast<std::size_t>(cfg.epochs));
    for (int e = 0; e < cfg.epochs; ++e) {
        if (opt.before_epoch) opt.before_epoch(e + 1, trainer.model());
        const auto t0 = std::chrono::steady_clock::now();
        EpochRecord rec = trainer.run_epoch();
        if (opt.record_time) rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        log.records.push_back(rec);
    }
    return {std::move(trainer.model()), std::move(log)};
}

/// GRACE-equivalent baseline: random first view at rate p_ea and no KL term.
inline TrainConfig baseline_config(TrainConfig cfg) {
    cfg.lambda = 0.0;
    cfg.view1 = ViewMode::random;
    return cfg;
}

}  // namespace infoadv
