#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "core.hpp"
#include "graph.hpp"
#include "rng.hpp"

namespace infoadv {

// ---------------------------------------------------------------------------
// Classification metrics
// ---------------------------------------------------------------------------

/// Micro-averaged F1 from global TP/FP/FN counts over all classes.
inline double f1_micro(const std::vector<int>& predicted, const std::vector<int>& truth) {
    if (predicted.size() != truth.size()) throw ShapeError("f1_micro: size mismatch");
    if (truth.empty()) throw ShapeError("f1_micro: empty input");
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (predicted[i] == truth[i]) {
            tp += 1;
        } else {
            fp += 1;  // counted against the predicted class
            fn += 1;  // and against the true class
        }
    }
    return 2 * tp / (2 * tp + fp + fn);
}

inline double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth) {
    if (predicted.size() != truth.size() || truth.empty()) throw ShapeError("accuracy: bad input sizes");
    std::size_t hit = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) hit += predicted[i] == truth[i];
    return static_cast<double>(hit) / static_cast<double>(truth.size());
}

inline Mat rows_of(const Mat& x, const std::vector<Index>& idx) {
    Mat out(static_cast<Index>(idx.size()), x.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) out.row(static_cast<Index>(k)) = x.row(idx[k]);
    return out;
}

inline std::vector<int> labels_of(const std::vector<int>& y, const std::vector<Index>& idx) {
    std::vector<int> out;
    out.reserve(idx.size());
    for (Index i : idx) out.push_back(y[static_cast<std::size_t>(i)]);
    return out;
}

inline Mat l2_normalize_rows(const Mat& x) {
    Mat out = x;
    for (Index i = 0; i < x.rows(); ++i) {
        const double n = x.row(i).norm();
        if (n > 0) out.row(i) /= n;
    }
    return out;
}

inline std::vector<int> argmax_rows(const Mat& logits) {
    std::vector<int> out(static_cast<std::size_t>(logits.rows()));
    for (Index i = 0; i < logits.rows(); ++i) {
        Index best = 0;
        logits.row(i).maxCoeff(&best);
        out[i] = static_cast<int>(best);
    }
    return out;
}

/// Mean softmax cross-entropy of integer labels under row logits.
inline double softmax_cross_entropy(const Mat& logits, const std::vector<int>& y) {
    if (static_cast<Index>(y.size()) != logits.rows() || y.empty()) throw ShapeError("cross_entropy: size mismatch");
    double total = 0;
    for (Index i = 0; i < logits.rows(); ++i) {
        const double mx = logits.row(i).maxCoeff();
        const double lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
        total += lse - logits(i, y[i]);
    }
    return total / static_cast<double>(y.size());
}

// ---------------------------------------------------------------------------
// Multinomial logistic regression (linear probe)
// ---------------------------------------------------------------------------

struct LogisticRegression {
    Mat weights;  // D x K
    Mat bias;     // 1 x K

    Mat logits(const Mat& x) const { return (x * weights).rowwise() + bias.row(0); }
    std::vector<int> predict(const Mat& x) const { return argmax_rows(logits(x)); }
};

struct ProbeOptions {
    double train_fraction = 0.10;
    int folds = 5;
    int steps = 500;
    double step_size = 0.1;
    std::vector<double> penalty_grid{1e-4, 1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2};
};

/// Full-batch gradient descent on mean cross-entropy + (penalty/2)||W||².
/// The penalty is applied as a proximal step, which stays stable for any
/// penalty strength at the fixed step size.
inline LogisticRegression fit_logistic(const Mat& x, const std::vector<int>& y, int num_classes, double penalty, int steps, double step_size) {
    if (static_cast<Index>(y.size()) != x.rows() || y.empty()) throw ShapeError("fit_logistic: size mismatch");
    LogisticRegression lr{Mat::Zero(x.cols(), num_classes), Mat::Zero(1, num_classes)};
    const double inv_n = 1.0 / static_cast<double>(x.rows());
    Mat p(x.rows(), num_classes);
    for (int s = 0; s < steps; ++s) {
        p = lr.logits(x);
        for (Index i = 0; i < p.rows(); ++i) {
            const double mx = p.row(i).maxCoeff();
            p.row(i) = (p.row(i).array() - mx).exp();
            p.row(i) /= p.row(i).sum();
            p(i, y[i]) -= 1.0;
        }
        lr.weights -= step_size * inv_n * (x.transpose() * p);
        lr.bias -= step_size * inv_n * p.colwise().sum();
        lr.weights /= 1.0 + step_size * penalty;
    }
    return lr;
}

struct TrainTestSplit {
    std::vector<Index> train;
    std::vector<Index> test;
};

/// Random train split of the given fraction; re-drawn with per-class
/// stratification when some class is missing from the train side.
inline TrainTestSplit classification_split(const std::vector<int>& y, int num_classes, double train_fraction, std::uint64_t seed) {
    const auto n = static_cast<Index>(y.size());
    Rng rng(derive_seed(seed, 0x70726f6265ULL));
    std::vector<Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Index{0});
    rng.shuffle(perm);
    const auto n_train = std::max<Index>(1, static_cast<Index>(std::llround(train_fraction * static_cast<double>(n))));
    TrainTestSplit s;
    s.train.assign(perm.begin(), perm.begin() + n_train);
    s.test.assign(perm.begin() + n_train, perm.end());
    std::vector<int> present(static_cast<std::size_t>(num_classes), 0);
    for (Index i : s.train) present[y[i]] = 1;
    if (std::find(present.begin(), present.end(), 0) == present.end()) return s;

    // Stratified redraw: each class contributes round(fraction * size), at least one.
    std::vector<std::vector<Index>> by_class(static_cast<std::size_t>(num_classes));
    for (Index i : perm) by_class[y[i]].push_back(i);
    s.train.clear();
    s.test.clear();
    for (const auto& members : by_class) {
        if (members.empty()) continue;
        const auto k = std::clamp<Index>(static_cast<Index>(std::llround(train_fraction * static_cast<double>(members.size()))), 1,
                                         static_cast<Index>(members.size()));
        s.train.insert(s.train.end(), members.begin(), members.begin() + k);
        s.test.insert(s.test.end(), members.begin() + k, members.end());
    }
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.test.begin(), s.test.end());
    return s;
}

struct ProbeResult {
    double f1 = 0;
    double penalty = 0;
};

/// Linear evaluation: L2-normalize embeddings, take a random 10% train split,
/// pick the L2 penalty by k-fold CV on it, refit on the whole train split and
/// report F1-micro on the remaining nodes.
inline ProbeResult linear_probe(const Mat& embeddings, const std::vector<int>& labels, std::uint64_t seed, const ProbeOptions& opt = {}) {
    if (static_cast<Index>(labels.size()) != embeddings.rows()) throw ShapeError("linear_probe: one label per node required");
    const int k = *std::max_element(labels.begin(), labels.end()) + 1;
    const Mat x = l2_normalize_rows(embeddings);
    const auto split = classification_split(labels, k, opt.train_fraction, seed);
    if (split.test.empty()) throw ShapeError("linear_probe: no test nodes");

    const auto nt = split.train.size();
    const int folds = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(opt.folds), nt));
    double best_score = -1;
    double best_penalty = opt.penalty_grid.front();
    for (double penalty : opt.penalty_grid) {
        double score = 0;
        if (folds >= 2) {
            for (int f = 0; f < folds; ++f) {
                std::vector<Index> fit_idx, held_idx;
                for (std::size_t i = 0; i < nt; ++i) (static_cast<int>(i % static_cast<std::size_t>(folds)) == f ? held_idx : fit_idx).push_back(split.train[i]);
                const auto model = fit_logistic(rows_of(x, fit_idx), labels_of(labels, fit_idx), k, penalty, opt.steps, opt.step_size);
                score += accuracy(model.predict(rows_of(x, held_idx)), labels_of(labels, held_idx));
            }
            score /= folds;
        }
        if (score > best_score) {
            best_score = score;
            best_penalty = penalty;
        }
    }
    const auto model = fit_logistic(rows_of(x, split.train), labels_of(labels, split.train), k, best_penalty, opt.steps, opt.step_size);
    return {f1_micro(model.predict(rows_of(x, split.test)), labels_of(labels, split.test)), best_penalty};
}

// ---------------------------------------------------------------------------
// Mean Classifier
// ---------------------------------------------------------------------------

enum class MeanRule { inner, euclidean };

inline MeanRule parse_mean_rule(const std::string& s) {
    if (s == "inner") return MeanRule::inner;
    if (s == "euclidean") return MeanRule::euclidean;
    throw ConfigError("unknown mean classifier rule '" + s + "'");
}

/// Row k holds the mean embedding of training nodes labelled k.
struct MeanClassifier {
    Mat means;  // K x D
    MeanRule rule = MeanRule::inner;

    static MeanClassifier fit(const Mat& emb, const std::vector<int>& labels, const std::vector<Index>& train, int num_classes,
                              MeanRule rule = MeanRule::inner) {
        MeanClassifier mc;
        mc.rule = rule;
        mc.means = Mat::Zero(num_classes, emb.cols());
        std::vector<double> count(static_cast<std::size_t>(num_classes), 0.0);
        for (Index i : train) {
            mc.means.row(labels[i]) += emb.row(i);
            count[labels[i]] += 1;
        }
        for (int c = 0; c < num_classes; ++c) {
            if (count[c] == 0) throw ShapeError("mean classifier: class " + std::to_string(c) + " has no training nodes");
            mc.means.row(c) /= count[c];
        }
        return mc;
    }

    /// Inner products with the class means, or negative squared distances.
    Mat logits(const Mat& emb) const {
        Mat s = emb * means.transpose();
        if (rule == MeanRule::euclidean)
            for (Index i = 0; i < s.rows(); ++i)
                for (Index k = 0; k < s.cols(); ++k) s(i, k) = -(emb.row(i) - means.row(k)).squaredNorm();
        return s;
    }

    std::vector<int> predict(const Mat& emb) const { return argmax_rows(logits(emb)); }
};

inline double mean_classifier_eval(const Mat& emb, const std::vector<int>& labels, const std::vector<bool>& train_mask,
                                   MeanRule rule = MeanRule::inner) {
    if (labels.size() != train_mask.size() || static_cast<Index>(labels.size()) != emb.rows()) throw ShapeError("mean_classifier_eval: size mismatch");
    std::vector<Index> train, test;
    for (std::size_t i = 0; i < labels.size(); ++i) (train_mask[i] ? train : test).push_back(static_cast<Index>(i));
    if (test.empty()) throw ShapeError("mean_classifier_eval: no test nodes");
    const int k = *std::max_element(labels.begin(), labels.end()) + 1;
    const auto mc = MeanClassifier::fit(emb, labels, train, k, rule);
    return f1_micro(mc.predict(rows_of(emb, test)), labels_of(labels, test));
}

// ---------------------------------------------------------------------------
// Ranking metrics and link prediction
// ---------------------------------------------------------------------------

/// AUC via the rank-sum statistic with mid-ranks for ties (ties count 1/2).
inline double auc_score(const std::vector<double>& pos, const std::vector<double>& neg) {
    if (pos.empty() || neg.empty()) throw ShapeError("auc: empty positive or negative set");
    std::vector<std::pair<double, int>> all;
    all.reserve(pos.size() + neg.size());
    for (double s : pos) all.emplace_back(s, 1);
    for (double s : neg) all.emplace_back(s, 0);
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    double rank_sum = 0;
    for (std::size_t i = 0; i < all.size();) {
        std::size_t j = i;
        while (j < all.size() && all[j].first == all[i].first) ++j;
        const double mid = 0.5 * static_cast<double>(i + 1 + j);  // average of ranks i+1..j
        for (std::size_t k = i; k < j; ++k)
            if (all[k].second) rank_sum += mid;
        i = j;
    }
    const double p = static_cast<double>(pos.size()), n = static_cast<double>(neg.size());
    return (rank_sum - p * (p + 1) / 2) / (p * n);
}

/// Average precision: Σ (R_k − R_{k−1}) P_k over descending score thresholds,
/// tied scores forming a single threshold.
inline double average_precision(const std::vector<double>& pos, const std::vector<double>& neg) {
    if (pos.empty() || neg.empty()) throw ShapeError("average_precision: empty positive or negative set");
    std::vector<std::pair<double, int>> all;
    for (double s : pos) all.emplace_back(s, 1);
    for (double s : neg) all.emplace_back(s, 0);
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    double tp = 0, fp = 0, ap = 0;
    const double total_pos = static_cast<double>(pos.size());
    for (std::size_t i = 0; i < all.size();) {
        std::size_t j = i;
        double group_pos = 0;
        while (j < all.size() && all[j].first == all[i].first) {
            group_pos += all[j].second;
            fp += 1 - all[j].second;
            ++j;
        }
        tp += group_pos;
        if (group_pos > 0) ap += (group_pos / total_pos) * (tp / (tp + fp));
        i = j;
    }
    return ap;
}

inline double link_score(const Mat& emb, const Edge& e) {
    const double z = emb.row(e.u).dot(emb.row(e.v));
    return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

struct LinkMetrics {
    double auc = 0;
    double ap = 0;
};

inline LinkMetrics link_metrics(const Mat& emb, const std::vector<Edge>& positives, const std::vector<Edge>& negatives) {
    std::vector<double> p, n;
    for (const auto& e : positives) p.push_back(link_score(emb, e));
    for (const auto& e : negatives) n.push_back(link_score(emb, e));
    return {auc_score(p, n), average_precision(p, n)};
}

/// Test-set AUC/AP of sigmoid(<z_i, z_j>) scores.
inline LinkMetrics link_predict_eval(const Mat& emb, const LinkSplit& split) { return link_metrics(emb, split.test_edges, split.test_negatives); }

// ---------------------------------------------------------------------------
// Generalization gap metric
// ---------------------------------------------------------------------------

/// |L_T(e)/L_T(1) − L_P(e)/L_P(1)| per epoch, where L_P is the pretext loss
/// series and L_T the downstream (Mean Classifier) loss series.
inline std::vector<double> gcl_ge(const std::vector<double>& pretext, const std::vector<double>& downstream) {
    if (pretext.empty() || downstream.empty()) throw ShapeError("gcl_ge: empty series");
    if (pretext.size() != downstream.size()) throw ShapeError("gcl_ge: series lengths differ");
    if (pretext.front() == 0.0 || downstream.front() == 0.0) throw NumericError("gcl_ge: zero first-epoch loss");
    std::vector<double> out(pretext.size());
    for (std::size_t e = 0; e < pretext.size(); ++e) out[e] = std::abs(downstream[e] / downstream.front() - pretext[e] / pretext.front());
    return out;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// Per-seed metric values with summary statistics (population std).
struct EvalReport {
    std::string task;
    std::string dataset;
    std::string variant;
    std::vector<std::uint64_t> seeds;
    std::map<std::string, std::vector<double>> values;  // metric -> per-seed values

    static double mean_of(const std::vector<double>& v) {
        return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    }
    static double std_of(const std::vector<double>& v) {
        if (v.empty()) return 0.0;
        const double m = mean_of(v);
        double s = 0;
        for (double x : v) s += (x - m) * (x - m);
        return std::sqrt(s / static_cast<double>(v.size()));
    }
    double mean(const std::string& metric) const { return mean_of(values.at(metric)); }
    double std(const std::string& metric) const { return std_of(values.at(metric)); }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["task"] = task;
        j["dataset"] = dataset;
        j["variant"] = variant;
        j["seeds"] = seeds;
        for (const auto& [name, v] : values) j["metrics"][name] = {{"per_seed", v}, {"mean", mean_of(v)}, {"std", std_of(v)}};
        return j;
    }

    /// Header "dataset,variant,seed,<metric>..." then one row per seed.
    std::string to_csv() const {
        std::string out = "dataset,variant,seed";
        for (const auto& kv : values) out += "," + kv.first;
        out += "\n";
        for (std::size_t s = 0; s < seeds.size(); ++s) {
            out += dataset + "," + variant + "," + std::to_string(seeds[s]);
            for (const auto& kv : values) {
                char buf[64];
                const auto r = std::to_chars(buf, buf + sizeof(buf), kv.second[s]);
                out += "," + std::string(buf, r.ptr);
            }
            out += "\n";
        }
        return out;
    }
};

}  // namespace infoadv
