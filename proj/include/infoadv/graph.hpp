#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "core.hpp"
#include "rng.hpp"

namespace infoadv {

/// Undirected edge in canonical orientation (u < v).
struct Edge {
    Index u = 0;
    Index v = 0;
    friend bool operator==(const Edge&, const Edge&) = default;
    friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// Compressed sparse row matrix with real weights.
/// Column indices are strictly increasing inside each row and no explicit zeros are stored.
struct SparseMatrix {
    Index rows = 0;
    Index cols = 0;
    std::vector<Index> row_ptr{0};
    std::vector<Index> col_idx;
    std::vector<double> values;

    Index nnz() const { return static_cast<Index>(values.size()); }

    double at(Index r, Index c) const {
        const auto b = col_idx.begin() + row_ptr[r];
        const auto e = col_idx.begin() + row_ptr[r + 1];
        const auto it = std::lower_bound(b, e, c);
        return (it != e && *it == c) ? values[static_cast<std::size_t>(it - col_idx.begin())] : 0.0;
    }

    Mat multiply(const Mat& x) const {
        if (x.rows() != cols) throw ShapeError("spmm: sparse " + std::to_string(rows) + "x" + std::to_string(cols) + " times dense " + shape_str(x));
        Mat out = Mat::Zero(rows, x.cols());
        for (Index r = 0; r < rows; ++r)
            for (Index k = row_ptr[r]; k < row_ptr[r + 1]; ++k) out.row(r) += values[k] * x.row(col_idx[k]);
        return out;
    }

    /// this^T * x
    Mat multiply_transpose(const Mat& x) const {
        if (x.rows() != rows) throw ShapeError("spmm^T: shape mismatch " + shape_str(x));
        Mat out = Mat::Zero(cols, x.cols());
        for (Index r = 0; r < rows; ++r)
            for (Index k = row_ptr[r]; k < row_ptr[r + 1]; ++k) out.row(col_idx[k]) += values[k] * x.row(r);
        return out;
    }

    Mat to_dense() const {
        Mat d = Mat::Zero(rows, cols);
        for (Index r = 0; r < rows; ++r)
            for (Index k = row_ptr[r]; k < row_ptr[r + 1]; ++k) d(r, col_idx[k]) = values[k];
        return d;
    }

    /// Build from (row, col, value) triplets; duplicates are summed and zeros dropped.
    static SparseMatrix from_triplets(Index rows, Index cols, std::vector<std::tuple<Index, Index, double>> t) {
        std::sort(t.begin(), t.end(), [](const auto& a, const auto& b) {
            return std::tie(std::get<0>(a), std::get<1>(a)) < std::tie(std::get<0>(b), std::get<1>(b));
        });
        SparseMatrix m;
        m.rows = rows;
        m.cols = cols;
        m.row_ptr.assign(static_cast<std::size_t>(rows) + 1, 0);
        for (std::size_t i = 0; i < t.size();) {
            auto [r, c, v] = t[i];
            std::size_t j = i + 1;
            while (j < t.size() && std::get<0>(t[j]) == r && std::get<1>(t[j]) == c) v += std::get<2>(t[j++]);
            if (v != 0.0) {
                m.col_idx.push_back(c);
                m.values.push_back(v);
                ++m.row_ptr[static_cast<std::size_t>(r) + 1];
            }
            i = j;
        }
        for (Index r = 0; r < rows; ++r) m.row_ptr[r + 1] += m.row_ptr[r];
        return m;
    }
};

/// Undirected attributed graph. The adjacency is stored symmetrically in CSR
/// form without self-loops or duplicates; features has one row per node.
class Graph {
public:
    Graph() = default;

    /// Validating constructor: symmetrizes, deduplicates and drops self-loops.
    static Graph from_edges(Index num_nodes, const std::vector<std::pair<Index, Index>>& pairs, Mat features,
                            std::optional<std::vector<int>> labels = std::nullopt, std::optional<int> num_classes = std::nullopt) {
        if (features.rows() != num_nodes)
            throw DataError("features has " + std::to_string(features.rows()) + " rows, expected " + std::to_string(num_nodes));
        std::vector<Edge> canon;
        canon.reserve(pairs.size());
        for (const auto& [a, b] : pairs) {
            if (a < 0 || b < 0 || a >= num_nodes || b >= num_nodes)
                throw DataError("edge (" + std::to_string(a) + "," + std::to_string(b) + ") out of range for N=" + std::to_string(num_nodes));
            if (a == b) continue;
            canon.push_back(a < b ? Edge{a, b} : Edge{b, a});
        }
        std::sort(canon.begin(), canon.end());
        canon.erase(std::unique(canon.begin(), canon.end()), canon.end());
        if (labels) {
            if (static_cast<Index>(labels->size()) != num_nodes)
                throw DataError("labels has " + std::to_string(labels->size()) + " entries, expected " + std::to_string(num_nodes));
            int k = 0;
            for (int y : *labels) {
                if (y < 0) throw DataError("negative label " + std::to_string(y));
                k = std::max(k, y + 1);
            }
            if (!num_classes) num_classes = k;
            if (k > *num_classes) throw DataError("label id exceeds num_classes");
        }
        return Graph(num_nodes, std::move(canon), std::move(features), std::move(labels), num_classes);
    }

    /// Same node set and attributes, different canonical edge list (already validated).
    Graph with_edges(std::vector<Edge> canonical) const {
        std::sort(canonical.begin(), canonical.end());
        canonical.erase(std::unique(canonical.begin(), canonical.end()), canonical.end());
        return Graph(num_nodes_, std::move(canonical), features_, labels_, num_classes_);
    }

    Graph with_features(Mat features) const {
        if (features.rows() != num_nodes_) throw ShapeError("with_features: row count mismatch");
        return Graph(num_nodes_, edges_, std::move(features), labels_, num_classes_);
    }

    Index num_nodes() const { return num_nodes_; }
    Index num_edges() const { return static_cast<Index>(edges_.size()); }
    Index feat_dim() const { return features_.cols(); }
    const Mat& features() const { return features_; }
    const std::vector<Edge>& edges() const { return edges_; }
    const std::optional<std::vector<int>>& labels() const { return labels_; }
    std::optional<int> num_classes() const { return num_classes_; }

    Index degree(Index i) const { return row_ptr_[i + 1] - row_ptr_[i]; }
    std::span<const Index> neighbors(Index i) const {
        return {col_idx_.data() + row_ptr_[i], static_cast<std::size_t>(degree(i))};
    }

    bool has_edge(Index i, Index j) const {
        const auto nb = neighbors(i);
        return std::binary_search(nb.begin(), nb.end(), j);
    }

    /// Fraction of nonzero entries of the (symmetric) adjacency matrix.
    double density() const {
        const double n = static_cast<double>(num_nodes_);
        return n > 0 ? 2.0 * static_cast<double>(num_edges()) / (n * n) : 0.0;
    }

    bool is_symmetric() const {
        for (Index i = 0; i < num_nodes_; ++i)
            for (Index j : neighbors(i))
                if (j == i || !has_edge(j, i)) return false;
        return true;
    }

private:
    Graph(Index n, std::vector<Edge> edges, Mat features, std::optional<std::vector<int>> labels, std::optional<int> num_classes)
        : num_nodes_(n), edges_(std::move(edges)), features_(std::move(features)), labels_(std::move(labels)), num_classes_(num_classes) {
        row_ptr_.assign(static_cast<std::size_t>(n) + 1, 0);
        for (const auto& e : edges_) {
            ++row_ptr_[static_cast<std::size_t>(e.u) + 1];
            ++row_ptr_[static_cast<std::size_t>(e.v) + 1];
        }
        for (Index i = 0; i < n; ++i) row_ptr_[i + 1] += row_ptr_[i];
        col_idx_.resize(2 * edges_.size());
        std::vector<Index> fill(row_ptr_.begin(), row_ptr_.end() - 1);
        for (const auto& e : edges_) {
            col_idx_[fill[e.u]++] = e.v;
            col_idx_[fill[e.v]++] = e.u;
        }
        for (Index i = 0; i < n; ++i) std::sort(col_idx_.begin() + row_ptr_[i], col_idx_.begin() + row_ptr_[i + 1]);
    }

    Index num_nodes_ = 0;
    std::vector<Edge> edges_;
    std::vector<Index> row_ptr_{0};
    std::vector<Index> col_idx_;
    Mat features_;
    std::optional<std::vector<int>> labels_;
    std::optional<int> num_classes_;
};

// ---------------------------------------------------------------------------
// Canonical dataset directory:
//   meta.json     {"num_nodes":N,"feat_dim":D,"num_classes":K}
//   edges.tsv     "src\tdst" per line, 0-based, either orientation
//   features.csv  N rows of D comma-separated reals
//   labels.csv    optional, N integers (one per line)
// ---------------------------------------------------------------------------

namespace detail {

inline std::string where(const std::filesystem::path& p, std::size_t line) {
    return p.string() + ":" + std::to_string(line);
}

inline std::ifstream open_or_throw(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw DataError("cannot open " + p.string());
    return in;
}

inline bool blank(const std::string& s) {
    return s.find_first_not_of(" \t\r") == std::string::npos;
}

inline double parse_real(const std::string& tok, const std::filesystem::path& p, std::size_t line) {
    std::size_t used = 0;
    double v = 0;
    try {
        v = std::stod(tok, &used);
    } catch (const std::exception&) {
        throw DataError(where(p, line) + ": malformed number '" + tok + "'");
    }
    if (tok.find_first_not_of(" \t\r", used) != std::string::npos)
        throw DataError(where(p, line) + ": malformed number '" + tok + "'");
    if (!std::isfinite(v)) throw DataError(where(p, line) + ": non-finite value");
    return v;
}

inline long long parse_int(const std::string& tok, const std::filesystem::path& p, std::size_t line) {
    std::size_t used = 0;
    long long v = 0;
    try {
        v = std::stoll(tok, &used);
    } catch (const std::exception&) {
        throw DataError(where(p, line) + ": malformed integer '" + tok + "'");
    }
    if (tok.find_first_not_of(" \t\r", used) != std::string::npos)
        throw DataError(where(p, line) + ": malformed integer '" + tok + "'");
    return v;
}

}  // namespace detail

/// Load and validate a dataset directory in the canonical format.
inline Graph load_graph(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    using detail::where;
    const fs::path meta_path = dir / "meta.json";
    auto meta_in = detail::open_or_throw(meta_path);
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(meta_in);
    } catch (const std::exception& e) {
        throw DataError(meta_path.string() + ": " + e.what());
    }
    Index n = 0, d = 0;
    std::optional<int> k;
    try {
        n = meta.at("num_nodes").get<Index>();
        d = meta.at("feat_dim").get<Index>();
        if (meta.contains("num_classes") && !meta["num_classes"].is_null()) k = meta["num_classes"].get<int>();
    } catch (const std::exception& e) {
        throw DataError(meta_path.string() + ": " + e.what());
    }
    if (n <= 0 || d <= 0) throw DataError(meta_path.string() + ": num_nodes and feat_dim must be positive");

    const fs::path edge_path = dir / "edges.tsv";
    auto edge_in = detail::open_or_throw(edge_path);
    std::vector<std::pair<Index, Index>> pairs;
    std::string line;
    for (std::size_t ln = 1; std::getline(edge_in, line); ++ln) {
        if (detail::blank(line)) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) throw DataError(where(edge_path, ln) + ": expected 'src<TAB>dst'");
        const auto a = detail::parse_int(line.substr(0, tab), edge_path, ln);
        const auto b = detail::parse_int(line.substr(tab + 1), edge_path, ln);
        if (a < 0 || b < 0 || a >= n || b >= n)
            throw DataError(where(edge_path, ln) + ": index out of range (" + std::to_string(a) + "," + std::to_string(b) +
                            ") for num_nodes=" + std::to_string(n));
        pairs.emplace_back(a, b);
    }

    const fs::path feat_path = dir / "features.csv";
    auto feat_in = detail::open_or_throw(feat_path);
    Mat x(n, d);
    Index row = 0;
    for (std::size_t ln = 1; std::getline(feat_in, line); ++ln) {
        if (detail::blank(line)) continue;
        if (row >= n) throw DataError(where(feat_path, ln) + ": more feature rows than num_nodes=" + std::to_string(n));
        std::stringstream ss(line);
        std::string tok;
        Index col = 0;
        while (std::getline(ss, tok, ',')) {
            if (col >= d) throw DataError(where(feat_path, ln) + ": more than feat_dim=" + std::to_string(d) + " columns");
            x(row, col++) = detail::parse_real(tok, feat_path, ln);
        }
        if (col != d) throw DataError(where(feat_path, ln) + ": expected " + std::to_string(d) + " columns, got " + std::to_string(col));
        ++row;
    }
    if (row != n) throw DataError(feat_path.string() + ": " + std::to_string(row) + " feature rows, header says num_nodes=" + std::to_string(n));

    std::optional<std::vector<int>> labels;
    const fs::path label_path = dir / "labels.csv";
    if (fs::exists(label_path)) {
        auto lab_in = detail::open_or_throw(label_path);
        std::vector<int> y;
        for (std::size_t ln = 1; std::getline(lab_in, line); ++ln) {
            if (detail::blank(line)) continue;
            const auto v = detail::parse_int(line, label_path, ln);
            if (v < 0 || (k && v >= *k)) throw DataError(where(label_path, ln) + ": label " + std::to_string(v) + " out of range");
            y.push_back(static_cast<int>(v));
        }
        if (static_cast<Index>(y.size()) != n)
            throw DataError(label_path.string() + ": " + std::to_string(y.size()) + " labels, header says num_nodes=" + std::to_string(n));
        labels = std::move(y);
    }
    return Graph::from_edges(n, pairs, std::move(x), std::move(labels), k);
}

/// Write a graph in the canonical format (round-trip exact for features).
inline void save_graph(const Graph& g, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::json meta = {{"num_nodes", g.num_nodes()}, {"feat_dim", g.feat_dim()}};
    meta["num_classes"] = g.num_classes() ? nlohmann::json(*g.num_classes()) : nlohmann::json(nullptr);
    std::ofstream(dir / "meta.json") << meta.dump(2) << "\n";
    {
        std::ofstream out(dir / "edges.tsv");
        for (const auto& e : g.edges()) out << e.u << '\t' << e.v << '\n';
    }
    {
        std::ofstream out(dir / "features.csv");
        out.precision(17);
        for (Index i = 0; i < g.num_nodes(); ++i) {
            for (Index j = 0; j < g.feat_dim(); ++j) out << (j ? "," : "") << g.features()(i, j);
            out << '\n';
        }
    }
    if (g.labels()) {
        std::ofstream out(dir / "labels.csv");
        for (int y : *g.labels()) out << y << '\n';
    }
}

/// D^{-1/2} (A_w + I) D^{-1/2} for edge weights w (one per canonical edge),
/// where D is the degree matrix of A_w + I.
inline SparseMatrix normalize_weighted(Index num_nodes, std::span<const Edge> edges, std::span<const double> weights) {
    if (edges.size() != weights.size()) throw ShapeError("normalize_weighted: one weight per edge required");
    std::vector<double> deg(static_cast<std::size_t>(num_nodes), 1.0);
    for (std::size_t e = 0; e < edges.size(); ++e) {
        deg[edges[e].u] += weights[e];
        deg[edges[e].v] += weights[e];
    }
    std::vector<std::tuple<Index, Index, double>> t;
    t.reserve(static_cast<std::size_t>(num_nodes) + 2 * edges.size());
    for (Index i = 0; i < num_nodes; ++i) t.emplace_back(i, i, 1.0 / deg[i]);
    for (std::size_t e = 0; e < edges.size(); ++e) {
        const auto [u, v] = edges[e];
        const double c = weights[e] / std::sqrt(deg[u] * deg[v]);
        t.emplace_back(u, v, c);
        t.emplace_back(v, u, c);
    }
    return SparseMatrix::from_triplets(num_nodes, num_nodes, std::move(t));
}

/// Symmetric GCN normalization of the unweighted adjacency with self-loops.
inline SparseMatrix sym_normalize(const Graph& g) {
    const std::vector<double> ones(g.edges().size(), 1.0);
    return normalize_weighted(g.num_nodes(), g.edges(), ones);
}

/// Add each absent unordered pair independently with probability h.
inline Graph inject_noise(const Graph& g, double h, std::uint64_t seed) {
    if (!(h >= 0.0 && h <= 1.0)) throw ConfigError("inject_noise: h must be in [0,1]");
    if (h == 0.0) return g;
    Rng rng(derive_seed(seed, 0x6e6f697365ULL));
    std::vector<Edge> edges = g.edges();
    const Index n = g.num_nodes();
    for (Index i = 0; i < n; ++i)
        for (Index j = i + 1; j < n; ++j)
            if (rng.bernoulli(h) && !g.has_edge(i, j)) edges.push_back({i, j});
    return g.with_edges(std::move(edges));
}

/// Stochastic block model with class-mean features plus isotropic Gaussian noise.
inline Graph sbm_generate(const std::vector<Index>& blocks, double p_in, double p_out, Index feat_dim, double feat_noise,
                          std::uint64_t seed) {
    if (blocks.empty()) throw ConfigError("sbm_generate: no blocks");
    for (Index b : blocks)
        if (b <= 0) throw ConfigError("sbm_generate: empty block");
    if (!(p_in >= 0 && p_in <= 1 && p_out >= 0 && p_out <= 1)) throw ConfigError("sbm_generate: probabilities must lie in [0,1]");
    if (feat_dim <= 0 || feat_noise < 0) throw ConfigError("sbm_generate: feat_dim > 0 and feat_noise >= 0 required");
    Rng rng(derive_seed(seed, 0x73626dULL));
    std::vector<int> labels;
    for (std::size_t c = 0; c < blocks.size(); ++c) labels.insert(labels.end(), static_cast<std::size_t>(blocks[c]), static_cast<int>(c));
    const auto n = static_cast<Index>(labels.size());
    std::vector<std::pair<Index, Index>> pairs;
    for (Index i = 0; i < n; ++i)
        for (Index j = i + 1; j < n; ++j)
            if (rng.bernoulli(labels[i] == labels[j] ? p_in : p_out)) pairs.emplace_back(i, j);
    const Mat means = rng.normal_matrix(static_cast<Index>(blocks.size()), feat_dim);
    Mat x(n, feat_dim);
    for (Index i = 0; i < n; ++i) {
        x.row(i) = means.row(labels[i]);
        if (feat_noise > 0)
            for (Index j = 0; j < feat_dim; ++j) x(i, j) += feat_noise * rng.normal();
    }
    return Graph::from_edges(n, pairs, std::move(x), std::move(labels), static_cast<int>(blocks.size()));
}

/// Positive/negative edge split for link prediction.
struct LinkSplit {
    std::vector<Edge> train_edges;
    std::vector<Edge> val_edges;
    std::vector<Edge> test_edges;
    std::vector<Edge> val_negatives;
    std::vector<Edge> test_negatives;
};

/// Partition edges at the given ratios (test takes the remainder) and draw
/// 1:1 negatives uniformly from absent pairs.
inline LinkSplit split_links(const Graph& g, double train_ratio, double val_ratio, std::uint64_t seed) {
    const Index m = g.num_edges();
    if (m < 20) throw DataError("split_links: graph needs at least 20 edges, has " + std::to_string(m));
    if (!(train_ratio > 0 && val_ratio >= 0 && train_ratio + val_ratio < 1)) throw ConfigError("split_links: invalid ratios");
    Rng rng(derive_seed(seed, 0x6c696e6bULL));
    std::vector<Edge> edges = g.edges();
    rng.shuffle(edges);
    const auto n_train = static_cast<std::size_t>(std::llround(train_ratio * static_cast<double>(m)));
    const auto n_val = static_cast<std::size_t>(std::llround(val_ratio * static_cast<double>(m)));
    LinkSplit s;
    s.train_edges.assign(edges.begin(), edges.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.val_edges.assign(edges.begin() + static_cast<std::ptrdiff_t>(n_train), edges.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    s.test_edges.assign(edges.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), edges.end());
    std::sort(s.train_edges.begin(), s.train_edges.end());

    const Index n = g.num_nodes();
    const double pairs = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
    const std::size_t needed = s.val_edges.size() + s.test_edges.size();
    if (pairs - static_cast<double>(m) < static_cast<double>(needed))
        throw DataError("split_links: graph too dense to sample " + std::to_string(needed) + " negatives");
    std::vector<Edge> negatives;
    std::vector<Edge> seen;  // kept sorted
    std::size_t attempts = 0;
    const std::size_t max_attempts = 1000 * needed + 100000;
    while (negatives.size() < needed) {
        if (++attempts > max_attempts) throw DataError("split_links: graph too dense to sample negatives");
        Index a = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
        Index b = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
        if (a == b || g.has_edge(a, b)) continue;
        const Edge e = a < b ? Edge{a, b} : Edge{b, a};
        const auto it = std::lower_bound(seen.begin(), seen.end(), e);
        if (it != seen.end() && *it == e) continue;
        seen.insert(it, e);
        negatives.push_back(e);
    }
    s.val_negatives.assign(negatives.begin(), negatives.begin() + static_cast<std::ptrdiff_t>(s.val_edges.size()));
    s.test_negatives.assign(negatives.begin() + static_cast<std::ptrdiff_t>(s.val_edges.size()), negatives.end());
    return s;
}

inline LinkSplit split_links(const Graph& g, std::uint64_t seed) { return split_links(g, 0.85, 0.05, seed); }

/// Keep-mask over feature columns: column j is zeroed for every node with probability p_f.
inline std::vector<bool> feature_column_mask(Index dims, double p_f, std::uint64_t seed) {
    if (!(p_f >= 0.0 && p_f < 1.0)) throw ConfigError("feature_mask: p_f must be in [0,1)");
    Rng rng(derive_seed(seed, 0x666d61736bULL));
    std::vector<bool> keep(static_cast<std::size_t>(dims));
    for (Index j = 0; j < dims; ++j) keep[j] = !rng.bernoulli(p_f);
    return keep;
}

/// Column-wise feature masking; surviving columns are not rescaled.
inline Mat feature_mask(const Mat& x, double p_f, std::uint64_t seed) {
    const auto keep = feature_column_mask(x.cols(), p_f, seed);
    Mat out = x;
    for (Index j = 0; j < x.cols(); ++j)
        if (!keep[j]) out.col(j).setZero();
    return out;
}

/// Remove each undirected edge independently with probability p_e.
inline Graph drop_edges_random(const Graph& g, double p_e, std::uint64_t seed) {
    if (!(p_e >= 0.0 && p_e < 1.0)) throw ConfigError("drop_edges_random: p_e must be in [0,1)");
    if (p_e == 0.0) return g;
    Rng rng(derive_seed(seed, 0x64726f70ULL));
    std::vector<Edge> kept;
    kept.reserve(g.edges().size());
    for (const auto& e : g.edges())
        if (!rng.bernoulli(p_e)) kept.push_back(e);
    return g.with_edges(std::move(kept));
}

}  // namespace infoadv
