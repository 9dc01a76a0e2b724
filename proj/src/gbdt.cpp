#include "gpupower/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>

namespace gpupower {

void GbdtParams::validate() const {
    if (rounds < 1) throw InvalidInput("rounds must be >= 1");
    if (!(learning_rate > 0.0 && learning_rate <= 1.0)) throw InvalidInput("learning_rate must be in (0,1]");
    if (max_leaves < 2) throw InvalidInput("max_leaves must be >= 2");
    if (min_samples_leaf < 1) throw InvalidInput("min_samples_leaf must be >= 1");
    if (bins < 2 || bins > 255) throw InvalidInput("bins must be in [2,255]");
    if (!(l2 >= 0.0)) throw InvalidInput("l2 must be >= 0");
    if (!(min_child_hessian >= 0.0)) throw InvalidInput("min_child_hessian must be >= 0");
    if (early_stopping_rounds < 0) throw InvalidInput("early_stopping_rounds must be >= 0");
    if (early_stopping_rounds > 0 && !(validation_fraction > 0.0 && validation_fraction < 1.0)) {
        throw InvalidInput("validation_fraction must be in (0,1)");
    }
}

Json GbdtParams::to_json() const {
    return Json{{"rounds", rounds},
                {"learning_rate", learning_rate},
                {"max_leaves", max_leaves},
                {"min_samples_leaf", min_samples_leaf},
                {"bins", bins},
                {"l2", l2},
                {"min_child_hessian", min_child_hessian},
                {"early_stopping_rounds", early_stopping_rounds},
                {"validation_fraction", validation_fraction}};
}

GbdtParams GbdtParams::from_json(const Json& j) {
    GbdtParams p;
    p.rounds = j.value("rounds", p.rounds);
    p.learning_rate = j.value("learning_rate", p.learning_rate);
    p.max_leaves = j.value("max_leaves", p.max_leaves);
    p.min_samples_leaf = j.value("min_samples_leaf", p.min_samples_leaf);
    p.bins = j.value("bins", p.bins);
    p.l2 = j.value("l2", p.l2);
    p.min_child_hessian = j.value("min_child_hessian", p.min_child_hessian);
    p.early_stopping_rounds = j.value("early_stopping_rounds", p.early_stopping_rounds);
    p.validation_fraction = j.value("validation_fraction", p.validation_fraction);
    p.validate();
    return p;
}

int Tree::leaf_index(std::span<const double> x) const {
    int n = 0;
    while (!nodes_[static_cast<std::size_t>(n)].is_leaf()) {
        const auto& node = nodes_[static_cast<std::size_t>(n)];
        const double v = x[static_cast<std::size_t>(node.feature)];
        const bool go_left = std::isnan(v) ? node.default_left : v <= node.threshold;
        n = go_left ? node.left : node.right;
    }
    return n;
}

std::size_t Tree::leaf_count() const {
    return static_cast<std::size_t>(
        std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

namespace {

Json node_to_json(const std::vector<TreeNode>& nodes, int index) {
    const auto& n = nodes.at(static_cast<std::size_t>(index));
    if (n.is_leaf()) return Json{{"leaf_value", n.value}, {"count", n.count}};
    return Json{{"split_feature", n.feature},
                {"threshold", n.threshold},
                {"default_left", n.default_left},
                {"gain", n.gain},
                {"count", n.count},
                {"left", node_to_json(nodes, n.left)},
                {"right", node_to_json(nodes, n.right)}};
}

int node_from_json(const Json& j, std::vector<TreeNode>& nodes) {
    const int index = static_cast<int>(nodes.size());
    nodes.emplace_back();
    TreeNode n;
    n.count = j.at("count").get<int>();
    if (j.contains("leaf_value")) {
        n.value = j.at("leaf_value").get<double>();
        nodes[static_cast<std::size_t>(index)] = n;
        return index;
    }
    n.feature = j.at("split_feature").get<int>();
    n.threshold = j.at("threshold").get<double>();
    n.default_left = j.at("default_left").get<bool>();
    n.gain = j.at("gain").get<double>();
    n.left = node_from_json(j.at("left"), nodes);
    n.right = node_from_json(j.at("right"), nodes);
    nodes[static_cast<std::size_t>(index)] = n;
    return index;
}

}  // namespace

Json Tree::to_json() const { return node_to_json(nodes_, 0); }

Tree Tree::from_json(const Json& j) {
    std::vector<TreeNode> nodes;
    node_from_json(j, nodes);
    return Tree(std::move(nodes));
}

std::vector<double> compute_bin_edges(std::span<const double> column, int max_bins) {
    std::map<double, std::size_t> counts;
    std::size_t total = 0;
    for (double v : column) {
        if (std::isnan(v)) continue;
        ++counts[v];
        ++total;
    }
    std::vector<std::pair<double, std::size_t>> distinct(counts.begin(), counts.end());
    const auto midpoint = [](double a, double b) {
        const double m = a + (b - a) / 2.0;
        return m < b ? m : a;  // a <= m < b so both neighbours land in different bins
    };
    std::vector<double> edges;
    if (distinct.size() <= 1) return edges;
    if (distinct.size() <= static_cast<std::size_t>(max_bins)) {
        for (std::size_t i = 0; i + 1 < distinct.size(); ++i) {
            edges.push_back(midpoint(distinct[i].first, distinct[i + 1].first));
        }
        return edges;
    }
    const double per_bin = static_cast<double>(total) / max_bins;
    std::size_t acc = 0;
    for (std::size_t i = 0; i + 1 < distinct.size(); ++i) {
        acc += distinct[i].second;
        if (static_cast<double>(acc) >= per_bin * static_cast<double>(edges.size() + 1) &&
            edges.size() + 1 < static_cast<std::size_t>(max_bins)) {
            edges.push_back(midpoint(distinct[i].first, distinct[i + 1].first));
        }
    }
    return edges;
}

namespace {

using Bin = std::uint16_t;

/// Training matrix mapped to histogram bins, column major.
struct BinnedData {
    std::size_t rows = 0;
    std::vector<std::vector<double>> edges;
    std::vector<std::vector<Bin>> bins;  // bins[f][row]
    std::vector<Bin> nan_bin;            // = edges[f].size() + 1

    std::size_t bin_count(std::size_t f) const { return edges[f].size() + 2; }
};

Bin bin_of(const std::vector<double>& edges, double v) {
    if (std::isnan(v)) return static_cast<Bin>(edges.size() + 1);
    return static_cast<Bin>(std::lower_bound(edges.begin(), edges.end(), v) - edges.begin());
}

BinnedData bin_matrix(const Matrix& X, int max_bins, std::span<const std::size_t> rows) {
    BinnedData d;
    d.rows = rows.size();
    d.edges.resize(X.cols());
    d.bins.resize(X.cols());
    d.nan_bin.resize(X.cols());
    std::vector<double> column(rows.size());
    for (std::size_t f = 0; f < X.cols(); ++f) {
        for (std::size_t i = 0; i < rows.size(); ++i) column[i] = X(rows[i], f);
        d.edges[f] = compute_bin_edges(column, max_bins);
        d.nan_bin[f] = static_cast<Bin>(d.edges[f].size() + 1);
        d.bins[f].resize(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) d.bins[f][i] = bin_of(d.edges[f], column[i]);
    }
    return d;
}

struct HistBin {
    double g = 0.0;
    double h = 0.0;
    std::size_t n = 0;
};

struct SplitCandidate {
    bool valid = false;
    int feature = -1;
    Bin bin = 0;  // rows with bin <= this go left
    bool default_left = true;
    double gain = 0.0;
};

struct LeafState {
    std::vector<std::uint32_t> rows;
    double g = 0.0;
    double h = 0.0;
    int node = 0;
    SplitCandidate best;
};

class TreeBuilder {
public:
    TreeBuilder(const BinnedData& data, const GbdtParams& params) : data_(data), params_(params) {}

    /// Grows one leaf-wise tree on the given gradients. leaf_of_row receives
    /// the node index every training row falls into.
    Tree build(std::span<const double> g, std::span<const double> h, std::vector<int>& leaf_of_row) {
        g_ = g;
        h_ = h;
        std::vector<TreeNode> nodes(1);
        std::vector<LeafState> leaves(1);
        leaves[0].rows.resize(data_.rows);
        std::iota(leaves[0].rows.begin(), leaves[0].rows.end(), 0u);
        summarize(leaves[0]);
        nodes[0].count = static_cast<int>(data_.rows);
        find_best(leaves[0]);

        while (static_cast<int>(leaves.size()) < params_.max_leaves) {
            int pick = -1;
            for (std::size_t i = 0; i < leaves.size(); ++i) {
                if (!leaves[i].best.valid) continue;
                if (pick < 0 || leaves[i].best.gain > leaves[static_cast<std::size_t>(pick)].best.gain) {
                    pick = static_cast<int>(i);
                }
            }
            if (pick < 0) break;
            LeafState parent = std::move(leaves[static_cast<std::size_t>(pick)]);
            const SplitCandidate s = parent.best;
            const auto& fb = data_.bins[static_cast<std::size_t>(s.feature)];
            const Bin nan_bin = data_.nan_bin[static_cast<std::size_t>(s.feature)];
            LeafState left, right;
            for (auto r : parent.rows) {
                const Bin b = fb[r];
                const bool go_left = b == nan_bin ? s.default_left : b <= s.bin;
                (go_left ? left : right).rows.push_back(r);
            }
            auto& node = nodes[static_cast<std::size_t>(parent.node)];
            node.feature = s.feature;
            const auto& edges = data_.edges[static_cast<std::size_t>(s.feature)];
            // bin == edges.size() only arises for "everything non-missing left"
            node.threshold = s.bin < edges.size() ? edges[s.bin] : std::numeric_limits<double>::max();
            node.default_left = s.default_left;
            node.gain = s.gain;
            node.left = static_cast<int>(nodes.size());
            node.right = node.left + 1;
            left.node = node.left;
            right.node = node.right;
            nodes.emplace_back();
            nodes.emplace_back();
            nodes[static_cast<std::size_t>(left.node)].count = static_cast<int>(left.rows.size());
            nodes[static_cast<std::size_t>(right.node)].count = static_cast<int>(right.rows.size());
            summarize(left);
            summarize(right);
            find_best(left);
            find_best(right);
            // children take the parent's slot and the end, keeping leaf order stable
            leaves[static_cast<std::size_t>(pick)] = std::move(left);
            leaves.push_back(std::move(right));
        }

        leaf_of_row.assign(data_.rows, 0);
        for (const auto& leaf : leaves) {
            nodes[static_cast<std::size_t>(leaf.node)].value = -leaf.g / (leaf.h + params_.l2);
            for (auto r : leaf.rows) leaf_of_row[r] = leaf.node;
        }
        return Tree(std::move(nodes));
    }

private:
    void summarize(LeafState& leaf) const {
        leaf.g = 0.0;
        leaf.h = 0.0;
        for (auto r : leaf.rows) {
            leaf.g += g_[r];
            leaf.h += h_[r];
        }
    }

    double score(double g, double h) const { return g * g / (h + params_.l2); }

    void find_best(LeafState& leaf) {
        leaf.best = SplitCandidate{};
        const auto min_leaf = static_cast<std::size_t>(params_.min_samples_leaf);
        if (leaf.rows.size() < 2 * min_leaf) return;
        const double parent_score = score(leaf.g, leaf.h);
        for (std::size_t f = 0; f < data_.bins.size(); ++f) {
            const std::size_t nb = data_.bin_count(f);
            hist_.assign(nb, HistBin{});
            const auto& fb = data_.bins[f];
            for (auto r : leaf.rows) {
                auto& hb = hist_[fb[r]];
                hb.g += g_[r];
                hb.h += h_[r];
                ++hb.n;
            }
            const HistBin missing = hist_[nb - 1];
            const std::size_t value_bins = nb - 1;
            HistBin acc;
            for (std::size_t b = 0; b < value_bins; ++b) {
                acc.g += hist_[b].g;
                acc.h += hist_[b].h;
                acc.n += hist_[b].n;
                const bool last = b + 1 == value_bins;
                for (int dir = 0; dir < 2; ++dir) {
                    const bool default_left = dir == 0;
                    if (!default_left && missing.n == 0) continue;
                    // with everything non-missing on the left, only "missing right" is a split
                    if (last && default_left) continue;
                    HistBin l = acc;
                    if (default_left) {
                        l.g += missing.g;
                        l.h += missing.h;
                        l.n += missing.n;
                    }
                    const HistBin r{leaf.g - l.g, leaf.h - l.h, leaf.rows.size() - l.n};
                    if (l.n < min_leaf || r.n < min_leaf) continue;
                    if (l.h < params_.min_child_hessian || r.h < params_.min_child_hessian) continue;
                    const double gain = 0.5 * (score(l.g, l.h) + score(r.g, r.h) - parent_score);
                    if (!(gain > 0.0)) continue;
                    if (!leaf.best.valid || gain > leaf.best.gain) {
                        leaf.best = {true, static_cast<int>(f), static_cast<Bin>(b), default_left, gain};
                    }
                }
            }
        }
    }

    const BinnedData& data_;
    const GbdtParams& params_;
    std::span<const double> g_;
    std::span<const double> h_;
    std::vector<HistBin> hist_;
};

double mse(std::span<const double> y, std::span<const double> f) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - f[i]) * (y[i] - f[i]);
    return s / static_cast<double>(y.size());
}

/// Halvings tried before a round that would raise the training loss is zeroed.
constexpr int kMaxBacktrack = 30;

struct RowSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> valid;
};

RowSplit split_rows(std::size_t n, const GbdtParams& params) {
    RowSplit s;
    std::size_t n_train = n;
    if (params.early_stopping_rounds > 0) {
        n_train = static_cast<std::size_t>(std::ceil(static_cast<double>(n) * (1.0 - params.validation_fraction)));
        n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
    }
    for (std::size_t i = 0; i < n; ++i) (i < n_train ? s.train : s.valid).push_back(i);
    return s;
}

void init_model(GbdtModel& m, const Matrix& X, const GbdtParams& params, Task task, int num_class) {
    m.task = task;
    m.num_class = num_class;
    m.num_features = static_cast<int>(X.cols());
    m.params = params;
    m.gain_importance.assign(X.cols(), 0.0);
    m.split_importance.assign(X.cols(), 0.0);
}

void record_importance(GbdtModel& m, const Tree& t) {
    for (const auto& n : t.nodes()) {
        if (n.is_leaf()) continue;
        m.gain_importance[static_cast<std::size_t>(n.feature)] += n.gain;
        m.split_importance[static_cast<std::size_t>(n.feature)] += 1.0;
    }
}

void scale_leaves(Tree& t, double factor) {
    for (auto& n : t.mutable_nodes()) {
        if (n.is_leaf()) n.value *= factor;
    }
}

void rebuild_importance(GbdtModel& m) {
    std::fill(m.gain_importance.begin(), m.gain_importance.end(), 0.0);
    std::fill(m.split_importance.begin(), m.split_importance.end(), 0.0);
    for (const auto& t : m.trees) record_importance(m, t);
}

std::vector<double> softmax(std::span<const double> scores) {
    const double mx = *std::max_element(scores.begin(), scores.end());
    std::vector<double> p(scores.size());
    double z = 0.0;
    for (std::size_t k = 0; k < scores.size(); ++k) {
        p[k] = std::exp(scores[k] - mx);
        z += p[k];
    }
    for (auto& v : p) v /= z;
    return p;
}

double row_log_loss(std::span<const double> scores, int label) {
    const double mx = *std::max_element(scores.begin(), scores.end());
    double z = 0.0;
    for (double s : scores) z += std::exp(s - mx);
    return -(scores[static_cast<std::size_t>(label)] - mx - std::log(z));
}

}  // namespace

double softmax_log_loss(const std::vector<std::vector<double>>& scores, std::span<const int> labels) {
    double total = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) total += row_log_loss(scores[i], labels[i]);
    return total / static_cast<double>(labels.size());
}

GbdtModel fit_regression(const Matrix& X, std::span<const double> y, const GbdtParams& params) {
    params.validate();
    if (X.rows() != y.size()) throw InvalidInput("feature rows and target length differ");
    if (X.rows() < 2) throw InvalidInput("regression needs at least 2 rows");
    for (double v : y) {
        if (!std::isfinite(v)) throw InvalidInput("regression targets must be finite");
    }
    GbdtModel m;
    init_model(m, X, params, Task::regression, 1);
    const RowSplit split = split_rows(X.rows(), params);
    const std::size_t n = split.train.size();
    std::vector<double> yt(n);
    for (std::size_t i = 0; i < n; ++i) yt[i] = y[split.train[i]];

    const BinnedData data = bin_matrix(X, params.bins, split.train);
    m.bin_edges = data.edges;
    m.base_scores = {mean(yt)};
    std::vector<double> f(n, m.base_scores[0]);
    double loss = mse(yt, f);
    m.train_loss.push_back(loss);
    if (std::all_of(yt.begin(), yt.end(), [&](double v) { return v == yt[0]; })) {
        m.degenerate = true;
        return m;
    }

    std::vector<double> fv(split.valid.size(), m.base_scores[0]);
    std::vector<double> yv(split.valid.size());
    for (std::size_t i = 0; i < split.valid.size(); ++i) yv[i] = y[split.valid[i]];
    double best_valid = split.valid.empty() ? 0.0 : mse(yv, fv);
    std::size_t best_rounds = 0;

    TreeBuilder builder(data, params);
    std::vector<double> g(n), h(n, 1.0), next(n);
    std::vector<int> leaf_of_row;
    for (int round = 0; round < params.rounds; ++round) {
        for (std::size_t i = 0; i < n; ++i) g[i] = f[i] - yt[i];
        Tree tree = builder.build(g, h, leaf_of_row);
        double next_loss = loss;
        for (int attempt = 0; attempt <= kMaxBacktrack; ++attempt) {
            for (std::size_t i = 0; i < n; ++i) {
                next[i] = f[i] + params.learning_rate * tree.nodes()[static_cast<std::size_t>(leaf_of_row[i])].value;
            }
            next_loss = mse(yt, next);
            if (next_loss <= loss) break;
            if (attempt == kMaxBacktrack) {
                scale_leaves(tree, 0.0);
                next = f;
                next_loss = loss;
            } else {
                scale_leaves(tree, 0.5);
            }
        }
        f.swap(next);
        loss = next_loss;
        m.train_loss.push_back(loss);
        m.trees.push_back(std::move(tree));

        if (!split.valid.empty()) {
            for (std::size_t i = 0; i < split.valid.size(); ++i) {
                fv[i] += params.learning_rate * m.trees.back().predict(X.row(split.valid[i]));
            }
            const double v = mse(yv, fv);
            if (v < best_valid) {
                best_valid = v;
                best_rounds = m.trees.size();
            } else if (m.trees.size() - best_rounds >= static_cast<std::size_t>(params.early_stopping_rounds)) {
                break;
            }
        }
    }
    if (!split.valid.empty()) {
        m.trees.resize(best_rounds);
        m.train_loss.resize(best_rounds + 1);
    }
    rebuild_importance(m);
    return m;
}

GbdtModel fit_multiclass(const Matrix& X, std::span<const int> labels, const GbdtParams& params, int num_class) {
    params.validate();
    if (num_class < 2) throw InvalidInput("multiclass needs num_class >= 2");
    if (X.rows() != labels.size()) throw InvalidInput("feature rows and label count differ");
    if (X.rows() < 2) throw InvalidInput("classification needs at least 2 rows");
    for (int l : labels) {
        if (l < 0 || l >= num_class) throw InvalidInput("label out of range: " + std::to_string(l));
    }
    GbdtModel m;
    init_model(m, X, params, Task::multiclass, num_class);
    const RowSplit split = split_rows(X.rows(), params);
    const std::size_t n = split.train.size();
    const auto K = static_cast<std::size_t>(num_class);
    std::vector<int> yt(n);
    for (std::size_t i = 0; i < n; ++i) yt[i] = labels[split.train[i]];

    const BinnedData data = bin_matrix(X, params.bins, split.train);
    m.bin_edges = data.edges;
    std::vector<double> counts(K, 0.0);
    for (int l : yt) counts[static_cast<std::size_t>(l)] += 1.0;
    m.base_scores.resize(K);
    for (std::size_t k = 0; k < K; ++k) {
        // absent classes get a small floor so log stays finite
        m.base_scores[k] = std::log(std::max(counts[k] / static_cast<double>(n), 1e-6));
    }
    std::vector<std::vector<double>> f(n, m.base_scores);
    double loss = softmax_log_loss(f, yt);
    m.train_loss.push_back(loss);
    if (std::count_if(counts.begin(), counts.end(), [](double c) { return c > 0.0; }) < 2) {
        m.degenerate = true;
        return m;
    }

    std::vector<int> yv(split.valid.size());
    for (std::size_t i = 0; i < split.valid.size(); ++i) yv[i] = labels[split.valid[i]];
    std::vector<std::vector<double>> fv(split.valid.size(), m.base_scores);
    double best_valid = split.valid.empty() ? 0.0 : softmax_log_loss(fv, yv);
    std::size_t best_rounds = 0;

    TreeBuilder builder(data, params);
    std::vector<double> g(n), h(n);
    std::vector<std::vector<int>> leaf_of_row(K);
    std::vector<std::vector<double>> next(n, std::vector<double>(K));
    for (int round = 0; round < params.rounds; ++round) {
        std::vector<std::vector<double>> prob(n);
        for (std::size_t i = 0; i < n; ++i) prob[i] = softmax(f[i]);
        std::vector<Tree> round_trees;
        for (std::size_t k = 0; k < K; ++k) {
            for (std::size_t i = 0; i < n; ++i) {
                const double p = prob[i][k];
                g[i] = p - (yt[i] == static_cast<int>(k) ? 1.0 : 0.0);
                h[i] = std::max(p * (1.0 - p), 1e-16);
            }
            round_trees.push_back(builder.build(g, h, leaf_of_row[k]));
        }
        double next_loss = loss;
        for (int attempt = 0; attempt <= kMaxBacktrack; ++attempt) {
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t k = 0; k < K; ++k) {
                    next[i][k] = f[i][k] + params.learning_rate *
                                               round_trees[k].nodes()[static_cast<std::size_t>(leaf_of_row[k][i])].value;
                }
            }
            next_loss = softmax_log_loss(next, yt);
            if (next_loss <= loss) break;
            const double factor = attempt == kMaxBacktrack ? 0.0 : 0.5;
            for (auto& t : round_trees) scale_leaves(t, factor);
            if (attempt == kMaxBacktrack) {
                next = f;
                next_loss = loss;
            }
        }
        f.swap(next);
        loss = next_loss;
        m.train_loss.push_back(loss);
        for (auto& t : round_trees) m.trees.push_back(std::move(t));

        if (!split.valid.empty()) {
            for (std::size_t i = 0; i < split.valid.size(); ++i) {
                for (std::size_t k = 0; k < K; ++k) {
                    fv[i][k] += params.learning_rate * m.trees[m.trees.size() - K + k].predict(X.row(split.valid[i]));
                }
            }
            const double v = softmax_log_loss(fv, yv);
            if (v < best_valid) {
                best_valid = v;
                best_rounds = m.trees.size() / K;
            } else if (m.trees.size() / K - best_rounds >= static_cast<std::size_t>(params.early_stopping_rounds)) {
                break;
            }
        }
    }
    if (!split.valid.empty()) {
        m.trees.resize(best_rounds * K);
        m.train_loss.resize(best_rounds + 1);
    }
    rebuild_importance(m);
    return m;
}

int GbdtModel::rounds() const { return static_cast<int>(trees.size()) / std::max(num_class, 1); }

void GbdtModel::check_width(std::span<const double> x) const {
    if (static_cast<int>(x.size()) != num_features) {
        throw InvalidInput("model expects " + std::to_string(num_features) + " features, got " +
                           std::to_string(x.size()));
    }
}

std::vector<double> GbdtModel::raw_scores(std::span<const double> x) const {
    check_width(x);
    std::vector<double> s = base_scores;
    const auto K = static_cast<std::size_t>(num_class);
    for (std::size_t t = 0; t < trees.size(); ++t) s[t % K] += params.learning_rate * trees[t].predict(x);
    return s;
}

double GbdtModel::predict(std::span<const double> x) const {
    if (task != Task::regression) throw InvalidInput("predict() needs a regression model; use predict_class()");
    return raw_scores(x)[0];
}

ClassPrediction GbdtModel::predict_class(std::span<const double> x) const {
    if (task != Task::multiclass) throw InvalidInput("predict_class() needs a multiclass model");
    ClassPrediction out;
    out.probabilities = softmax(raw_scores(x));
    out.band = static_cast<int>(std::max_element(out.probabilities.begin(), out.probabilities.end()) -
                                out.probabilities.begin());
    return out;
}

std::vector<double> GbdtModel::predict_batch(const Matrix& X) const {
    std::vector<double> out;
    out.reserve(X.rows());
    for (std::size_t r = 0; r < X.rows(); ++r) out.push_back(predict(X.row(r)));
    return out;
}

std::vector<ClassPrediction> GbdtModel::predict_class_batch(const Matrix& X) const {
    std::vector<ClassPrediction> out;
    out.reserve(X.rows());
    for (std::size_t r = 0; r < X.rows(); ++r) out.push_back(predict_class(X.row(r)));
    return out;
}

FeatureImportance feature_importance(const GbdtModel& model, ImportanceKind kind) {
    const auto& raw = kind == ImportanceKind::gain ? model.gain_importance : model.split_importance;
    FeatureImportance out;
    out.weights.assign(raw.size(), 0.0);
    const double total = std::accumulate(raw.begin(), raw.end(), 0.0);
    if (!(total > 0.0)) return out;
    out.defined = true;
    for (std::size_t i = 0; i < raw.size(); ++i) out.weights[i] = raw[i] / total;
    return out;
}

Json GbdtModel::to_json() const {
    Json j;
    j["schema_version"] = kModelSchemaVersion;
    j["task"] = task == Task::regression ? "regression" : "multiclass";
    j["num_class"] = num_class;
    j["num_features"] = num_features;
    j["feature_names"] = feature_names;
    j["params"] = params.to_json();
    j["base_scores"] = base_scores;
    j["bin_edges"] = bin_edges;
    Json trees_json = Json::array();
    for (const auto& t : trees) trees_json.push_back(t.to_json());
    j["trees"] = std::move(trees_json);
    j["importances"] = Json{{"gain", gain_importance}, {"split", split_importance}};
    j["train_loss"] = train_loss;
    j["degenerate"] = degenerate;
    Json fz = Json::object();
    fz["pipeline"] = pipeline ? pipeline->to_json() : Json(nullptr);
    fz["band_scheme"] = band_scheme ? Json(*band_scheme) : Json(nullptr);
    j["featurize"] = std::move(fz);
    return j;
}

GbdtModel GbdtModel::from_json(const Json& j) {
    try {
        const int version = j.at("schema_version").get<int>();
        if (version != kModelSchemaVersion) {
            throw DataError("unsupported model schema_version " + std::to_string(version));
        }
        GbdtModel m;
        const auto task = j.at("task").get<std::string>();
        if (task == "regression") {
            m.task = Task::regression;
        } else if (task == "multiclass") {
            m.task = Task::multiclass;
        } else {
            throw DataError("unknown model task '" + task + "'");
        }
        m.num_class = j.at("num_class").get<int>();
        m.num_features = j.at("num_features").get<int>();
        j.at("feature_names").get_to(m.feature_names);
        m.params = GbdtParams::from_json(j.at("params"));
        j.at("base_scores").get_to(m.base_scores);
        j.at("bin_edges").get_to(m.bin_edges);
        for (const auto& t : j.at("trees")) m.trees.push_back(Tree::from_json(t));
        j.at("importances").at("gain").get_to(m.gain_importance);
        j.at("importances").at("split").get_to(m.split_importance);
        j.at("train_loss").get_to(m.train_loss);
        m.degenerate = j.at("degenerate").get<bool>();
        const auto& fz = j.at("featurize");
        if (!fz.at("pipeline").is_null()) m.pipeline = FeaturePipeline::from_json(fz.at("pipeline"));
        if (!fz.at("band_scheme").is_null()) m.band_scheme = scheme_from_json(fz.at("band_scheme"));
        if (static_cast<int>(m.base_scores.size()) != m.num_class ||
            m.trees.size() % static_cast<std::size_t>(std::max(m.num_class, 1)) != 0) {
            throw DataError("model file is inconsistent: tree or base score count");
        }
        for (const auto& t : m.trees) {
            for (const auto& n : t.nodes()) {
                if (!n.is_leaf() && (n.feature >= m.num_features || n.left < 0 || n.right < 0)) {
                    throw DataError("model file has a split on an unknown feature");
                }
            }
        }
        return m;
    } catch (const Json::exception& e) {
        throw DataError(std::string("malformed model file: ") + e.what());
    }
}

std::string GbdtModel::serialize() const { return to_json().dump(1) + "\n"; }

GbdtModel GbdtModel::deserialize(const std::string& text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::exception& e) {
        throw DataError(std::string("model file is not valid JSON: ") + e.what());
    }
    return from_json(j);
}

std::vector<GbdtParams> expand_grid(const GbdtParams& base, const std::vector<int>& rounds,
                                    const std::vector<double>& learning_rates, const std::vector<int>& max_leaves,
                                    const std::vector<int>& min_samples_leaf) {
    std::vector<GbdtParams> out;
    const auto pick_i = [](const std::vector<int>& v, int fallback) { return v.empty() ? std::vector<int>{fallback} : v; };
    const auto lrs = learning_rates.empty() ? std::vector<double>{base.learning_rate} : learning_rates;
    for (int r : pick_i(rounds, base.rounds)) {
        for (double lr : lrs) {
            for (int leaves : pick_i(max_leaves, base.max_leaves)) {
                for (int msl : pick_i(min_samples_leaf, base.min_samples_leaf)) {
                    GbdtParams p = base;
                    p.rounds = r;
                    p.learning_rate = lr;
                    p.max_leaves = leaves;
                    p.min_samples_leaf = msl;
                    p.validate();
                    out.push_back(p);
                }
            }
        }
    }
    return out;
}

GridSearchResult grid_search(const Matrix& X, std::span<const double> y, Task task,
                             const std::vector<GbdtParams>& candidates, double validation_fraction) {
    if (candidates.empty()) throw InvalidInput("grid search needs at least one candidate");
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
        throw InvalidInput("validation_fraction must be in (0,1)");
    }
    if (X.rows() != y.size() || X.rows() < 3) throw InvalidInput("grid search needs >= 3 aligned rows");
    auto n_train = static_cast<std::size_t>(std::ceil(static_cast<double>(X.rows()) * (1.0 - validation_fraction)));
    n_train = std::clamp<std::size_t>(n_train, 2, X.rows() - 1);
    Matrix Xt, Xv;
    std::vector<double> yt, yv;
    for (std::size_t r = 0; r < X.rows(); ++r) {
        (r < n_train ? Xt : Xv).append_row(X.row(r));
        (r < n_train ? yt : yv).push_back(y[r]);
    }
    GridSearchResult result;
    for (const auto& p : candidates) {
        double loss = 0.0;
        if (task == Task::regression) {
            const auto model = fit_regression(Xt, yt, p);
            loss = mse(yv, model.predict_batch(Xv));
        } else {
            std::vector<int> lt(yt.begin(), yt.end()), lv(yv.begin(), yv.end());
            const auto model = fit_multiclass(Xt, lt, p);
            std::vector<std::vector<double>> scores;
            for (std::size_t r = 0; r < Xv.rows(); ++r) scores.push_back(model.raw_scores(Xv.row(r)));
            loss = softmax_log_loss(scores, lv);
        }
        result.trials.push_back({p, loss});
        if (result.trials.size() == 1 || loss < result.best_loss) {
            result.best = p;
            result.best_loss = loss;
        }
    }
    return result;
}

}  // namespace gpupower
