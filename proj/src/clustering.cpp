#include "gradnap/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "gradnap/errors.hpp"

namespace gradnap {

double DistanceMatrix::at(std::size_t i, std::size_t j) const {
    if (i == j) return 0.0;
    if (i > j) std::swap(i, j);
    // index of (i,j), i<j, in the condensed vector
    std::size_t idx = i * n - i * (i + 1) / 2 + (j - i - 1);
    return condensed[idx];
}

DistanceMatrix pairwise_distances(const std::vector<Matrix>& items,
                                  const std::vector<std::string>& labels) {
    if (items.size() < 2) throw ConfigError("pairwise_distances: need at least 2 items");
    if (!labels.empty() && labels.size() != items.size())
        throw ConfigError("pairwise_distances: label count mismatch");
    for (std::size_t i = 1; i < items.size(); ++i)
        if (!items[i].same_shape(items[0]))
            throw ConfigError("pairwise_distances: shape mismatch at item " + std::to_string(i));

    DistanceMatrix dm;
    dm.n = items.size();
    dm.labels = labels;
    dm.condensed.reserve(dm.n * (dm.n - 1) / 2);
    for (std::size_t i = 0; i < dm.n; ++i)
        for (std::size_t j = i + 1; j < dm.n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < items[i].size(); ++k) {
                double d = items[i].raw()[k] - items[j].raw()[k];
                s += d * d;
            }
            dm.condensed.push_back(std::sqrt(s));
        }
    return dm;
}

LinkageTree complete_linkage(const DistanceMatrix& distances) {
    std::size_t n = distances.n;
    if (n < 2) throw ConfigError("complete_linkage: need at least 2 items");

    struct Cluster {
        std::size_t id;       // creation index
        std::vector<std::size_t> members;
        bool alive = true;
    };
    std::vector<Cluster> clusters;
    for (std::size_t i = 0; i < n; ++i) clusters.push_back({i, {i}, true});

    LinkageTree tree;
    tree.n = n;
    std::size_t next_id = n;
    for (std::size_t step = 0; step + 1 < n; ++step) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t bi = 0, bj = 0;
        bool found = false;
        for (std::size_t a = 0; a < clusters.size(); ++a) {
            if (!clusters[a].alive) continue;
            for (std::size_t b = a + 1; b < clusters.size(); ++b) {
                if (!clusters[b].alive) continue;
                double d = 0.0;  // complete linkage: max pairwise member distance
                for (std::size_t x : clusters[a].members)
                    for (std::size_t y : clusters[b].members)
                        d = std::max(d, distances.at(x, y));
                std::size_t lo = std::min(clusters[a].id, clusters[b].id);
                std::size_t hi = std::max(clusters[a].id, clusters[b].id);
                bool better = d < best;
                if (!better && d == best && found) {
                    std::size_t clo = std::min(clusters[bi].id, clusters[bj].id);
                    std::size_t chi = std::max(clusters[bi].id, clusters[bj].id);
                    better = lo < clo || (lo == clo && hi < chi);
                }
                if (better || !found) {
                    best = d;
                    bi = a;
                    bj = b;
                    found = true;
                }
            }
        }
        Merge m;
        m.left = std::min(clusters[bi].id, clusters[bj].id);
        m.right = std::max(clusters[bi].id, clusters[bj].id);
        m.height = best;
        m.size = clusters[bi].members.size() + clusters[bj].members.size();
        tree.merges.push_back(m);

        Cluster merged;
        merged.id = next_id++;
        merged.members = clusters[bi].members;
        merged.members.insert(merged.members.end(), clusters[bj].members.begin(),
                              clusters[bj].members.end());
        clusters[bi].alive = false;
        clusters[bj].alive = false;
        clusters.push_back(std::move(merged));
    }
    return tree;
}

std::vector<std::size_t> cut_tree(const LinkageTree& tree, double threshold) {
    std::size_t n = tree.n;
    std::vector<std::size_t> parent(n + tree.merges.size());
    for (std::size_t i = 0; i < parent.size(); ++i) parent[i] = i;
    auto find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (std::size_t m = 0; m < tree.merges.size(); ++m) {
        if (tree.merges[m].height > threshold) continue;
        std::size_t id = n + m;
        parent[find(tree.merges[m].left)] = id;
        parent[find(tree.merges[m].right)] = id;
    }
    std::vector<std::size_t> assignment(n);
    std::vector<std::size_t> compact(parent.size(), SIZE_MAX);
    std::size_t next = 0;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t root = find(i);
        if (compact[root] == SIZE_MAX) compact[root] = next++;
        assignment[i] = compact[root];
    }
    return assignment;
}

double percentile(std::vector<double> values, double p) {
    if (values.empty()) throw ConfigError("percentile: empty vector");
    std::sort(values.begin(), values.end());
    double rank = p / 100.0 * static_cast<double>(values.size() - 1);
    std::size_t lo = static_cast<std::size_t>(std::floor(rank));
    std::size_t hi = std::min(lo + 1, values.size() - 1);
    double frac = rank - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

std::vector<double> percentile_thresholds(const DistanceMatrix& distances) {
    if (distances.condensed.empty()) throw ConfigError("percentile_thresholds: no distances");
    std::vector<double> out;
    for (double p : {75.0, 80.0, 85.0, 90.0, 95.0})
        out.push_back(percentile(distances.condensed, p));
    return out;
}

double silhouette(const DistanceMatrix& distances, const std::vector<std::size_t>& assignment) {
    std::size_t n = distances.n;
    if (assignment.size() != n) throw ConfigError("silhouette: assignment length mismatch");
    std::size_t k = 0;
    for (std::size_t a : assignment) k = std::max(k, a + 1);
    if (k < 2 || k >= n)
        throw ConfigError("silhouette: undefined for cluster count " + std::to_string(k) +
                          " with n=" + std::to_string(n));

    std::vector<std::size_t> sizes(k, 0);
    for (std::size_t a : assignment) ++sizes[a];

    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t ci = assignment[i];
        if (sizes[ci] == 1) continue;  // singleton: s(i) = 0
        std::vector<double> mean_to(k, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            mean_to[assignment[j]] += distances.at(i, j);
        }
        double a = mean_to[ci] / static_cast<double>(sizes[ci] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c) {
            if (c == ci || sizes[c] == 0) continue;
            b = std::min(b, mean_to[c] / static_cast<double>(sizes[c]));
        }
        double denom = std::max(a, b);
        total += denom > 0.0 ? (b - a) / denom : 0.0;
    }
    return total / static_cast<double>(n);
}

SilhouetteReport layer_silhouette_summary(
    const std::vector<std::vector<Matrix>>& gradnaps_per_layer,
    const std::vector<std::string>& group_labels) {
    SilhouetteReport report;
    for (std::size_t layer = 0; layer < gradnaps_per_layer.size(); ++layer) {
        const std::vector<Matrix>& items = gradnaps_per_layer[layer];
        if (items.size() < 2) continue;  // report skipped for this layer
        DistanceMatrix dm = pairwise_distances(items, group_labels);
        LinkageTree tree = complete_linkage(dm);

        LayerSilhouette ls;
        ls.layer = layer;
        double sum = 0.0;
        std::size_t defined = 0;
        std::vector<double> pts = {75.0, 80.0, 85.0, 90.0, 95.0};
        std::vector<double> thresholds = percentile_thresholds(dm);
        for (std::size_t i = 0; i < pts.size(); ++i) {
            SilhouetteCell cell;
            cell.percentile = pts[i];
            cell.threshold = thresholds[i];
            std::vector<std::size_t> assignment = cut_tree(tree, thresholds[i]);
            std::size_t k = 0;
            for (std::size_t a : assignment) k = std::max(k, a + 1);
            cell.cluster_count = k;
            if (k >= 2 && k < dm.n) {
                cell.score = silhouette(dm, assignment);
                sum += *cell.score;
                ++defined;
            }
            ls.cells.push_back(cell);
        }
        if (defined > 0) ls.mean_score = sum / static_cast<double>(defined);
        report.layers.push_back(std::move(ls));
    }
    return report;
}

namespace {

void newick_node(std::ostream& out, const LinkageTree& tree,
                 const std::vector<std::string>& labels, std::size_t id, double parent_height) {
    if (id < tree.n) {
        out << (id < labels.size() ? labels[id] : "item" + std::to_string(id)) << ":"
            << parent_height;
        return;
    }
    const Merge& m = tree.merges[id - tree.n];
    out << "(";
    newick_node(out, tree, labels, m.left, m.height);
    out << ",";
    newick_node(out, tree, labels, m.right, m.height);
    out << "):" << (parent_height - m.height);
}

}  // namespace

std::string to_newick(const LinkageTree& tree, const std::vector<std::string>& labels) {
    std::ostringstream out;
    out.precision(12);
    std::size_t root = tree.n + tree.merges.size() - 1;
    const Merge& top = tree.merges.back();
    out << "(";
    newick_node(out, tree, labels, top.left, top.height);
    out << ",";
    newick_node(out, tree, labels, top.right, top.height);
    out << ");";
    (void)root;
    return out.str();
}

}  // namespace gradnap
