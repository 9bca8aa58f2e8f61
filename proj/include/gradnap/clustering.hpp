#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "gradnap/matrix.hpp"

namespace gradnap {

/// Condensed upper-triangle pairwise Euclidean distances with item labels.
struct DistanceMatrix {
    std::size_t n = 0;
    std::vector<double> condensed;  // (i,j), i<j, row-major over the triangle
    std::vector<std::string> labels;

    double at(std::size_t i, std::size_t j) const;
};

DistanceMatrix pairwise_distances(const std::vector<Matrix>& items,
                                  const std::vector<std::string>& labels);

/// Agglomerative merges. Cluster ids: 0..n-1 are the original items, merge m
/// creates cluster n+m.
struct Merge {
    std::size_t left = 0;
    std::size_t right = 0;
    double height = 0.0;
    std::size_t size = 0;
};

struct LinkageTree {
    std::size_t n = 0;
    std::vector<Merge> merges;  // n-1 entries, heights non-decreasing
};

/// Complete linkage; ties broken by lexicographically smallest pair of
/// cluster creation indices.
LinkageTree complete_linkage(const DistanceMatrix& distances);

/// Clusters after discarding merges with height > threshold (merges at the
/// threshold are kept). Assignment ids are compacted to 0..k-1 in order of
/// first item appearance.
std::vector<std::size_t> cut_tree(const LinkageTree& tree, double threshold);

/// Percentiles {75,80,85,90,95} of the condensed vector, linear interpolation
/// between closest ranks.
std::vector<double> percentile_thresholds(const DistanceMatrix& distances);

double percentile(std::vector<double> values, double p);

/// Mean Silhouette; singleton items contribute 0. Undefined (nullopt is never
/// returned: throws) when cluster count is 1 or n.
double silhouette(const DistanceMatrix& distances, const std::vector<std::size_t>& assignment);

struct SilhouetteCell {
    double percentile = 0.0;
    double threshold = 0.0;
    std::size_t cluster_count = 0;
    std::optional<double> score;  // missing when undefined (k = 1 or k = n)
};

struct LayerSilhouette {
    std::size_t layer = 0;
    std::vector<SilhouetteCell> cells;  // 5 thresholds
    std::optional<double> mean_score;   // over defined scores only
};

struct SilhouetteReport {
    std::vector<LayerSilhouette> layers;
};

/// gradnaps_per_layer[l] holds one flattened GradNAP per group, identical
/// shapes within a layer.
SilhouetteReport layer_silhouette_summary(
    const std::vector<std::vector<Matrix>>& gradnaps_per_layer,
    const std::vector<std::string>& group_labels);

/// Newick serialization with branch lengths from merge heights.
std::string to_newick(const LinkageTree& tree, const std::vector<std::string>& labels);

}  // namespace gradnap
