#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "gradnap/clustering.hpp"
#include "gradnap/matrix.hpp"
#include "gradnap/nap.hpp"
#include "gradnap/respviz.hpp"

namespace gradnap {

/// 12-significant-digit CSV cell formatting used by all exporters.
std::string format_value(double v);

void write_matrix_csv(const std::filesystem::path& path, const Matrix& m);
Matrix read_matrix_csv(const std::filesystem::path& path);

/// One file per (group, layer): CSV matrix plus JSON sidecar.
void write_gradnap(const std::filesystem::path& dir, const std::string& group_name,
                   const GradNAP& nap, std::size_t skipped);
GradNAP read_gradnap(const std::filesystem::path& csv_path);

void write_action_potentials_csv(const std::filesystem::path& path,
                                 const std::vector<ActionPotentialSeries>& series);
void write_action_potentials_svg(const std::filesystem::path& path,
                                 const std::vector<ActionPotentialSeries>& series);

void write_heatmap_svg(const std::filesystem::path& path, const Matrix& m);
void write_loss_csv(const std::filesystem::path& path, const std::vector<double>& trajectory);

void write_silhouette_csv(const std::filesystem::path& path, const SilhouetteReport& report);
void write_silhouette_json(const std::filesystem::path& path, const SilhouetteReport& report);
void write_cluster_members_csv(const std::filesystem::path& path,
                               const std::vector<std::string>& labels,
                               const std::vector<std::size_t>& assignment);

/// Stable FNV-1a 64-bit digest, hex encoded.
std::uint64_t fnv1a64(const void* data, std::size_t len);
std::string file_digest(const std::filesystem::path& path);

struct RunManifest {
    std::string command;
    std::string config_digest;
    std::uint64_t master_seed = 0;
    std::map<std::string, std::string> input_digests;
    std::map<std::string, std::string> output_digests;
    std::map<std::string, double> timings_seconds;
    std::map<std::string, std::int64_t> counters;
    std::map<std::string, double> hyperparameters;

    void add_output(const std::filesystem::path& path, const std::filesystem::path& relative_to);
    void write(const std::filesystem::path& path) const;
};

}  // namespace gradnap
