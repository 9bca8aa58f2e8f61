#include "gradnap/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "gradnap/errors.hpp"

namespace gradnap {

std::string format_value(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

void write_matrix_csv(const std::filesystem::path& path, const Matrix& m) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) {
            if (c) out << ",";
            out << format_value(m(r, c));
        }
        out << "\n";
    }
}

Matrix read_matrix_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        rows.push_back(std::move(row));
    }
    return Matrix::from_rows(rows);
}

void write_gradnap(const std::filesystem::path& dir, const std::string& group_name,
                   const GradNAP& nap, std::size_t skipped) {
    std::string stem = "gradnap_" + group_name + "_layer" + std::to_string(nap.layer);
    write_matrix_csv(dir / (stem + ".csv"), nap.values);
    nlohmann::json side;
    side["group"] = group_name;
    side["layer"] = nap.layer;
    side["count"] = nap.count;
    side["W"] = nap.values.cols();
    side["channels"] = nap.values.rows();
    side["skipped"] = skipped;
    side["degenerate"] = nap.degenerate;
    std::ofstream out(dir / (stem + ".json"));
    if (!out) throw DataError("cannot write sidecar for " + stem);
    out << side.dump(2) << "\n";
}

GradNAP read_gradnap(const std::filesystem::path& csv_path) {
    GradNAP nap;
    nap.values = read_matrix_csv(csv_path);
    std::filesystem::path side_path = csv_path;
    side_path.replace_extension(".json");
    std::ifstream side(side_path);
    if (side) {
        nlohmann::json j;
        side >> j;
        nap.layer = j.value("layer", 0);
        nap.count = j.value("count", 0);
        nap.degenerate = j.value("degenerate", false);
    }
    return nap;
}

void write_action_potentials_csv(const std::filesystem::path& path,
                                 const std::vector<ActionPotentialSeries>& series) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << "channel,highlighted,offset,value\n";
    for (const ActionPotentialSeries& s : series)
        for (std::size_t i = 0; i < s.offsets.size(); ++i)
            out << s.channel << "," << (s.highlighted ? 1 : 0) << ","
                << format_value(s.offsets[i]) << "," << format_value(s.values[i]) << "\n";
}

namespace {

struct PlotScale {
    double xmin, xmax, ymin, ymax;
    double width, height, margin;
    double x(double v) const {
        return margin + (v - xmin) / (xmax - xmin <= 0 ? 1 : xmax - xmin) * (width - 2 * margin);
    }
    double y(double v) const {
        return height - margin -
               (v - ymin) / (ymax - ymin <= 0 ? 1 : ymax - ymin) * (height - 2 * margin);
    }
};

}  // namespace

void write_action_potentials_svg(const std::filesystem::path& path,
                                 const std::vector<ActionPotentialSeries>& series) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    PlotScale ps{0, 1, 0, 1, 640, 400, 32};
    bool first = true;
    for (const ActionPotentialSeries& s : series)
        for (std::size_t i = 0; i < s.offsets.size(); ++i) {
            if (first) {
                ps.xmin = ps.xmax = s.offsets[i];
                ps.ymin = ps.ymax = s.values[i];
                first = false;
            }
            ps.xmin = std::min(ps.xmin, s.offsets[i]);
            ps.xmax = std::max(ps.xmax, s.offsets[i]);
            ps.ymin = std::min(ps.ymin, s.values[i]);
            ps.ymax = std::max(ps.ymax, s.values[i]);
        }
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << ps.width << "\" height=\""
        << ps.height << "\">\n";
    for (const ActionPotentialSeries& s : series) {
        out << "  <polyline fill=\"none\" stroke=\""
            << (s.highlighted ? "#d62728" : "#9caccc") << "\" stroke-width=\""
            << (s.highlighted ? 2 : 1) << "\" points=\"";
        for (std::size_t i = 0; i < s.offsets.size(); ++i) {
            if (i) out << " ";
            out << format_value(ps.x(s.offsets[i])) << "," << format_value(ps.y(s.values[i]));
        }
        out << "\"/>\n";
    }
    out << "</svg>\n";
}

void write_heatmap_svg(const std::filesystem::path& path, const Matrix& m) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    double cell = 8.0;
    double lo = 0.0, hi = 0.0;
    for (double v : m.raw()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    double span = std::max(hi - lo, 1e-12);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << m.cols() * cell
        << "\" height=\"" << m.rows() * cell << "\">\n";
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) {
            int shade = static_cast<int>(255.0 * (m(r, c) - lo) / span);
            out << "  <rect x=\"" << c * cell << "\" y=\"" << r * cell << "\" width=\"" << cell
                << "\" height=\"" << cell << "\" fill=\"rgb(" << shade << "," << shade << ","
                << 255 - shade << ")\"/>\n";
        }
    out << "</svg>\n";
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<double>& trajectory) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << "step,loss\n";
    for (std::size_t i = 0; i < trajectory.size(); ++i)
        out << i << "," << format_value(trajectory[i]) << "\n";
}

void write_silhouette_csv(const std::filesystem::path& path, const SilhouetteReport& report) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << "layer,percentile,threshold,clusters,score\n";
    for (const LayerSilhouette& ls : report.layers)
        for (const SilhouetteCell& cell : ls.cells) {
            out << ls.layer << "," << format_value(cell.percentile) << ","
                << format_value(cell.threshold) << "," << cell.cluster_count << ",";
            out << (cell.score ? format_value(*cell.score) : "") << "\n";
        }
}

void write_silhouette_json(const std::filesystem::path& path, const SilhouetteReport& report) {
    nlohmann::json j = nlohmann::json::array();
    for (const LayerSilhouette& ls : report.layers) {
        nlohmann::json layer;
        layer["layer"] = ls.layer;
        layer["cells"] = nlohmann::json::array();
        for (const SilhouetteCell& cell : ls.cells) {
            nlohmann::json c;
            c["percentile"] = cell.percentile;
            c["threshold"] = cell.threshold;
            c["clusters"] = cell.cluster_count;
            if (cell.score) c["score"] = *cell.score;
            else c["score"] = nullptr;
            layer["cells"].push_back(c);
        }
        if (ls.mean_score) layer["mean_score"] = *ls.mean_score;
        else layer["mean_score"] = nullptr;
        j.push_back(layer);
    }
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

void write_cluster_members_csv(const std::filesystem::path& path,
                               const std::vector<std::string>& labels,
                               const std::vector<std::size_t>& assignment) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << "item,cluster\n";
    for (std::size_t i = 0; i < assignment.size(); ++i)
        out << (i < labels.size() ? labels[i] : std::to_string(i)) << "," << assignment[i]
            << "\n";
}

std::uint64_t fnv1a64(const void* data, std::size_t len) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string file_digest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot digest missing file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    std::string bytes = ss.str();
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(bytes.data(), bytes.size())));
    return buf;
}

void RunManifest::add_output(const std::filesystem::path& path,
                             const std::filesystem::path& relative_to) {
    output_digests[std::filesystem::relative(path, relative_to).generic_string()] =
        file_digest(path);
}

void RunManifest::write(const std::filesystem::path& path) const {
    nlohmann::json j;
    j["command"] = command;
    j["config_digest"] = config_digest;
    j["master_seed"] = master_seed;
    j["inputs"] = input_digests;
    j["outputs"] = output_digests;
    j["timings_seconds"] = timings_seconds;
    j["counters"] = counters;
    j["hyperparameters"] = hyperparameters;
    std::ofstream out(path);
    if (!out) throw DataError("cannot write manifest " + path.string());
    out << j.dump(2) << "\n";
}

}  // namespace gradnap
