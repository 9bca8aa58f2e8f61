#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gradnap/clustering.hpp"
#include "gradnap/data.hpp"
#include "gradnap/errors.hpp"
#include "gradnap/model.hpp"
#include "gradnap/nap.hpp"
#include "gradnap/report.hpp"
#include "gradnap/respviz.hpp"
#include "gradnap/rng.hpp"

namespace fs = std::filesystem;
using namespace gradnap;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

std::size_t worker_count(std::size_t flag_value) {
    if (flag_value > 0) return flag_value;
    if (const char* env = std::getenv("GRADNAP_WORKERS")) {
        long v = std::atol(env);
        if (v > 0) return static_cast<std::size_t>(v);
    }
    return 1;
}

class StageTimer {
public:
    explicit StageTimer(RunManifest& manifest, std::string stage)
        : manifest_(manifest), stage_(std::move(stage)),
          start_(std::chrono::steady_clock::now()) {}
    ~StageTimer() {
        auto end = std::chrono::steady_clock::now();
        manifest_.timings_seconds[stage_] =
            std::chrono::duration<double>(end - start_).count();
    }

private:
    RunManifest& manifest_;
    std::string stage_;
    std::chrono::steady_clock::time_point start_;
};

/// Experiment config: generation, architecture, training and analysis knobs
/// in one key/value + list file.
struct RunConfig {
    std::uint64_t seed = 1;
    GenerateConfig gen;
    std::vector<ClassSpec> classes;
    ArchitectureSpec arch;
    TrainConfig train;
    std::size_t window_input = 0;
    std::string grouping = "label";  // label | predicted
    std::size_t featviz_layer = 2;
    std::size_t featviz_topk = 5;
};

ClassSpec parse_class_line(std::istringstream& ss, const std::string& line) {
    ClassSpec cs;
    std::string kind;
    ss >> cs.name >> kind;
    std::vector<std::string> fields;
    std::string tok;
    while (ss >> tok) fields.push_back(tok);
    if (fields.size() < 3 || fields[fields.size() - 3] != "frames")
        throw ConfigError("class line needs trailing 'frames MIN MAX': " + line);
    cs.min_frames = std::stoul(fields[fields.size() - 2]);
    cs.max_frames = std::stoul(fields[fields.size() - 1]);
    fields.resize(fields.size() - 3);
    if (kind == "bands") {
        cs.kind = ClassSpec::Kind::Bands;
        for (const std::string& f : fields) {
            ClassSpec::Band b;
            if (std::sscanf(f.c_str(), "%zu:%zu:%lf", &b.center_bin, &b.width_bins,
                            &b.intensity) != 3)
                throw ConfigError("malformed band '" + f + "' in: " + line);
            cs.bands.push_back(b);
        }
        if (cs.bands.empty()) throw ConfigError("class '" + cs.name + "' has no bands");
    } else if (kind == "transient") {
        cs.kind = ClassSpec::Kind::Transient;
        if (fields.size() != 1 ||
            std::sscanf(fields[0].c_str(), "%lf:%lf", &cs.transient.onset_sharpness,
                        &cs.transient.broadband_intensity) != 2)
            throw ConfigError("malformed transient parameters in: " + line);
    } else {
        throw ConfigError("unknown class kind '" + kind + "' in: " + line);
    }
    return cs;
}

RunConfig parse_run_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file " + path.string());
    RunConfig cfg;
    std::string arch_text;
    std::string line;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::istringstream ss(line);
        std::string key;
        if (!(ss >> key)) continue;
        if (key == "seed") ss >> cfg.seed;
        else if (key == "bins") ss >> cfg.gen.bins;
        else if (key == "frames") ss >> cfg.gen.frames;
        else if (key == "examples") ss >> cfg.gen.n_examples;
        else if (key == "noise_std") ss >> cfg.gen.noise_std;
        else if (key == "silence_fraction") ss >> cfg.gen.silence_fraction;
        else if (key == "window_input") ss >> cfg.window_input;
        else if (key == "grouping") ss >> cfg.grouping;
        else if (key == "epochs") ss >> cfg.train.epochs;
        else if (key == "batch_size") ss >> cfg.train.batch_size;
        else if (key == "learning_rate") ss >> cfg.train.learning_rate;
        else if (key == "featviz_layer") ss >> cfg.featviz_layer;
        else if (key == "featviz_topk") ss >> cfg.featviz_topk;
        else if (key == "class") cfg.classes.push_back(parse_class_line(ss, line));
        else if (key == "layer") arch_text += line + "\n";
        else throw ConfigError("unknown config key '" + key + "'");
    }
    if (cfg.classes.empty()) throw ConfigError("config defines no classes");
    if (cfg.grouping != "label" && cfg.grouping != "predicted")
        throw ConfigError("grouping must be 'label' or 'predicted'");
    cfg.arch = parse_architecture("input_bins " + std::to_string(cfg.gen.bins) + "\n" +
                                  arch_text);
    if (cfg.arch.num_classes() != cfg.classes.size() + 1)
        throw ConfigError("final layer must emit " + std::to_string(cfg.classes.size() + 1) +
                          " channels (classes + silence), got " +
                          std::to_string(cfg.arch.num_classes()));
    cfg.gen.seed = Rng::derive(cfg.seed, 1);
    cfg.train.seed = Rng::derive(cfg.seed, 2);
    return cfg;
}

std::string group_name(const Dataset& dataset, std::size_t group_label) {
    if (group_label < dataset.class_specs.size()) return dataset.class_specs[group_label].name;
    if (group_label == dataset.silence_index()) return "silence";
    return "class" + std::to_string(group_label);
}

void write_pipeline_outputs(const fs::path& out_dir, const Dataset& dataset,
                            const PipelineResult& result, RunManifest& manifest) {
    fs::create_directories(out_dir);
    for (const auto& [group, naps] : result.gradnaps) {
        std::string name = group_name(dataset, group);
        for (const GradNAP& nap : naps) {
            write_gradnap(out_dir, name, nap, result.occurrences_skipped);
            std::string stem = "gradnap_" + name + "_layer" + std::to_string(nap.layer);
            manifest.add_output(out_dir / (stem + ".csv"), out_dir);
            manifest.add_output(out_dir / (stem + ".json"), out_dir);
        }
    }
    manifest.counters["occurrences_total"] = static_cast<std::int64_t>(result.occurrences_total);
    manifest.counters["occurrences_skipped"] =
        static_cast<std::int64_t>(result.occurrences_skipped);
    manifest.counters["degenerate_groups"] =
        static_cast<std::int64_t>(result.degenerate_groups.size());
    if (result.occurrences_skipped > 0)
        std::cerr << "warning: " << result.occurrences_skipped << " of "
                  << result.occurrences_total
                  << " occurrences skipped (window crossed a sequence boundary)\n";
    for (std::size_t g : result.degenerate_groups)
        std::cerr << "warning: group " << group_name(dataset, g)
                  << " has an all-zero gradient mean in some layer (degenerate GradNAP)\n";
}

/// Collect gradnap_<group>_layer<l>.csv files, grouped by layer in sorted
/// group order.
struct GradnapDir {
    std::vector<std::string> groups;
    std::vector<std::vector<Matrix>> per_layer;  // [layer][group]
    std::size_t num_layers = 0;                  // highest layer index + 1
};

GradnapDir scan_gradnap_dir(const fs::path& dir) {
    std::map<std::string, std::map<std::size_t, Matrix>> by_group;
    for (const auto& entry : fs::directory_iterator(dir)) {
        std::string name = entry.path().filename().string();
        if (name.rfind("gradnap_", 0) != 0 || entry.path().extension() != ".csv") continue;
        auto layer_pos = name.rfind("_layer");
        if (layer_pos == std::string::npos) continue;
        std::string group = name.substr(8, layer_pos - 8);
        std::size_t layer = std::stoul(name.substr(layer_pos + 6));
        by_group[group][layer] = read_matrix_csv(entry.path());
    }
    if (by_group.empty()) throw DataError("no gradnap_*.csv files in " + dir.string());
    GradnapDir out;
    for (const auto& [group, layers] : by_group) {
        out.groups.push_back(group);
        for (const auto& [layer, m] : layers) out.num_layers = std::max(out.num_layers, layer + 1);
    }
    out.per_layer.resize(out.num_layers);
    for (std::size_t l = 0; l < out.num_layers; ++l) {
        bool complete = true;
        for (const std::string& group : out.groups) {
            auto it = by_group[group].find(l);
            if (it == by_group[group].end()) {
                std::cerr << "warning: group " << group << " is missing layer " << l
                          << "; layer skipped\n";
                complete = false;
                break;
            }
            out.per_layer[l].push_back(it->second);
        }
        if (!complete) out.per_layer[l].clear();
    }
    return out;
}

int cmd_gen_data(const fs::path& config_path, const fs::path& out_dir, std::uint64_t seed) {
    RunConfig cfg = parse_run_config(config_path);
    if (seed != 0) cfg.gen.seed = Rng::derive(seed, 1);
    Dataset ds = generate(cfg.classes, cfg.gen);
    save_dataset(out_dir, ds);
    RunManifest manifest;
    manifest.command = "gen-data";
    manifest.config_digest = file_digest(config_path);
    manifest.master_seed = cfg.seed;
    for (const auto& entry : fs::directory_iterator(out_dir))
        if (entry.path().filename() != "manifest.json") manifest.add_output(entry.path(), out_dir);
    manifest.write(out_dir / "manifest.json");
    std::cout << "wrote " << ds.examples.size() << " examples to " << out_dir.string() << "\n";
    return 0;
}

int cmd_train_toy(const fs::path& arch_path, const fs::path& data_dir, const fs::path& out_path,
                  std::uint64_t seed, std::size_t epochs, std::size_t batch, double lr) {
    ArchitectureSpec spec = load_architecture(arch_path);
    Dataset ds = load_dataset(data_dir);
    TrainConfig cfg;
    cfg.seed = seed;
    cfg.epochs = epochs;
    cfg.batch_size = batch;
    cfg.learning_rate = lr;
    TrainReport report;
    ModelWeights weights = train_toy(spec, ds, cfg, &report);
    save_weights(out_path, weights, spec);
    std::cout << "trained " << spec.num_layers() << " layers, frame accuracy "
              << report.final_accuracy << ", final loss " << report.epoch_losses.back() << "\n";
    return 0;
}

int cmd_gradnap(const fs::path& arch_path, const fs::path& weights_path, const fs::path& data_dir,
                const std::string& group_by, std::size_t window, const fs::path& out_dir,
                std::size_t workers) {
    ArchitectureSpec spec = load_architecture(arch_path);
    ModelWeights weights = load_weights(weights_path, spec);
    Dataset ds = load_dataset(data_dir);
    PipelineConfig cfg;
    cfg.grouping =
        group_by == "predicted" ? GroupingMode::ByPredicted : GroupingMode::ByTrueLabel;
    cfg.window_input = window;
    cfg.workers = worker_count(workers);
    RunManifest manifest;
    manifest.command = "gradnap";
    manifest.input_digests["arch"] = file_digest(arch_path);
    manifest.input_digests["weights"] = file_digest(weights_path);
    PipelineResult result;
    {
        StageTimer timer(manifest, "gradnap");
        result = run_pipeline(spec, weights, ds, cfg);
    }
    write_pipeline_outputs(out_dir, ds, result, manifest);
    manifest.write(out_dir / "manifest.json");
    std::cout << result.gradnaps.size() << " groups x " << (spec.num_layers() + 1)
              << " layers written to " << out_dir.string() << "\n";
    return 0;
}

int cmd_featviz(const fs::path& arch_path, const fs::path& weights_path,
                const fs::path& gradnap_csv, std::size_t layer, std::uint64_t seed,
                std::size_t topk, const fs::path& out_dir) {
    ArchitectureSpec spec = load_architecture(arch_path);
    ModelWeights weights = load_weights(weights_path, spec);
    GradNAP nap = read_gradnap(gradnap_csv);
    nap.layer = layer;
    ResponsivenessVector r = responsiveness(nap);
    std::vector<RankedNeuron> top = top_responsive(r, std::min(topk, r.size()));
    std::vector<SignedNeuron> neurons;
    for (const RankedNeuron& n : top)
        if (n.sign != 0) neurons.push_back({n.channel, n.sign});
    if (neurons.empty()) throw DataError("all top-responsive neurons are dead (r == 0)");

    OptimizeConfig cfg;
    cfg.seed = seed;
    OptimalInput result = optimize_input(spec, weights, layer, neurons, cfg);

    fs::create_directories(out_dir);
    RunManifest manifest;
    manifest.command = "featviz";
    manifest.master_seed = seed;
    manifest.hyperparameters["learning_rate"] = cfg.learning_rate;
    manifest.hyperparameters["steps"] = static_cast<double>(cfg.steps);
    manifest.hyperparameters["init_stddev"] = cfg.init_stddev;
    manifest.hyperparameters["l1"] = result.l1;
    manifest.hyperparameters["l2"] = result.l2;
    manifest.hyperparameters["receptive_field"] = static_cast<double>(result.receptive_field);

    save_spectrogram(out_dir / "optimal_input.spec", result.input);
    write_matrix_csv(out_dir / "optimal_input.csv", result.input);
    write_heatmap_svg(out_dir / "optimal_input.svg", result.input);
    write_loss_csv(out_dir / "loss.csv", result.loss_trajectory);
    std::vector<ActionPotentialSeries> series = action_potentials(nap, top);
    write_action_potentials_csv(out_dir / "action_potentials.csv", series);
    write_action_potentials_svg(out_dir / "action_potentials.svg", series);
    for (const char* f : {"optimal_input.spec", "optimal_input.csv", "optimal_input.svg",
                          "loss.csv", "action_potentials.csv", "action_potentials.svg"})
        manifest.add_output(out_dir / f, out_dir);
    manifest.write(out_dir / "manifest.json");
    std::cout << "optimal input for layer " << layer << ": loss "
              << result.loss_trajectory.front() << " -> " << result.loss_trajectory.back()
              << "\n";
    return 0;
}

int cmd_cluster(const fs::path& gradnap_dir, const fs::path& out_dir) {
    GradnapDir naps = scan_gradnap_dir(gradnap_dir);
    fs::create_directories(out_dir);
    RunManifest manifest;
    manifest.command = "cluster";
    SilhouetteReport report = layer_silhouette_summary(naps.per_layer, naps.groups);
    write_silhouette_csv(out_dir / "silhouette.csv", report);
    write_silhouette_json(out_dir / "silhouette.json", report);
    manifest.add_output(out_dir / "silhouette.csv", out_dir);
    manifest.add_output(out_dir / "silhouette.json", out_dir);
    for (std::size_t l = 0; l < naps.per_layer.size(); ++l) {
        if (naps.per_layer[l].size() < 2) {
            std::cerr << "warning: layer " << l << " has fewer than 2 groups, skipped\n";
            continue;
        }
        DistanceMatrix dm = pairwise_distances(naps.per_layer[l], naps.groups);
        LinkageTree tree = complete_linkage(dm);
        std::string stem = "layer" + std::to_string(l);
        std::ofstream(out_dir / (stem + ".newick")) << to_newick(tree, naps.groups) << "\n";
        manifest.add_output(out_dir / (stem + ".newick"), out_dir);
        std::vector<double> thresholds = percentile_thresholds(dm);
        std::vector<double> pts = {75, 80, 85, 90, 95};
        for (std::size_t i = 0; i < thresholds.size(); ++i) {
            std::vector<std::size_t> assignment = cut_tree(tree, thresholds[i]);
            std::string mfile =
                stem + "_p" + std::to_string(static_cast<int>(pts[i])) + "_members.csv";
            write_cluster_members_csv(out_dir / mfile, naps.groups, assignment);
            manifest.add_output(out_dir / mfile, out_dir);
        }
    }
    manifest.write(out_dir / "manifest.json");
    std::cout << "clustering written for " << naps.per_layer.size() << " layers\n";
    return 0;
}

int cmd_report(const fs::path& gradnap_dir, const fs::path& out_dir) {
    GradnapDir naps = scan_gradnap_dir(gradnap_dir);
    fs::create_directories(out_dir);
    RunManifest manifest;
    manifest.command = "report";
    SilhouetteReport report = layer_silhouette_summary(naps.per_layer, naps.groups);
    write_silhouette_csv(out_dir / "silhouette.csv", report);
    write_silhouette_json(out_dir / "silhouette.json", report);
    manifest.add_output(out_dir / "silhouette.csv", out_dir);
    manifest.add_output(out_dir / "silhouette.json", out_dir);

    // per (group, layer) action potential plots
    for (std::size_t g = 0; g < naps.groups.size(); ++g)
        for (std::size_t l = 0; l < naps.per_layer.size(); ++l) {
            if (g >= naps.per_layer[l].size()) continue;
            GradNAP nap;
            nap.values = naps.per_layer[l][g];
            nap.layer = l;
            ResponsivenessVector r = responsiveness(nap);
            std::vector<RankedNeuron> top = top_responsive(r, std::min<std::size_t>(5, r.size()));
            std::vector<ActionPotentialSeries> series = action_potentials(nap, top);
            std::string stem = "ap_" + naps.groups[g] + "_layer" + std::to_string(l);
            write_action_potentials_csv(out_dir / (stem + ".csv"), series);
            write_action_potentials_svg(out_dir / (stem + ".svg"), series);
            std::string heat =
                "gradnap_" + naps.groups[g] + "_layer" + std::to_string(l) + ".svg";
            write_heatmap_svg(out_dir / heat, nap.values);
            manifest.add_output(out_dir / heat, out_dir);
            manifest.add_output(out_dir / (stem + ".csv"), out_dir);
            manifest.add_output(out_dir / (stem + ".svg"), out_dir);
        }
    for (std::size_t l = 0; l < naps.per_layer.size(); ++l) {
        if (naps.per_layer[l].size() < 2) continue;
        DistanceMatrix dm = pairwise_distances(naps.per_layer[l], naps.groups);
        LinkageTree tree = complete_linkage(dm);
        std::ofstream(out_dir / ("layer" + std::to_string(l) + ".newick"))
            << to_newick(tree, naps.groups) << "\n";
        manifest.add_output(out_dir / ("layer" + std::to_string(l) + ".newick"), out_dir);
    }
    manifest.write(out_dir / "manifest.json");
    std::cout << "report written to " << out_dir.string() << "\n";
    return 0;
}

int cmd_run_all(const fs::path& config_path, const fs::path& out_dir, std::size_t workers) {
    RunConfig cfg = parse_run_config(config_path);
    fs::create_directories(out_dir);
    RunManifest manifest;
    manifest.command = "run-all";
    manifest.config_digest = file_digest(config_path);
    manifest.master_seed = cfg.seed;

    Dataset ds;
    {
        StageTimer timer(manifest, "gen-data");
        ds = generate(cfg.classes, cfg.gen);
        save_dataset(out_dir / "data", ds);
    }
    save_architecture(out_dir / "arch.txt", cfg.arch);
    manifest.add_output(out_dir / "arch.txt", out_dir);

    ModelWeights weights;
    TrainReport train_report;
    {
        StageTimer timer(manifest, "train");
        weights = train_toy(cfg.arch, ds, cfg.train, &train_report);
        save_weights(out_dir / "weights.gnw", weights, cfg.arch);
    }
    manifest.add_output(out_dir / "weights.gnw", out_dir);
    manifest.hyperparameters["train_accuracy"] = train_report.final_accuracy;
    std::cout << "train: frame accuracy " << train_report.final_accuracy << "\n";

    PipelineResult result;
    {
        StageTimer timer(manifest, "gradnap");
        PipelineConfig pcfg;
        pcfg.grouping = cfg.grouping == "predicted" ? GroupingMode::ByPredicted
                                                    : GroupingMode::ByTrueLabel;
        pcfg.window_input = cfg.window_input;
        pcfg.workers = worker_count(workers);
        result = run_pipeline(cfg.arch, weights, ds, pcfg);
        write_pipeline_outputs(out_dir / "gradnap", ds, result, manifest);
    }
    for (const auto& [group, naps] : result.gradnaps)
        for (const GradNAP& nap : naps) {
            std::string stem = "gradnap/gradnap_" + group_name(ds, group) + "_layer" +
                               std::to_string(nap.layer);
            manifest.add_output(out_dir / (stem + ".csv"), out_dir);
        }

    {
        StageTimer timer(manifest, "featviz");
        OptimizeConfig ocfg;
        manifest.hyperparameters["featviz_learning_rate"] = ocfg.learning_rate;
        manifest.hyperparameters["featviz_steps"] = static_cast<double>(ocfg.steps);
        manifest.hyperparameters["featviz_init_stddev"] = ocfg.init_stddev;
        for (const auto& [group, naps] : result.gradnaps) {
            if (cfg.featviz_layer >= naps.size()) continue;
            const GradNAP& nap = naps[cfg.featviz_layer];
            ResponsivenessVector r = responsiveness(nap);
            std::vector<RankedNeuron> top =
                top_responsive(r, std::min(cfg.featviz_topk, r.size()));
            std::vector<SignedNeuron> neurons;
            for (const RankedNeuron& n : top)
                if (n.sign != 0) neurons.push_back({n.channel, n.sign});
            std::string name = group_name(ds, group);
            if (neurons.empty()) {
                std::cerr << "warning: group " << name << " has no responsive neurons\n";
                continue;
            }
            ocfg.seed = Rng::derive(cfg.seed, 1000 + group);
            OptimalInput opt = optimize_input(cfg.arch, weights, cfg.featviz_layer, neurons, ocfg);
            manifest.hyperparameters["featviz_l1"] = opt.l1;
            manifest.hyperparameters["featviz_l2"] = opt.l2;
            fs::path fdir = out_dir / "featviz";
            fs::create_directories(fdir);
            save_spectrogram(fdir / ("optimal_" + name + ".spec"), opt.input);
            write_matrix_csv(fdir / ("optimal_" + name + ".csv"), opt.input);
            write_heatmap_svg(fdir / ("optimal_" + name + ".svg"), opt.input);
            write_loss_csv(fdir / ("loss_" + name + ".csv"), opt.loss_trajectory);
            for (const std::string& f :
                 {"optimal_" + name + ".spec", "optimal_" + name + ".csv",
                  "optimal_" + name + ".svg", "loss_" + name + ".csv"})
                manifest.add_output(fdir / f, out_dir);
        }
    }

    {
        StageTimer timer(manifest, "report");
        if (fs::exists(out_dir / "gradnap")) {
            cmd_report(out_dir / "gradnap", out_dir / "report");
            for (const auto& entry : fs::directory_iterator(out_dir / "report"))
                if (entry.path().filename() != "manifest.json")
                    manifest.add_output(entry.path(), out_dir);
        }
    }
    for (const auto& entry : fs::directory_iterator(out_dir / "data"))
        if (entry.path().filename() != "manifest.json") manifest.add_output(entry.path(), out_dir);
    manifest.write(out_dir / "manifest.json");
    std::cout << "run-all complete: " << out_dir.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gradient-adjusted neuron activation profiles for 1D conv nets"};
    app.require_subcommand(1);

    std::string config_path, arch_path, weights_path, data_dir, out_path, gradnap_path;
    std::string group_by = "predicted";
    std::uint64_t seed = 1;
    std::size_t epochs = 40, batch = 4, window = 0, layer = 2, topk = 5, workers = 0;
    double lr = 0.02;

    CLI::App* gen = app.add_subcommand("gen-data", "Generate a synthetic spectrogram dataset");
    gen->add_option("--config", config_path, "experiment config file")->required();
    gen->add_option("--out", out_path, "output dataset directory")->required();
    gen->add_option("--seed", seed, "override the config seed");

    CLI::App* train = app.add_subcommand("train-toy", "Train the toy model");
    train->add_option("--arch", arch_path, "architecture file")->required();
    train->add_option("--data", data_dir, "dataset directory")->required();
    train->add_option("--out", out_path, "output weight file")->required();
    train->add_option("--seed", seed, "training seed");
    train->add_option("--epochs", epochs, "training epochs");
    train->add_option("--batch", batch, "batch size");
    train->add_option("--lr", lr, "learning rate");

    CLI::App* nap = app.add_subcommand("gradnap", "Compute GradNAPs over a dataset");
    nap->add_option("--arch", arch_path, "architecture file")->required();
    nap->add_option("--weights", weights_path, "weight file")->required();
    nap->add_option("--data", data_dir, "dataset directory")->required();
    nap->add_option("--group-by", group_by, "predicted | label");
    nap->add_option("--window", window, "input-frame window (0 = receptive field)");
    nap->add_option("--out", out_path, "output directory")->required();
    nap->add_option("--workers", workers, "worker pool size");

    CLI::App* viz = app.add_subcommand("featviz", "Optimal input for top responsive neurons");
    viz->add_option("--arch", arch_path, "architecture file")->required();
    viz->add_option("--weights", weights_path, "weight file")->required();
    viz->add_option("--gradnap", gradnap_path, "GradNAP CSV for the target group/layer")
        ->required();
    viz->add_option("--layer", layer, "1-based layer index")->required();
    viz->add_option("--seed", seed, "init seed");
    viz->add_option("--topk", topk, "number of responsive neurons");
    viz->add_option("--out", out_path, "output directory")->required();

    CLI::App* cluster = app.add_subcommand("cluster", "Cluster GradNAPs per layer");
    cluster->add_option("--gradnap-dir", gradnap_path, "directory of gradnap_*.csv")->required();
    cluster->add_option("--out", out_path, "output directory")->required();

    CLI::App* report = app.add_subcommand("report", "Silhouette report and plots");
    report->add_option("--gradnap-dir", gradnap_path, "directory of gradnap_*.csv")->required();
    report->add_option("--out", out_path, "output directory")->required();

    CLI::App* runall = app.add_subcommand("run-all", "Full experiment from one config");
    runall->add_option("--config", config_path, "experiment config file")->required();
    runall->add_option("--out", out_path, "output run directory")->required();
    runall->add_option("--workers", workers, "worker pool size");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(config_path, out_path, seed);
        if (train->parsed())
            return cmd_train_toy(arch_path, data_dir, out_path, seed, epochs, batch, lr);
        if (nap->parsed())
            return cmd_gradnap(arch_path, weights_path, data_dir, group_by, window, out_path,
                               workers);
        if (viz->parsed())
            return cmd_featviz(arch_path, weights_path, gradnap_path, layer, seed, topk,
                               out_path);
        if (cluster->parsed()) return cmd_cluster(gradnap_path, out_path);
        if (report->parsed()) return cmd_report(gradnap_path, out_path);
        if (runall->parsed()) return cmd_run_all(config_path, out_path, workers);
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const IndexError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return 0;
}
