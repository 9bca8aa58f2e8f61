#include "doctest.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gradnap/clustering.hpp"
#include "gradnap/data.hpp"
#include "gradnap/model.hpp"
#include "gradnap/nap.hpp"
#include "gradnap/netcore.hpp"
#include "gradnap/report.hpp"
#include "gradnap/respviz.hpp"
#include "helpers.hpp"

using namespace gradnap;
using namespace test_helpers;
namespace fs = std::filesystem;

// Each criterion prints exactly one pass/fail line; ACC accumulates the
// verdict while still registering every sub-check with the test framework.
#define ACC(cond)                  \
    do {                           \
        bool acc_v = (cond);       \
        CHECK(acc_v);              \
        ok = ok && acc_v;          \
    } while (0)

namespace {

void verdict(int criterion, const char* what, bool ok) {
    std::printf("criterion %d (%s): %s\n", criterion, what, ok ? "PASS" : "FAIL");
    std::fflush(stdout);
}

std::size_t min_input_len(const ArchitectureSpec& spec) {
    std::size_t len = 1;
    for (std::size_t l = spec.layers.size(); l-- > 0;)
        len = (len - 1) * spec.layers[l].stride + spec.layers[l].kernel;
    return len;
}

// ---- shared CLI run (criteria 6-9) --------------------------------------

struct CliRun {
    fs::path dir;    // working directory
    fs::path run1;
    fs::path run2;
    bool ok = false;
};

const char* kConfig =
    "seed 5\n"
    "bins 12\n"
    "frames 96\n"
    "examples 32\n"
    "noise_std 0.05\n"
    "silence_fraction 0.3\n"
    "epochs 40\n"
    "batch_size 4\n"
    "learning_rate 0.02\n"
    "grouping predicted\n"
    "featviz_layer 2\n"
    "layer out=12 kernel=5 stride=2 act=tanh\n"
    "layer out=12 kernel=3 stride=1 act=tanh\n"
    "layer out=4 kernel=3 stride=1 act=identity\n"
    "class low bands 2:1:2.0 frames 10 20\n"
    "class mid bands 6:1:2.0 frames 10 20\n"
    "class high bands 10:1:2.0 frames 10 20\n";

const std::map<std::string, std::size_t> kBands = {{"low", 2}, {"mid", 6}, {"high", 10}};

const CliRun& cli_run() {
    static CliRun run = [] {
        CliRun r;
        const char* cli = std::getenv("GRADNAP_CLI");
        if (!cli) {
            std::fprintf(stderr, "GRADNAP_CLI not set\n");
            return r;
        }
        r.dir = fs::temp_directory_path() / "gradnap_acceptance";
        fs::remove_all(r.dir);
        fs::create_directories(r.dir);
        std::ofstream(r.dir / "config.txt") << kConfig;
        r.run1 = r.dir / "run1";
        r.run2 = r.dir / "run2";
        for (const fs::path& out : {r.run1, r.run2}) {
            std::string cmd = std::string(cli) + " run-all --config " +
                              (r.dir / "config.txt").string() + " --out " + out.string() +
                              " > " + (r.dir / "cli.log").string() + " 2>&1";
            if (std::system(cmd.c_str()) != 0) {
                std::fprintf(stderr, "run-all failed, see %s\n", (r.dir / "cli.log").c_str());
                return r;
            }
        }
        r.ok = true;
        return r;
    }();
    return run;
}

nlohmann::json load_json(const fs::path& p) {
    std::ifstream in(p);
    return nlohmann::json::parse(in);
}

// ---- naive clustering oracles (criterion 5) -----------------------------

std::vector<Merge> naive_complete_linkage(const DistanceMatrix& dm) {
    struct C {
        std::size_t id;
        std::set<std::size_t> members;
    };
    std::vector<C> live;
    for (std::size_t i = 0; i < dm.n; ++i) live.push_back({i, {i}});
    std::vector<Merge> out;
    std::size_t next = dm.n;
    while (live.size() > 1) {
        double best = 1e300;
        std::size_t bi = 0, bj = 1;
        for (std::size_t a = 0; a < live.size(); ++a)
            for (std::size_t b = a + 1; b < live.size(); ++b) {
                double d = 0;
                for (std::size_t x : live[a].members)
                    for (std::size_t y : live[b].members) d = std::max(d, dm.at(x, y));
                std::size_t lo = std::min(live[a].id, live[b].id);
                std::size_t hi = std::max(live[a].id, live[b].id);
                std::size_t clo = std::min(live[bi].id, live[bj].id);
                std::size_t chi = std::max(live[bi].id, live[bj].id);
                if (d < best || (d == best && (lo < clo || (lo == clo && hi < chi)))) {
                    best = d;
                    bi = a;
                    bj = b;
                }
            }
        C merged;
        merged.id = next++;
        merged.members = live[bi].members;
        merged.members.insert(live[bj].members.begin(), live[bj].members.end());
        out.push_back({std::min(live[bi].id, live[bj].id), std::max(live[bi].id, live[bj].id),
                       best, merged.members.size()});
        if (bi > bj) std::swap(bi, bj);
        live.erase(live.begin() + bj);
        live.erase(live.begin() + bi);
        live.push_back(std::move(merged));
    }
    return out;
}

double naive_silhouette(const DistanceMatrix& dm, const std::vector<std::size_t>& assignment,
                        std::size_t k) {
    double total = 0;
    for (std::size_t i = 0; i < dm.n; ++i) {
        std::size_t ci = assignment[i];
        std::size_t own = 0;
        for (std::size_t j = 0; j < dm.n; ++j) own += assignment[j] == ci;
        if (own == 1) continue;
        double a = 0;
        for (std::size_t j = 0; j < dm.n; ++j)
            if (j != i && assignment[j] == ci) a += dm.at(i, j);
        a /= static_cast<double>(own - 1);
        double b = 1e300;
        for (std::size_t c = 0; c < k; ++c) {
            if (c == ci) continue;
            double m = 0;
            std::size_t cnt = 0;
            for (std::size_t j = 0; j < dm.n; ++j)
                if (assignment[j] == c) {
                    m += dm.at(i, j);
                    ++cnt;
                }
            if (cnt) b = std::min(b, m / cnt);
        }
        total += (b - a) / std::max(a, b);
    }
    return total / static_cast<double>(dm.n);
}

}  // namespace

TEST_CASE("criterion 1: gradient correctness against finite differences") {
    bool ok = true;
    auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    for (std::uint64_t trial = 0; trial < 50; ++trial) {
        Rng rng(50000 + trial);
        std::size_t bins = 3 + static_cast<std::size_t>(rng.uniform_int(0, 3));
        ArchitectureSpec spec = random_arch(rng, bins);
        ModelWeights w = random_weights(rng, spec);
        std::size_t frames =
            min_input_len(spec) + static_cast<std::size_t>(rng.uniform_int(0, 4));
        Matrix input = random_matrix(rng, bins, frames);

        LayerTrace trace = forward(spec, w, input);
        std::size_t t_out = trace.logits().cols();
        std::size_t cls = static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(spec.num_classes()) - 1));
        std::size_t frame = static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(t_out) - 1));

        SensitivityTrace sens = backward_onehot(spec, w, trace, cls, frame);
        for (std::size_t slot = 0; slot < input.size(); ++slot) {
            double fd = central_diff(
                [&] { return forward(spec, w, input).logits()(cls, frame); },
                input.raw()[slot]);
            worst = std::max(worst, rel_err(sens.grad[0].raw()[slot], fd));
        }

        InputLossSpec loss;
        loss.layer = 1 + static_cast<std::size_t>(
                             rng.uniform_int(0, static_cast<std::int64_t>(spec.num_layers()) - 1));
        loss.neurons = {{0, +1}};
        if (spec.layers[loss.layer - 1].out_channels > 1) loss.neurons.push_back({1, -1});
        loss.center_frame = 0;
        loss.l1 = 0.3;
        loss.l2 = 0.1;
        Matrix g = grad_wrt_input(spec, w, input, loss);
        for (std::size_t slot = 0; slot < input.size(); ++slot) {
            double fd = central_diff(
                [&] {
                    LayerTrace tr = forward(spec, w, input);
                    return input_loss(tr, loss, input);
                },
                input.raw()[slot]);
            worst = std::max(worst, rel_err(g.raw()[slot], fd));
        }
    }
    double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    ACC(worst < 1e-4);
    ACC(elapsed < 60.0);
    verdict(1, "gradient correctness vs central differences, 50 random models", ok);
}

TEST_CASE("criterion 2: responsiveness matches direct per-row evaluation") {
    bool ok = true;
    std::size_t rows_checked = 0;
    for (std::uint64_t trial = 0; trial < 100; ++trial) {
        Rng rng(60000 + trial);
        GradNAP nap;
        nap.values = random_matrix(rng, 10, 1 + static_cast<std::size_t>(rng.uniform_int(0, 14)));
        ResponsivenessVector r = responsiveness(nap);
        for (std::size_t n = 0; n < 10; ++n, ++rows_checked) {
            double sum = 0.0, abs_sum = 0.0;
            for (std::size_t i = 0; i < nap.values.cols(); ++i) {
                sum += nap.values(n, i);
                abs_sum += std::abs(nap.values(n, i));
            }
            double sign = sum > 0 ? 1.0 : (sum < 0 ? -1.0 : 0.0);
            ACC(std::abs(r[n] - sign * abs_sum) <= 1e-12 * std::max(1.0, std::abs(r[n])));
        }
        // top-k invariant under positive scaling
        GradNAP scaled = nap;
        scaled.values *= 0.5 + rng.uniform(0.0, 10.0);
        std::vector<RankedNeuron> a = top_responsive(r, 5);
        std::vector<RankedNeuron> b = top_responsive(responsiveness(scaled), 5);
        for (std::size_t i = 0; i < a.size(); ++i) {
            ACC(a[i].channel == b[i].channel);
            ACC(a[i].sign == b[i].sign);
        }
    }
    ACC(rows_checked == 1000);
    verdict(2, "signed-magnitude responsiveness exact on 1000 random rows + scale-invariant top-k",
            ok);
}

TEST_CASE("criterion 3: self-baseline nullity with a single group") {
    bool ok = true;
    ClassSpec only;
    only.name = "only";
    only.kind = ClassSpec::Kind::Bands;
    only.bands = {{4, 2, 1.5}};
    only.min_frames = 10;
    only.max_frames = 16;
    GenerateConfig gen;
    gen.n_examples = 8;
    gen.bins = 10;
    gen.frames = 64;
    gen.seed = 77;
    Dataset ds = generate({only}, gen);

    ArchitectureSpec spec = parse_architecture(
        "input_bins 10\n"
        "layer out=8 kernel=5 stride=2 act=tanh\n"
        "layer out=2 kernel=3 stride=1 act=identity\n");
    ModelWeights w = init_weights(spec, 5);

    PipelineConfig cfg;
    cfg.grouping = GroupingMode::ByTrueLabel;  // exactly one group: the only class
    PipelineResult result = run_pipeline(spec, w, ds, cfg);
    ACC(result.gradnaps.size() == 1);
    double max_abs = 0.0;
    for (const auto& [group, naps] : result.gradnaps)
        for (const GradNAP& nap : naps) max_abs = std::max(max_abs, nap.values.max_abs());
    ACC(max_abs < 1e-9);
    verdict(3, "single-group GradNAP vanishes against its own baseline", ok);
}

TEST_CASE("criterion 4: zero mean |gradient| masks entries to exactly zero") {
    bool ok = true;
    // two accumulated occurrences; channel 1 never receives gradient
    NAPAccumulator group, baseline;
    auto window = [](double act, double g0) {
        AlignedWindow w;
        w.layer = 0;
        w.activation = Matrix::from_rows({{act, act + 1, act + 2}, {act - 1, act, act + 1}});
        w.gradient = Matrix::from_rows({{g0, -g0, g0 / 2}, {0, 0, 0}});
        return std::vector<AlignedWindow>{w};
    };
    group.add(window(1.0, 0.7));
    group.add(window(2.5, -0.3));
    baseline.add(window(1.0, 0.7));
    baseline.add(window(2.5, -0.3));
    baseline.add(window(-4.0, 1.1));

    GradNAP nap = finalize(group, baseline, 0, 0, MaskMode::AbsMax);
    for (std::size_t i = 0; i < nap.values.cols(); ++i) {
        ACC(nap.values(1, i) == 0.0);       // exactly zero, not just small
        ACC(nap.values(0, i) != 0.0);       // unmasked channel survives
    }

    // end to end: a channel with all-zero outgoing weights gets zero gradient
    ArchitectureSpec spec = parse_architecture(
        "input_bins 4\n"
        "layer out=3 kernel=3 stride=1 act=tanh\n"
        "layer out=2 kernel=3 stride=1 act=identity\n");
    Rng rng(91);
    ModelWeights w = random_weights(rng, spec);
    for (std::size_t o = 0; o < 2; ++o)
        for (std::size_t k = 0; k < 3; ++k) w.layers[1].w(o, 2, k, spec.layers[1]) = 0.0;
    Matrix input = random_matrix(rng, 4, 12);
    LayerTrace trace = forward(spec, w, input);
    SensitivityTrace sens = backward_onehot(spec, w, trace, 0, 0);
    for (std::size_t t = 0; t < sens.grad[1].cols(); ++t) ACC(sens.grad[1](2, t) == 0.0);
    verdict(4, "zero-gradient entries are exactly zero in the GradNAP", ok);
}

TEST_CASE("criterion 5: clustering matches naive oracles on 200 random instances") {
    bool ok = true;
    for (std::uint64_t trial = 0; trial < 200; ++trial) {
        Rng rng(70000 + trial);
        std::size_t n = 2 + static_cast<std::size_t>(rng.uniform_int(0, 10));
        std::vector<Matrix> items;
        std::vector<std::string> labels;
        for (std::size_t i = 0; i < n; ++i) {
            items.push_back(random_matrix(rng, 2, 3));
            labels.push_back("g" + std::to_string(i));
        }
        DistanceMatrix dm = pairwise_distances(items, labels);

        LinkageTree got = complete_linkage(dm);
        std::vector<Merge> want = naive_complete_linkage(dm);
        ACC(got.merges.size() == want.size());
        for (std::size_t m = 0; m < got.merges.size(); ++m) {
            ACC(got.merges[m].left == want[m].left);
            ACC(got.merges[m].right == want[m].right);
            ACC(std::abs(got.merges[m].height - want[m].height) < 1e-9);
        }

        double threshold = rng.uniform(0.0, got.merges.back().height * 1.1);
        std::vector<std::size_t> cut = cut_tree(got, threshold);
        // union-find oracle over retained merges
        std::vector<std::size_t> parent(n + got.merges.size());
        for (std::size_t i = 0; i < parent.size(); ++i) parent[i] = i;
        std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
            return parent[x] == x ? x : find(parent[x]);
        };
        for (std::size_t m = 0; m < got.merges.size(); ++m)
            if (got.merges[m].height <= threshold) {
                parent[find(got.merges[m].left)] = n + m;
                parent[find(got.merges[m].right)] = n + m;
            }
        std::map<std::size_t, std::set<std::size_t>> a, b;
        for (std::size_t i = 0; i < n; ++i) {
            a[cut[i]].insert(i);
            b[find(i)].insert(i);
        }
        std::set<std::set<std::size_t>> pa, pb;
        for (auto& [k, v] : a) pa.insert(v);
        for (auto& [k, v] : b) pb.insert(v);
        ACC(pa == pb);

        std::size_t k = *std::max_element(cut.begin(), cut.end()) + 1;
        if (k >= 2 && k < n)
            ACC(std::abs(silhouette(dm, cut) - naive_silhouette(dm, cut, k)) < 1e-9);
    }
    verdict(5, "complete linkage / cut / silhouette vs naive oracles", ok);
}

TEST_CASE("criterion 6: toy model accuracy and input-layer GradNAP locality") {
    bool ok = true;
    const CliRun& run = cli_run();
    ACC(run.ok);
    if (run.ok) {
        nlohmann::json manifest = load_json(run.run1 / "manifest.json");
        double accuracy = manifest["hyperparameters"]["train_accuracy"].get<double>();
        ACC(accuracy >= 0.95);
        for (const auto& [cls, band] : kBands) {
            Matrix nap = read_matrix_csv(run.run1 / "gradnap" /
                                         ("gradnap_" + cls + "_layer0.csv"));
            double pos_total = 0.0, pos_near = 0.0;
            for (std::size_t bin = 0; bin < nap.rows(); ++bin)
                for (std::size_t i = 0; i < nap.cols(); ++i)
                    if (nap(bin, i) > 0.0) {
                        pos_total += nap(bin, i);
                        std::size_t lo = band > 3 ? band - 3 : 0;
                        if (bin >= lo && bin <= band + 3) pos_near += nap(bin, i);
                    }
            ACC(pos_total > 0.0);
            ACC(pos_near >= 0.6 * pos_total);
        }
    }
    verdict(6, ">=95% frame accuracy and >=60% positive GradNAP mass near each band", ok);
}

TEST_CASE("criterion 7: feature visualization recovers the band; fixed hyperparameters") {
    bool ok = true;
    const CliRun& run = cli_run();
    ACC(run.ok);
    if (run.ok) {
        for (const auto& [cls, band] : kBands) {
            Matrix opt = read_matrix_csv(run.run1 / "featviz" / ("optimal_" + cls + ".csv"));
            std::size_t best_bin = 0;
            double best = -1e300;
            for (std::size_t bin = 0; bin < opt.rows(); ++bin)
                for (std::size_t i = 0; i < opt.cols(); ++i)
                    if (opt(bin, i) > best) {
                        best = opt(bin, i);
                        best_bin = bin;
                    }
            ACC(best_bin + 3 >= band && best_bin <= band + 3);

            std::ifstream in(run.run1 / "featviz" / ("loss_" + cls + ".csv"));
            std::string header, line;
            std::getline(in, header);
            std::vector<double> losses;
            while (std::getline(in, line))
                losses.push_back(std::stod(line.substr(line.find(',') + 1)));
            ACC(losses.size() == 17);  // 16 steps + init
            ACC(losses.back() < losses.front());
        }
        nlohmann::json manifest = load_json(run.run1 / "manifest.json");
        const auto& hp = manifest["hyperparameters"];
        ArchitectureSpec spec = load_architecture(run.run1 / "arch.txt");
        double rf = static_cast<double>(receptive_field(spec, 2).rf);
        ACC(hp["featviz_learning_rate"].get<double>() == 0.05);
        ACC(hp["featviz_steps"].get<double>() == 16.0);
        ACC(hp["featviz_init_stddev"].get<double>() == 0.001);
        ACC(std::abs(hp["featviz_l1"].get<double>() - 15.0 / rf) < 1e-12);
        ACC(std::abs(hp["featviz_l2"].get<double>() - 0.1 / rf) < 1e-12);
    }
    verdict(7, "optimal input peaks near the band, loss decreases, hyperparameters match", ok);
}

TEST_CASE("criterion 8: silhouette report shape") {
    bool ok = true;
    const CliRun& run = cli_run();
    ACC(run.ok);
    if (run.ok) {
        std::ifstream in(run.run1 / "report" / "silhouette.csv");
        std::string line;
        std::getline(in, line);  // header
        std::map<std::size_t, std::vector<std::pair<double, std::size_t>>> per_layer;
        while (std::getline(in, line)) {
            std::stringstream ss(line);
            std::string cell;
            std::vector<std::string> cells;
            while (std::getline(ss, cell, ',')) cells.push_back(cell);
            std::size_t layer = std::stoul(cells[0]);
            per_layer[layer].push_back({std::stod(cells[1]), std::stoul(cells[3])});
        }
        ACC(!per_layer.empty());
        for (const auto& [layer, rows] : per_layer) {
            ACC(rows.size() == 5);
            double expect_p = 75.0;
            std::size_t prev_k = static_cast<std::size_t>(-1);
            for (const auto& [p, k] : rows) {
                ACC(p == expect_p);
                expect_p += 5.0;
                ACC(k <= prev_k);  // non-increasing in threshold
                prev_k = k;
            }
        }
        // per-layer mean averages the defined scores only
        nlohmann::json sj = load_json(run.run1 / "report" / "silhouette.json");
        for (const auto& layer : sj) {
            double sum = 0.0;
            std::size_t defined = 0;
            for (const auto& c : layer["cells"])
                if (!c["score"].is_null()) {
                    sum += c["score"].get<double>();
                    ++defined;
                }
            if (defined)
                ACC(std::abs(layer["mean_score"].get<double>() - sum / defined) < 1e-9);
            else
                ACC(layer["mean_score"].is_null());
        }
    }
    verdict(8, "5 thresholds per layer, non-increasing cluster counts, defined-score means", ok);
}

TEST_CASE("criterion 9: run-all is bit-identical across repeated runs") {
    bool ok = true;
    const CliRun& run = cli_run();
    ACC(run.ok);
    if (run.ok) {
        nlohmann::json m1 = load_json(run.run1 / "manifest.json");
        nlohmann::json m2 = load_json(run.run2 / "manifest.json");
        ACC(m1["outputs"].size() > 50);
        ACC(m1["outputs"] == m2["outputs"]);
        ACC(m1["config_digest"] == m2["config_digest"]);
    }
    verdict(9, "repeated run-all yields bit-identical output digests", ok);
}
