#include "gradnap/nap.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "gradnap/errors.hpp"

namespace gradnap {

std::vector<GroupOccurrence> find_occurrences(const PredictionTrack& track,
                                              const std::vector<std::size_t>& true_labels,
                                              GroupingMode mode) {
    const std::vector<std::size_t>& labels =
        (mode == GroupingMode::ByPredicted) ? track.classes : true_labels;
    if (mode == GroupingMode::ByTrueLabel && true_labels.size() != track.classes.size())
        throw DataError("find_occurrences: label track length " +
                        std::to_string(true_labels.size()) + " != output frames " +
                        std::to_string(track.classes.size()));
    std::vector<GroupOccurrence> occ;
    std::size_t n = labels.size();
    std::size_t start = 0;
    while (start < n) {
        std::size_t end = start;
        while (end + 1 < n && labels[end + 1] == labels[start]) ++end;
        GroupOccurrence o;
        o.group_label = labels[start];
        o.run_start = start;
        o.run_end = end;
        // representative frame: max logit of the run's label, earliest on ties
        std::size_t best = start;
        for (std::size_t t = start + 1; t <= end; ++t)
            if (track.logits(o.group_label, t) > track.logits(o.group_label, best)) best = t;
        o.output_frame = best;
        o.target_class = track.classes[best];
        occ.push_back(o);
        start = end + 1;
    }
    return occ;
}

namespace {

/// Frame range of layer `l` (0 = input) feeding output frame t of the final
/// layer: [start, start+len).
std::pair<std::size_t, std::size_t> receptive_cone(const ArchitectureSpec& spec, std::size_t l,
                                                   std::size_t t_final) {
    std::size_t start = t_final;
    std::size_t len = 1;
    for (std::size_t j = spec.num_layers(); j > l; --j) {
        const LayerSpec& ls = spec.layers[j - 1];
        start = start * ls.stride;
        len = (len - 1) * ls.stride + ls.kernel;
    }
    return {start, len};
}

std::size_t stride_product_through(const ArchitectureSpec& spec, std::size_t l) {
    std::size_t s = 1;
    for (std::size_t j = 0; j < l; ++j) s *= spec.layers[j].stride;
    return s;
}

}  // namespace

std::vector<std::size_t> layer_half_widths(const ArchitectureSpec& spec,
                                           std::size_t window_input) {
    std::vector<std::size_t> half(spec.num_layers() + 1);
    for (std::size_t l = 0; l <= spec.num_layers(); ++l) {
        std::size_t s = stride_product_through(spec, l);
        half[l] = (window_input / s) / 2;
    }
    return half;
}

std::vector<AlignedWindow> align_occurrence(const ArchitectureSpec& spec, const LayerTrace& trace,
                                            const SensitivityTrace& sens,
                                            const GroupOccurrence& occurrence,
                                            const std::vector<std::size_t>& half_widths,
                                            AlignReduction reduction) {
    std::vector<AlignedWindow> windows;
    for (std::size_t l = 0; l <= spec.num_layers(); ++l) {
        const Matrix& act = trace.activation(l);
        const Matrix& grad = sens.grad[l];
        auto [cone_start, cone_len] = receptive_cone(spec, l, occurrence.output_frame);
        std::size_t lo = std::min(cone_start, act.cols());
        std::size_t hi = std::min(cone_start + cone_len, act.cols());
        if (lo >= hi) return {};

        // t*: max sum_c |G|*A (input layer: max sum |G|), earliest on ties
        std::size_t best = lo;
        double best_score = -1.0;
        for (std::size_t t = lo; t < hi; ++t) {
            double score = 0.0;
            for (std::size_t c = 0; c < act.rows(); ++c) {
                double term = (l == 0) ? std::abs(grad(c, t))
                                       : std::abs(grad(c, t)) * act(c, t);
                if (reduction == AlignReduction::SumChannels || l == 0)
                    score += term;
                else
                    score = std::max(score, term);
            }
            if (score > best_score) {
                best_score = score;
                best = t;
            }
        }

        std::size_t h = half_widths[l];
        if (best < h || best + h >= act.cols()) return {};  // window crosses boundary: skip
        AlignedWindow w;
        w.layer = l;
        w.center = best;
        w.activation = act.slice_cols(best - h, 2 * h + 1);
        w.gradient = grad.slice_cols(best - h, 2 * h + 1);
        windows.push_back(std::move(w));
    }
    return windows;
}

void NAPAccumulator::add(const std::vector<AlignedWindow>& windows) {
    if (act_sum.empty()) {
        act_sum.resize(windows.size());
        abs_grad_sum.resize(windows.size());
        grad_sum.resize(windows.size());
        for (std::size_t l = 0; l < windows.size(); ++l) {
            act_sum[l] = Matrix(windows[l].activation.rows(), windows[l].activation.cols());
            abs_grad_sum[l] = Matrix(windows[l].activation.rows(), windows[l].activation.cols());
            grad_sum[l] = Matrix(windows[l].activation.rows(), windows[l].activation.cols());
        }
    }
    if (windows.size() != act_sum.size())
        throw ConfigError("NAPAccumulator: layer count mismatch");
    for (std::size_t l = 0; l < windows.size(); ++l) {
        if (!windows[l].activation.same_shape(act_sum[l]))
            throw ConfigError("NAPAccumulator: window shape mismatch at layer " +
                              std::to_string(l));
        act_sum[l] += windows[l].activation;
        for (std::size_t i = 0; i < windows[l].gradient.size(); ++i) {
            abs_grad_sum[l].raw()[i] += std::abs(windows[l].gradient.raw()[i]);
            grad_sum[l].raw()[i] += windows[l].gradient.raw()[i];
        }
    }
    ++count;
}

void NAPAccumulator::merge(const NAPAccumulator& other) {
    if (other.count == 0) return;
    if (count == 0) {
        *this = other;
        return;
    }
    if (act_sum.size() != other.act_sum.size())
        throw ConfigError("NAPAccumulator::merge: layer count mismatch");
    for (std::size_t l = 0; l < act_sum.size(); ++l) {
        act_sum[l] += other.act_sum[l];
        abs_grad_sum[l] += other.abs_grad_sum[l];
        grad_sum[l] += other.grad_sum[l];
    }
    count += other.count;
}

GradNAP finalize(const NAPAccumulator& group_acc, const NAPAccumulator& baseline_acc,
                 std::size_t group_label, std::size_t layer, MaskMode mode) {
    if (group_acc.count == 0 || baseline_acc.count == 0)
        throw ConfigError("finalize: empty accumulator");
    const Matrix& ga = group_acc.act_sum[layer];
    const Matrix& ba = baseline_acc.act_sum[layer];
    if (!ga.same_shape(ba)) throw ConfigError("finalize: group/baseline shape mismatch");

    GradNAP nap;
    nap.group_label = group_label;
    nap.layer = layer;
    nap.count = group_acc.count;
    nap.values = Matrix(ga.rows(), ga.cols());

    double ginv = 1.0 / static_cast<double>(group_acc.count);
    double binv = 1.0 / static_cast<double>(baseline_acc.count);

    if (mode == MaskMode::AbsMax) {
        const Matrix& gsum = group_acc.abs_grad_sum[layer];
        double max_mean = 0.0;
        for (double v : gsum.raw()) max_mean = std::max(max_mean, v * ginv);
        if (max_mean == 0.0) {
            nap.degenerate = true;
            return nap;  // values stay identically zero
        }
        for (std::size_t i = 0; i < nap.values.size(); ++i) {
            double n = ga.raw()[i] * ginv - ba.raw()[i] * binv;
            double mask = (gsum.raw()[i] * ginv) / max_mean;
            nap.values.raw()[i] = n * mask;
        }
    } else {
        const Matrix& gsum = group_acc.grad_sum[layer];
        double lo = gsum.raw()[0] * ginv, hi = lo;
        for (double v : gsum.raw()) {
            lo = std::min(lo, v * ginv);
            hi = std::max(hi, v * ginv);
        }
        if (hi == lo) {
            nap.degenerate = true;
            return nap;
        }
        for (std::size_t i = 0; i < nap.values.size(); ++i) {
            double n = ga.raw()[i] * ginv - ba.raw()[i] * binv;
            double mask = (gsum.raw()[i] * ginv - lo) / (hi - lo);
            nap.values.raw()[i] = n * mask;
        }
    }
    if (!nap.values.all_finite()) throw NumericError("finalize: non-finite GradNAP");
    return nap;
}

PipelineResult run_pipeline(const ArchitectureSpec& spec, const ModelWeights& weights,
                            const Dataset& dataset, const PipelineConfig& config) {
    spec.validate();
    weights.validate_against(spec);
    if (spec.input_bins != dataset.bins)
        throw ConfigError("run_pipeline: architecture expects " +
                          std::to_string(spec.input_bins) + " bins, dataset has " +
                          std::to_string(dataset.bins));

    std::size_t window_input = config.window_input;
    ReceptiveField full = receptive_field(spec, spec.num_layers());
    if (window_input == 0) window_input = full.rf;
    std::vector<std::size_t> half = layer_half_widths(spec, window_input);
    ReceptiveField geom = full;

    // per-example occurrence windows, computed in parallel, accumulated in
    // example order so results do not depend on the worker count
    struct ExampleResult {
        std::vector<std::pair<std::size_t, std::vector<AlignedWindow>>> windows;  // (group, win)
        std::size_t skipped = 0;
        std::size_t total = 0;
    };
    std::vector<ExampleResult> results(dataset.examples.size());

    auto process = [&](std::size_t e) {
        const Example& ex = dataset.examples[e];
        LayerTrace trace = forward(spec, weights, ex.spectrogram);
        PredictionTrack track;
        track.logits = trace.logits();
        track.geometry = geom;
        track.classes.resize(track.logits.cols());
        for (std::size_t t = 0; t < track.logits.cols(); ++t) {
            std::size_t best = 0;
            for (std::size_t c = 1; c < track.logits.rows(); ++c)
                if (track.logits(c, t) > track.logits(best, t)) best = c;
            track.classes[t] = best;
        }
        std::vector<std::size_t> true_out;
        if (config.grouping == GroupingMode::ByTrueLabel) {
            true_out.resize(track.classes.size());
            for (std::size_t t = 0; t < true_out.size(); ++t)
                true_out[t] = ex.frame_labels[geom.center(t)];
        }
        std::vector<GroupOccurrence> occs =
            find_occurrences(track, true_out, config.grouping);
        for (GroupOccurrence& o : occs) {
            o.example_id = e;
            if (!config.include_silence && o.group_label == dataset.silence_index()) continue;
            ++results[e].total;
            SensitivityTrace sens =
                backward_onehot(spec, weights, trace, o.target_class, o.output_frame);
            std::vector<AlignedWindow> win =
                align_occurrence(spec, trace, sens, o, half, config.align_reduction);
            if (win.empty()) {
                ++results[e].skipped;
                continue;
            }
            results[e].windows.emplace_back(o.group_label, std::move(win));
        }
    };

    std::size_t workers = std::max<std::size_t>(1, config.workers);
    if (workers == 1 || dataset.examples.size() < 2) {
        for (std::size_t e = 0; e < dataset.examples.size(); ++e) process(e);
    } else {
        std::vector<std::thread> pool;
        std::atomic<std::size_t> next{0};
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (;;) {
                    std::size_t e = next.fetch_add(1);
                    if (e >= dataset.examples.size()) return;
                    process(e);
                }
            });
        for (std::thread& t : pool) t.join();
    }

    std::map<std::size_t, NAPAccumulator> group_accs;
    NAPAccumulator baseline;
    PipelineResult out;
    for (const ExampleResult& r : results) {
        out.occurrences_total += r.total;
        out.occurrences_skipped += r.skipped;
        for (const auto& [group, win] : r.windows) {
            group_accs[group].add(win);
            baseline.add(win);
        }
    }

    for (const auto& [group, acc] : group_accs) {
        if (acc.count == 0) {
            out.empty_groups.push_back(group);
            continue;
        }
        std::vector<GradNAP> per_layer;
        bool any_degenerate = false;
        for (std::size_t l = 0; l <= spec.num_layers(); ++l) {
            GradNAP nap = finalize(acc, baseline, group, l, config.mask_mode);
            any_degenerate = any_degenerate || nap.degenerate;
            per_layer.push_back(std::move(nap));
        }
        if (any_degenerate) out.degenerate_groups.push_back(group);
        out.gradnaps.emplace(group, std::move(per_layer));
    }
    return out;
}

}  // namespace gradnap
