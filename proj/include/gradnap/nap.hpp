#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "gradnap/data.hpp"
#include "gradnap/model.hpp"
#include "gradnap/netcore.hpp"

namespace gradnap {

enum class GroupingMode { ByPredicted, ByTrueLabel };

/// How the mean |gradient| is turned into a [0,1] mask.
enum class MaskMode {
    AbsMax,       // |G| / max |G|, zeros stay zero (default)
    SignedMinMax  // (G - min) / (max - min), comparison variant
};

enum class AlignReduction { SumChannels, MaxChannels };

/// One maximal run of identical labels in one example's output track.
struct GroupOccurrence {
    std::size_t example_id = 0;
    std::size_t group_label = 0;        // run label (grouping key)
    std::size_t target_class = 0;       // predicted class at the representative frame
    std::size_t run_start = 0;          // output-frame units, inclusive
    std::size_t run_end = 0;            // inclusive
    std::size_t output_frame = 0;       // representative frame (max logit, earliest tie)
};

/// Windows of one occurrence, cropped around the alignment center per layer.
struct AlignedWindow {
    std::size_t layer = 0;    // 0 = input
    std::size_t center = 0;   // t*_l in layer-frame units
    Matrix activation;        // C_l x W_l (input: spectrogram window)
    Matrix gradient;          // C_l x W_l, signed G_l
};

struct NAPAccumulator {
    std::vector<Matrix> act_sum;       // per layer (0..L)
    std::vector<Matrix> abs_grad_sum;  // sums of |G|
    std::vector<Matrix> grad_sum;      // signed sums (for the min-max mask variant)
    std::size_t count = 0;

    void add(const std::vector<AlignedWindow>& windows);
    void merge(const NAPAccumulator& other);
};

struct GradNAP {
    std::size_t group_label = 0;
    std::size_t layer = 0;
    Matrix values;             // C_l x W_l
    std::size_t count = 0;     // occurrences in the group
    bool degenerate = false;   // all-zero gradient mean
};

struct PipelineConfig {
    GroupingMode grouping = GroupingMode::ByPredicted;
    MaskMode mask_mode = MaskMode::AbsMax;
    AlignReduction align_reduction = AlignReduction::SumChannels;
    std::size_t window_input = 0;  // input frames; 0 -> full network receptive field
    std::size_t workers = 1;
    bool include_silence = false;  // keep silence-labeled runs as a group
};

struct PipelineResult {
    // group label -> per-layer GradNAPs (index 0 = input layer)
    std::map<std::size_t, std::vector<GradNAP>> gradnaps;
    std::size_t occurrences_total = 0;
    std::size_t occurrences_skipped = 0;  // window crossed a sequence boundary
    std::vector<std::size_t> degenerate_groups;
    std::vector<std::size_t> empty_groups;  // zero usable occurrences
};

/// Maximal runs of identical labels; representative frame is the max-logit
/// frame of the run's label, earliest on ties. Gradient target class is the
/// predicted class at that frame.
std::vector<GroupOccurrence> find_occurrences(const PredictionTrack& track,
                                              const std::vector<std::size_t>& true_labels,
                                              GroupingMode mode);

/// Per-layer half-widths for an input-frame window width, forced odd.
std::vector<std::size_t> layer_half_widths(const ArchitectureSpec& spec,
                                           std::size_t window_input);

/// Alignment centers and cropped windows for one occurrence. Returns an empty
/// vector when any layer's window would cross a sequence boundary.
std::vector<AlignedWindow> align_occurrence(const ArchitectureSpec& spec, const LayerTrace& trace,
                                            const SensitivityTrace& sens,
                                            const GroupOccurrence& occurrence,
                                            const std::vector<std::size_t>& half_widths,
                                            AlignReduction reduction);

/// N = mean_group(A) - mean_baseline(A); mask from mean_group(|G|); GradNAP = N * mask.
GradNAP finalize(const NAPAccumulator& group_acc, const NAPAccumulator& baseline_acc,
                 std::size_t group_label, std::size_t layer, MaskMode mode);

PipelineResult run_pipeline(const ArchitectureSpec& spec, const ModelWeights& weights,
                            const Dataset& dataset, const PipelineConfig& config);

}  // namespace gradnap
