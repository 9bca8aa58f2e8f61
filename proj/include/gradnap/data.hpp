#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gradnap/matrix.hpp"

namespace gradnap {

/// Spectral pattern a class emits while active.
struct ClassSpec {
    struct Band {
        std::size_t center_bin = 0;
        std::size_t width_bins = 1;
        double intensity = 1.0;
    };
    struct Transient {
        double onset_sharpness = 1.0;       // frames over which the burst decays
        double broadband_intensity = 1.0;
    };

    enum class Kind { Bands, Transient };

    std::string name;
    Kind kind = Kind::Bands;
    std::vector<Band> bands;
    Transient transient;
    std::size_t min_frames = 8;
    std::size_t max_frames = 16;
};

/// Index reserved for silence = number of classes (labels 0..K-1 are classes).
struct Example {
    Matrix spectrogram;                    // F x T, z-normalized
    std::vector<std::size_t> frame_labels; // length T
};

struct Dataset {
    std::size_t bins = 0;        // F
    std::vector<ClassSpec> class_specs;
    std::vector<Example> examples;
    std::vector<double> bin_mean;  // pre-normalization stats, per bin
    std::vector<double> bin_std;

    std::size_t silence_index() const { return class_specs.size(); }
    std::size_t num_label_values() const { return class_specs.size() + 1; }
};

struct GenerateConfig {
    std::size_t n_examples = 32;
    std::size_t bins = 16;          // F
    std::size_t frames = 128;       // T per example
    double noise_std = 0.05;
    double silence_fraction = 0.3;  // probability of a silence segment
    std::uint64_t seed = 1;
};

/// Random concatenation of class segments and silence, Gaussian background
/// noise, then global per-bin z-normalization over the whole dataset.
Dataset generate(const std::vector<ClassSpec>& class_specs, const GenerateConfig& config);

/// Directory layout: `meta` text file, per-example exNNNN.spec (binary) and
/// exNNNN.lab (CSV frame_index,class_index).
void save_dataset(const std::filesystem::path& dir, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& dir);

/// Single spectrogram in the exNNNN.spec binary format (magic GNS1, u32 F,
/// u32 T, float32 row-major).
void save_spectrogram(const std::filesystem::path& path, const Matrix& spectrogram);
Matrix load_spectrogram(const std::filesystem::path& path);

}  // namespace gradnap
