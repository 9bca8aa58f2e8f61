#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "gradnap/netcore.hpp"

namespace gradnap {

struct Dataset;  // data.hpp

/// Per-output-frame argmax class and logits, plus frame geometry.
struct PredictionTrack {
    std::vector<std::size_t> classes;  // argmax per output frame, ties -> lowest index
    Matrix logits;                     // C x T_L
    ReceptiveField geometry;           // of the final layer
};

struct TrainConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 4;
    double learning_rate = 0.01;
    std::uint64_t seed = 1;

    void validate() const;
};

struct TrainReport {
    std::vector<double> epoch_losses;  // mean cross-entropy per epoch
    double initial_loss = 0.0;
    double final_accuracy = 0.0;       // frame accuracy on the training set
};

PredictionTrack predict_frames(const ArchitectureSpec& spec, const ModelWeights& weights,
                               const Matrix& spectrogram);

/// Frame accuracy of the model against input-frame labels mapped to output
/// frames via the final layer's frame centers.
double frame_accuracy(const ArchitectureSpec& spec, const ModelWeights& weights,
                      const Dataset& dataset);

/// Seeded random init (scaled by fan-in) for a fresh model.
ModelWeights init_weights(const ArchitectureSpec& spec, std::uint64_t seed);

/// Minimal trainer: frame-wise cross-entropy via Adam, deterministic given
/// the seed. Labels live at input-frame resolution and are mapped to output
/// frames through the receptive-field centers.
ModelWeights train_toy(const ArchitectureSpec& spec, const Dataset& dataset,
                       const TrainConfig& config, TrainReport* report = nullptr);

void save_weights(const std::filesystem::path& path, const ModelWeights& weights,
                  const ArchitectureSpec& spec);
ModelWeights load_weights(const std::filesystem::path& path, const ArchitectureSpec& spec);

/// Key/value + layer-list architecture file.
ArchitectureSpec load_architecture(const std::filesystem::path& path);
void save_architecture(const std::filesystem::path& path, const ArchitectureSpec& spec);
ArchitectureSpec parse_architecture(const std::string& text);

}  // namespace gradnap
