#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "gradnap/matrix.hpp"

namespace gradnap {

enum class Activation { Relu, Tanh, Identity };

Activation activation_from_string(const std::string& name);
std::string activation_to_string(Activation a);

struct LayerSpec {
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel = 1;
    std::size_t stride = 1;
    Activation activation = Activation::Relu;
};

/// Ordered layer stack plus the input bin count. validate() enforces channel
/// chaining and positive sizes.
struct ArchitectureSpec {
    std::size_t input_bins = 0;
    std::vector<LayerSpec> layers;

    std::size_t num_layers() const { return layers.size(); }
    std::size_t num_classes() const { return layers.empty() ? 0 : layers.back().out_channels; }
    void validate() const;
};

struct LayerWeights {
    // kernel[o][i][k] flattened as o*(in*k) + i*k + k_idx
    std::vector<double> kernel;
    std::vector<double> bias;

    double& w(std::size_t o, std::size_t i, std::size_t k, const LayerSpec& spec) {
        return kernel[(o * spec.in_channels + i) * spec.kernel + k];
    }
    double w(std::size_t o, std::size_t i, std::size_t k, const LayerSpec& spec) const {
        return kernel[(o * spec.in_channels + i) * spec.kernel + k];
    }
};

struct ModelWeights {
    std::vector<LayerWeights> layers;

    void validate_against(const ArchitectureSpec& spec) const;
};

/// Receptive-field geometry of layer l (1-based) seen from the input.
struct ReceptiveField {
    std::size_t rf = 0;             // input frames feeding one output frame
    std::size_t stride_product = 1; // S_l
    std::size_t center_offset = 0;  // floor((rf - 1) / 2)

    /// Input-frame center of layer frame t.
    std::size_t center(std::size_t t) const { return t * stride_product + center_offset; }
};

/// RF_1 = kernel_1; RF_l = RF_{l-1} + (kernel_l - 1) * S_{l-1}.
ReceptiveField receptive_field(const ArchitectureSpec& spec, std::size_t layer);

/// Per-layer pre-activations and activations for one input. Index 0 is the
/// input spectrogram itself; layers are 1-based.
struct LayerTrace {
    Matrix input;                   // F x T
    std::vector<Matrix> pre;        // Z_l, l = 1..L (index 0 unused)
    std::vector<Matrix> act;        // A_l
    const Matrix& logits() const { return act.back(); }
    const Matrix& activation(std::size_t l) const { return l == 0 ? input : act[l]; }
};

/// Gradients of a scalar target w.r.t. each layer's activations (index 0 =
/// input gradient).
struct SensitivityTrace {
    std::vector<Matrix> grad;  // G_0..G_L
    std::size_t class_index = 0;
    std::size_t output_frame = 0;
};

std::size_t conv_output_len(std::size_t in_len, std::size_t kernel, std::size_t stride);

/// Valid (no-padding) 1D convolution: out[o,t] = bias[o] + sum w[o,i,k] * in[i, t*stride+k].
Matrix conv1d_forward(const Matrix& input, const LayerSpec& spec, const LayerWeights& weights);

LayerTrace forward(const ArchitectureSpec& spec, const ModelWeights& weights,
                   const Matrix& spectrogram);

/// Gradient of logits[class_index, output_frame] (pre-softmax) w.r.t. every
/// layer's activations and the input. With softmax_target the scalar is the
/// softmax probability of the class in that output column instead.
SensitivityTrace backward_onehot(const ArchitectureSpec& spec, const ModelWeights& weights,
                                 const LayerTrace& trace, std::size_t class_index,
                                 std::size_t output_frame, bool softmax_target = false);

/// Signed neuron set for the joint pre-activation loss.
struct SignedNeuron {
    std::size_t channel = 0;
    int sign = +1;  // +1 maximize, -1 minimize
};

struct InputLossSpec {
    std::size_t layer = 1;                 // 1-based
    std::vector<SignedNeuron> neurons;
    std::size_t center_frame = 0;          // layer-frame index of the "single time point"
    double l1 = 0.0;
    double l2 = 0.0;
};

/// Loss = -sum_{sign>0} Z_l[n,c] + sum_{sign<0} Z_l[n,c] + l1*sum|x| + l2*sum x^2.
double input_loss(const LayerTrace& trace, const InputLossSpec& loss, const Matrix& input);

/// Gradient of input_loss w.r.t. the input spectrogram.
Matrix grad_wrt_input(const ArchitectureSpec& spec, const ModelWeights& weights,
                      const Matrix& input, const InputLossSpec& loss);

struct AdamState {
    double lr = 0.05;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t step_count = 0;
    std::vector<double> m;
    std::vector<double> v;

    explicit AdamState(std::size_t size = 0, double learning_rate = 0.05)
        : lr(learning_rate), m(size, 0.0), v(size, 0.0) {}
};

/// Standard bias-corrected Adam update, in place.
void adam_step(AdamState& state, std::vector<double>& tensor, const std::vector<double>& gradient);

namespace detail {
double apply_activation(Activation a, double z);
double activation_derivative(Activation a, double z);

/// Backprop a seed gradient sitting on pre-activations of layer `top` (dZ_top)
/// down to gradients w.r.t. all activations A_l (l < top) and the input.
/// Returns G_0..G_{top-1}; caller owns converting dZ_top to dA_top if needed.
std::vector<Matrix> backprop_from_preact(const ArchitectureSpec& spec, const ModelWeights& weights,
                                         const LayerTrace& trace, std::size_t top,
                                         const Matrix& seed_dz);
}  // namespace detail

}  // namespace gradnap
