#include "gradnap/netcore.hpp"

#include <algorithm>
#include <cmath>

#include "gradnap/errors.hpp"

namespace gradnap {

Activation activation_from_string(const std::string& name) {
    if (name == "relu") return Activation::Relu;
    if (name == "tanh") return Activation::Tanh;
    if (name == "identity") return Activation::Identity;
    throw ConfigError("unknown activation '" + name + "' (expected relu, tanh or identity)");
}

std::string activation_to_string(Activation a) {
    switch (a) {
        case Activation::Relu: return "relu";
        case Activation::Tanh: return "tanh";
        case Activation::Identity: return "identity";
    }
    return "?";
}

void ArchitectureSpec::validate() const {
    if (input_bins == 0) throw ConfigError("input_bins must be positive");
    if (layers.empty()) throw ConfigError("architecture needs at least one layer");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const LayerSpec& ls = layers[l];
        if (ls.kernel < 1 || ls.stride < 1 || ls.out_channels < 1)
            throw ConfigError("layer " + std::to_string(l + 1) +
                              ": kernel, stride and out_channels must be >= 1");
        std::size_t expected_in = (l == 0) ? input_bins : layers[l - 1].out_channels;
        if (ls.in_channels != expected_in)
            throw ConfigError("layer " + std::to_string(l + 1) + ": in_channels " +
                              std::to_string(ls.in_channels) + " does not chain (expected " +
                              std::to_string(expected_in) + ")");
    }
}

void ModelWeights::validate_against(const ArchitectureSpec& spec) const {
    if (layers.size() != spec.layers.size())
        throw ConfigError("weights have " + std::to_string(layers.size()) +
                          " layers, architecture has " + std::to_string(spec.layers.size()));
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const LayerSpec& ls = spec.layers[l];
        std::size_t kn = ls.out_channels * ls.in_channels * ls.kernel;
        if (layers[l].kernel.size() != kn || layers[l].bias.size() != ls.out_channels)
            throw ConfigError("weight shape mismatch at layer " + std::to_string(l + 1));
        for (double w : layers[l].kernel)
            if (!std::isfinite(w)) throw NumericError("non-finite kernel weight at layer " +
                                                      std::to_string(l + 1));
        for (double b : layers[l].bias)
            if (!std::isfinite(b)) throw NumericError("non-finite bias at layer " +
                                                      std::to_string(l + 1));
    }
}

ReceptiveField receptive_field(const ArchitectureSpec& spec, std::size_t layer) {
    if (layer < 1 || layer > spec.layers.size())
        throw IndexError("receptive_field: layer " + std::to_string(layer) + " out of range");
    ReceptiveField rf;
    rf.rf = spec.layers[0].kernel;
    rf.stride_product = spec.layers[0].stride;
    for (std::size_t l = 1; l < layer; ++l) {
        rf.rf += (spec.layers[l].kernel - 1) * rf.stride_product;
        rf.stride_product *= spec.layers[l].stride;
    }
    rf.center_offset = (rf.rf - 1) / 2;
    return rf;
}

std::size_t conv_output_len(std::size_t in_len, std::size_t kernel, std::size_t stride) {
    if (in_len < kernel) return 0;
    return (in_len - kernel) / stride + 1;
}

namespace detail {

double apply_activation(Activation a, double z) {
    switch (a) {
        case Activation::Relu: return z > 0.0 ? z : 0.0;
        case Activation::Tanh: return std::tanh(z);
        case Activation::Identity: return z;
    }
    return z;
}

double activation_derivative(Activation a, double z) {
    switch (a) {
        case Activation::Relu: return z > 0.0 ? 1.0 : 0.0;
        case Activation::Tanh: {
            double t = std::tanh(z);
            return 1.0 - t * t;
        }
        case Activation::Identity: return 1.0;
    }
    return 1.0;
}

}  // namespace detail

Matrix conv1d_forward(const Matrix& input, const LayerSpec& spec, const LayerWeights& weights) {
    if (input.rows() != spec.in_channels)
        throw ConfigError("conv1d_forward: input has " + std::to_string(input.rows()) +
                          " channels, layer expects " + std::to_string(spec.in_channels));
    if (input.cols() < spec.kernel)
        throw DataError("conv1d_forward: input length " + std::to_string(input.cols()) +
                        " shorter than kernel " + std::to_string(spec.kernel));
    std::size_t t_out = conv_output_len(input.cols(), spec.kernel, spec.stride);
    Matrix out(spec.out_channels, t_out);
    for (std::size_t o = 0; o < spec.out_channels; ++o) {
        for (std::size_t t = 0; t < t_out; ++t) {
            double acc = weights.bias[o];
            std::size_t base = t * spec.stride;
            for (std::size_t i = 0; i < spec.in_channels; ++i) {
                const double* wrow = &weights.kernel[(o * spec.in_channels + i) * spec.kernel];
                for (std::size_t k = 0; k < spec.kernel; ++k)
                    acc += wrow[k] * input(i, base + k);
            }
            out(o, t) = acc;
        }
    }
    return out;
}

LayerTrace forward(const ArchitectureSpec& spec, const ModelWeights& weights,
                   const Matrix& spectrogram) {
    spec.validate();
    weights.validate_against(spec);
    if (spectrogram.rows() != spec.input_bins)
        throw ConfigError("forward: spectrogram has " + std::to_string(spectrogram.rows()) +
                          " bins, architecture expects " + std::to_string(spec.input_bins));
    ReceptiveField full = receptive_field(spec, spec.num_layers());
    if (spectrogram.cols() < full.rf)
        throw DataError("forward: input length " + std::to_string(spectrogram.cols()) +
                        " shorter than network receptive field " + std::to_string(full.rf));

    LayerTrace trace;
    trace.input = spectrogram;
    trace.pre.resize(spec.num_layers() + 1);
    trace.act.resize(spec.num_layers() + 1);
    const Matrix* cur = &trace.input;
    for (std::size_t l = 0; l < spec.num_layers(); ++l) {
        trace.pre[l + 1] = conv1d_forward(*cur, spec.layers[l], weights.layers[l]);
        Matrix a = trace.pre[l + 1];
        for (double& v : a.raw()) v = detail::apply_activation(spec.layers[l].activation, v);
        trace.act[l + 1] = std::move(a);
        cur = &trace.act[l + 1];
    }
    return trace;
}

namespace detail {

std::vector<Matrix> backprop_from_preact(const ArchitectureSpec& spec, const ModelWeights& weights,
                                         const LayerTrace& trace, std::size_t top,
                                         const Matrix& seed_dz) {
    std::vector<Matrix> grads(top);  // G_0 .. G_{top-1} w.r.t. activations
    Matrix dz = seed_dz;
    for (std::size_t l = top; l >= 1; --l) {
        const LayerSpec& ls = spec.layers[l - 1];
        const LayerWeights& lw = weights.layers[l - 1];
        const Matrix& below = trace.activation(l - 1);
        Matrix da(below.rows(), below.cols());
        for (std::size_t o = 0; o < ls.out_channels; ++o) {
            for (std::size_t t = 0; t < dz.cols(); ++t) {
                double g = dz(o, t);
                if (g == 0.0) continue;
                std::size_t base = t * ls.stride;
                for (std::size_t i = 0; i < ls.in_channels; ++i) {
                    const double* wrow = &lw.kernel[(o * ls.in_channels + i) * ls.kernel];
                    for (std::size_t k = 0; k < ls.kernel; ++k)
                        da(i, base + k) += g * wrow[k];
                }
            }
        }
        grads[l - 1] = da;
        if (l > 1) {
            // convert dA_{l-1} to dZ_{l-1} through the activation of layer l-1
            const LayerSpec& pls = spec.layers[l - 2];
            const Matrix& pz = trace.pre[l - 1];
            dz = std::move(da);
            for (std::size_t idx = 0; idx < dz.size(); ++idx)
                dz.raw()[idx] *= activation_derivative(pls.activation, pz.raw()[idx]);
        }
    }
    return grads;
}

}  // namespace detail

SensitivityTrace backward_onehot(const ArchitectureSpec& spec, const ModelWeights& weights,
                                 const LayerTrace& trace, std::size_t class_index,
                                 std::size_t output_frame, bool softmax_target) {
    std::size_t num_layers = spec.num_layers();
    const Matrix& logits = trace.logits();
    if (class_index >= logits.rows())
        throw IndexError("backward_onehot: class " + std::to_string(class_index) + " out of range");
    if (output_frame >= logits.cols())
        throw IndexError("backward_onehot: output frame " + std::to_string(output_frame) +
                         " out of range");

    // dTarget / dA_L
    Matrix da_top(logits.rows(), logits.cols());
    if (!softmax_target) {
        da_top(class_index, output_frame) = 1.0;
    } else {
        // softmax over the classes of this output column
        double maxv = logits(0, output_frame);
        for (std::size_t c = 1; c < logits.rows(); ++c)
            maxv = std::max(maxv, logits(c, output_frame));
        double denom = 0.0;
        std::vector<double> p(logits.rows());
        for (std::size_t c = 0; c < logits.rows(); ++c) {
            p[c] = std::exp(logits(c, output_frame) - maxv);
            denom += p[c];
        }
        for (double& v : p) v /= denom;
        for (std::size_t c = 0; c < logits.rows(); ++c) {
            double delta = (c == class_index) ? 1.0 : 0.0;
            da_top(c, output_frame) = p[class_index] * (delta - p[c]);
        }
    }

    // dZ_L
    Matrix dz = da_top;
    const Matrix& z_top = trace.pre[num_layers];
    Activation top_act = spec.layers[num_layers - 1].activation;
    for (std::size_t i = 0; i < dz.size(); ++i)
        dz.raw()[i] *= detail::activation_derivative(top_act, z_top.raw()[i]);

    std::vector<Matrix> lower =
        detail::backprop_from_preact(spec, weights, trace, num_layers, dz);

    SensitivityTrace sens;
    sens.class_index = class_index;
    sens.output_frame = output_frame;
    sens.grad = std::move(lower);
    sens.grad.push_back(std::move(da_top));
    return sens;
}

double input_loss(const LayerTrace& trace, const InputLossSpec& loss, const Matrix& input) {
    const Matrix& z = trace.pre[loss.layer];
    double val = 0.0;
    for (const SignedNeuron& n : loss.neurons) {
        if (n.channel >= z.rows())
            throw IndexError("input_loss: neuron " + std::to_string(n.channel) + " out of range");
        val += (n.sign > 0 ? -1.0 : 1.0) * z(n.channel, loss.center_frame);
    }
    if (loss.l1 != 0.0 || loss.l2 != 0.0) {
        double a1 = 0.0, a2 = 0.0;
        for (double x : input.raw()) {
            a1 += std::abs(x);
            a2 += x * x;
        }
        val += loss.l1 * a1 + loss.l2 * a2;
    }
    return val;
}

Matrix grad_wrt_input(const ArchitectureSpec& spec, const ModelWeights& weights,
                      const Matrix& input, const InputLossSpec& loss) {
    if (loss.layer < 1 || loss.layer > spec.num_layers())
        throw IndexError("grad_wrt_input: layer " + std::to_string(loss.layer) + " out of range");
    LayerTrace trace = forward(spec, weights, input);
    const Matrix& z = trace.pre[loss.layer];
    if (loss.center_frame >= z.cols())
        throw IndexError("grad_wrt_input: center frame out of range");

    Matrix seed(z.rows(), z.cols());
    for (const SignedNeuron& n : loss.neurons) {
        if (n.channel >= z.rows())
            throw IndexError("grad_wrt_input: neuron " + std::to_string(n.channel) +
                             " out of range");
        seed(n.channel, loss.center_frame) += (n.sign > 0 ? -1.0 : 1.0);
    }
    std::vector<Matrix> grads =
        detail::backprop_from_preact(spec, weights, trace, loss.layer, seed);
    Matrix g = std::move(grads[0]);
    if (loss.l1 != 0.0 || loss.l2 != 0.0) {
        for (std::size_t i = 0; i < g.size(); ++i) {
            double x = input.raw()[i];
            double sgn = (x > 0.0) - (x < 0.0);
            g.raw()[i] += loss.l1 * sgn + 2.0 * loss.l2 * x;
        }
    }
    return g;
}

void adam_step(AdamState& state, std::vector<double>& tensor, const std::vector<double>& gradient) {
    if (tensor.size() != gradient.size() || tensor.size() != state.m.size())
        throw ConfigError("adam_step: shape mismatch");
    state.step_count += 1;
    double t = static_cast<double>(state.step_count);
    double bc1 = 1.0 - std::pow(state.beta1, t);
    double bc2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t i = 0; i < tensor.size(); ++i) {
        double g = gradient[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        double mhat = state.m[i] / bc1;
        double vhat = state.v[i] / bc2;
        tensor[i] -= state.lr * mhat / (std::sqrt(vhat) + state.epsilon);
    }
}

}  // namespace gradnap
