#pragma once

#include <cstddef>
#include <vector>

#include "gradnap/matrix.hpp"
#include "gradnap/netcore.hpp"
#include "gradnap/rng.hpp"

namespace test_helpers {

using gradnap::ArchitectureSpec;
using gradnap::Matrix;
using gradnap::ModelWeights;
using gradnap::Rng;

inline Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
    Matrix m(rows, cols);
    for (double& v : m.raw()) v = rng.gaussian(0.0, scale);
    return m;
}

/// Random architecture with <= max_layers layers and <= max_channels channels.
inline ArchitectureSpec random_arch(Rng& rng, std::size_t input_bins, std::size_t max_layers = 4,
                                    std::size_t max_channels = 8) {
    ArchitectureSpec spec;
    spec.input_bins = input_bins;
    std::size_t layers = 1 + static_cast<std::size_t>(rng.uniform_int(0, max_layers - 1));
    std::size_t prev = input_bins;
    for (std::size_t l = 0; l < layers; ++l) {
        gradnap::LayerSpec ls;
        ls.in_channels = prev;
        ls.out_channels = 1 + static_cast<std::size_t>(rng.uniform_int(0, max_channels - 1));
        ls.kernel = 1 + static_cast<std::size_t>(rng.uniform_int(0, 3));
        ls.stride = 1 + static_cast<std::size_t>(rng.uniform_int(0, 1));
        int a = static_cast<int>(rng.uniform_int(0, 2));
        ls.activation = a == 0   ? gradnap::Activation::Relu
                        : a == 1 ? gradnap::Activation::Tanh
                                 : gradnap::Activation::Identity;
        prev = ls.out_channels;
        spec.layers.push_back(ls);
    }
    return spec;
}

inline ModelWeights random_weights(Rng& rng, const ArchitectureSpec& spec, double scale = 0.5) {
    ModelWeights w;
    for (const gradnap::LayerSpec& ls : spec.layers) {
        gradnap::LayerWeights lw;
        lw.kernel.resize(ls.out_channels * ls.in_channels * ls.kernel);
        lw.bias.resize(ls.out_channels);
        for (double& v : lw.kernel) v = rng.gaussian(0.0, scale);
        for (double& v : lw.bias) v = rng.gaussian(0.0, scale);
        w.layers.push_back(std::move(lw));
    }
    return w;
}

/// Triple-loop valid-convolution oracle, independent of conv1d_forward.
inline Matrix conv_oracle(const Matrix& input, const gradnap::LayerSpec& ls,
                          const gradnap::LayerWeights& lw) {
    std::size_t t_out = (input.cols() - ls.kernel) / ls.stride + 1;
    Matrix out(ls.out_channels, t_out);
    for (std::size_t o = 0; o < ls.out_channels; ++o)
        for (std::size_t t = 0; t < t_out; ++t) {
            double acc = lw.bias[o];
            for (std::size_t i = 0; i < ls.in_channels; ++i)
                for (std::size_t k = 0; k < ls.kernel; ++k)
                    acc += lw.kernel[(o * ls.in_channels + i) * ls.kernel + k] *
                           input(i, t * ls.stride + k);
            out(o, t) = acc;
        }
    return out;
}

/// Central finite difference of f w.r.t. one scalar slot.
template <typename F>
double central_diff(F&& f, double& slot, double h = 1e-5) {
    double orig = slot;
    slot = orig + h;
    double fp = f();
    slot = orig - h;
    double fm = f();
    slot = orig;
    return (fp - fm) / (2.0 * h);
}

/// max |a-b| / max(1, |a|, |b|) style relative error.
inline double rel_err(double got, double want) {
    double denom = std::max({1.0, std::abs(got), std::abs(want)});
    return std::abs(got - want) / denom;
}

}  // namespace test_helpers
