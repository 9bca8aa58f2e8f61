#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "gradnap/nap.hpp"
#include "gradnap/netcore.hpp"

namespace gradnap {

/// Signed per-channel responsiveness: r_n = sign(sum row) * sum |row|.
using ResponsivenessVector = std::vector<double>;

ResponsivenessVector responsiveness(const GradNAP& nap);

struct RankedNeuron {
    std::size_t channel = 0;
    int sign = 0;  // sign of r_n; 0 for dead channels
    double magnitude = 0.0;
};

/// k channels with largest |r_n|, lower index first on ties.
std::vector<RankedNeuron> top_responsive(const ResponsivenessVector& r, std::size_t k = 5);

struct OptimizeConfig {
    std::size_t steps = 16;
    double learning_rate = 0.05;
    double init_stddev = 0.001;
    double l1_scale = 15.0;   // divided by RF_l
    double l2_scale = 0.1;
    std::uint64_t seed = 1;
};

struct OptimalInput {
    Matrix input;                        // F x RF_l after optimization
    std::vector<double> loss_trajectory; // length steps + 1
    std::size_t layer = 0;
    std::vector<SignedNeuron> neurons;
    double l1 = 0.0;  // effective coefficients (scale / RF_l)
    double l2 = 0.0;
    std::size_t receptive_field = 0;
};

/// Joint pre-activation optimization over an input sized to the layer's
/// receptive field (the layer emits exactly one frame).
OptimalInput optimize_input(const ArchitectureSpec& spec, const ModelWeights& weights,
                            std::size_t layer, const std::vector<SignedNeuron>& neurons,
                            const OptimizeConfig& config);

struct ActionPotentialSeries {
    std::size_t channel = 0;
    bool highlighted = false;
    std::vector<double> offsets;  // window offset from center
    std::vector<double> values;   // GradNAP values
};

/// One line-plot series per channel; top-k channels flagged.
std::vector<ActionPotentialSeries> action_potentials(const GradNAP& nap,
                                                     const std::vector<RankedNeuron>& top);

}  // namespace gradnap
