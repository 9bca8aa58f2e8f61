#include "gradnap/respviz.hpp"

#include <algorithm>
#include <cmath>

#include "gradnap/errors.hpp"
#include "gradnap/rng.hpp"

namespace gradnap {

ResponsivenessVector responsiveness(const GradNAP& nap) {
    if (nap.values.empty()) throw ConfigError("responsiveness: empty GradNAP");
    ResponsivenessVector r(nap.values.rows());
    for (std::size_t n = 0; n < nap.values.rows(); ++n) {
        double sum = 0.0, abs_sum = 0.0;
        for (std::size_t i = 0; i < nap.values.cols(); ++i) {
            double v = nap.values(n, i);
            sum += v;
            abs_sum += std::abs(v);
        }
        double sign = (sum > 0.0) ? 1.0 : (sum < 0.0 ? -1.0 : 0.0);
        r[n] = sign * abs_sum;
    }
    return r;
}

std::vector<RankedNeuron> top_responsive(const ResponsivenessVector& r, std::size_t k) {
    if (k > r.size())
        throw IndexError("top_responsive: k=" + std::to_string(k) + " exceeds channel count " +
                         std::to_string(r.size()));
    std::vector<std::size_t> idx(r.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return std::abs(r[a]) > std::abs(r[b]);
    });
    std::vector<RankedNeuron> out;
    for (std::size_t i = 0; i < k; ++i) {
        RankedNeuron n;
        n.channel = idx[i];
        n.sign = (r[idx[i]] > 0.0) ? +1 : (r[idx[i]] < 0.0 ? -1 : 0);
        n.magnitude = std::abs(r[idx[i]]);
        out.push_back(n);
    }
    return out;
}

OptimalInput optimize_input(const ArchitectureSpec& spec, const ModelWeights& weights,
                            std::size_t layer, const std::vector<SignedNeuron>& neurons,
                            const OptimizeConfig& config) {
    if (layer < 1 || layer > spec.num_layers())
        throw IndexError("optimize_input: layer " + std::to_string(layer) + " out of range");
    if (neurons.empty()) throw ConfigError("optimize_input: empty neuron set");

    ReceptiveField rf = receptive_field(spec, layer);
    InputLossSpec loss;
    loss.layer = layer;
    loss.neurons = neurons;
    loss.center_frame = 0;  // input sized to RF_l, so the layer emits one frame
    loss.l1 = config.l1_scale / static_cast<double>(rf.rf);
    loss.l2 = config.l2_scale / static_cast<double>(rf.rf);

    Rng rng(config.seed);
    Matrix input(spec.input_bins, rf.rf);
    for (double& v : input.raw()) v = rng.gaussian(0.0, config.init_stddev);

    // the truncated architecture up to `layer` is what forward() needs
    ArchitectureSpec sub;
    sub.input_bins = spec.input_bins;
    sub.layers.assign(spec.layers.begin(), spec.layers.begin() + layer);
    ModelWeights subw;
    subw.layers.assign(weights.layers.begin(), weights.layers.begin() + layer);

    OptimalInput result;
    result.layer = layer;
    result.neurons = neurons;
    result.l1 = loss.l1;
    result.l2 = loss.l2;
    result.receptive_field = rf.rf;

    AdamState adam(input.size(), config.learning_rate);
    {
        LayerTrace trace = forward(sub, subw, input);
        result.loss_trajectory.push_back(input_loss(trace, loss, input));
    }
    for (std::size_t step = 0; step < config.steps; ++step) {
        Matrix grad = grad_wrt_input(sub, subw, input, loss);
        adam_step(adam, input.raw(), grad.raw());
        LayerTrace trace = forward(sub, subw, input);
        double l = input_loss(trace, loss, input);
        if (!std::isfinite(l))
            throw NumericError("optimize_input: non-finite loss at step " +
                               std::to_string(step + 1));
        result.loss_trajectory.push_back(l);
    }
    result.input = std::move(input);
    return result;
}

std::vector<ActionPotentialSeries> action_potentials(const GradNAP& nap,
                                                     const std::vector<RankedNeuron>& top) {
    std::vector<ActionPotentialSeries> series(nap.values.rows());
    std::size_t w = nap.values.cols();
    double center = static_cast<double>((w - 1) / 2);
    for (std::size_t c = 0; c < nap.values.rows(); ++c) {
        series[c].channel = c;
        series[c].offsets.resize(w);
        series[c].values.resize(w);
        for (std::size_t i = 0; i < w; ++i) {
            series[c].offsets[i] = static_cast<double>(i) - center;
            series[c].values[i] = nap.values(c, i);
        }
    }
    for (const RankedNeuron& n : top)
        if (n.channel < series.size()) series[n.channel].highlighted = true;
    return series;
}

}  // namespace gradnap
