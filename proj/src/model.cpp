#include "gradnap/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <tuple>

#include "gradnap/data.hpp"
#include "gradnap/errors.hpp"
#include "gradnap/rng.hpp"

namespace gradnap {

void TrainConfig::validate() const {
    if (epochs == 0 || batch_size == 0 || learning_rate <= 0.0)
        throw ConfigError("train config: epochs, batch_size and learning_rate must be positive");
}

PredictionTrack predict_frames(const ArchitectureSpec& spec, const ModelWeights& weights,
                               const Matrix& spectrogram) {
    LayerTrace trace = forward(spec, weights, spectrogram);
    PredictionTrack track;
    track.logits = trace.logits();
    track.geometry = receptive_field(spec, spec.num_layers());
    track.classes.resize(track.logits.cols());
    for (std::size_t t = 0; t < track.logits.cols(); ++t) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < track.logits.rows(); ++c)
            if (track.logits(c, t) > track.logits(best, t)) best = c;
        track.classes[t] = best;
    }
    return track;
}

namespace {

/// Label of output frame t: the input-frame label at the frame center.
std::vector<std::size_t> output_frame_labels(const ReceptiveField& geom,
                                             const std::vector<std::size_t>& input_labels,
                                             std::size_t t_out) {
    std::vector<std::size_t> out(t_out);
    for (std::size_t t = 0; t < t_out; ++t) {
        std::size_t c = geom.center(t);
        if (c >= input_labels.size())
            throw DataError("label track shorter than receptive-field center map");
        out[t] = input_labels[c];
    }
    return out;
}

struct FlatGrads {
    std::vector<std::vector<double>> kernel;  // per layer
    std::vector<std::vector<double>> bias;
};

/// Cross-entropy over all output frames of one example; accumulates weight
/// gradients. Returns (summed loss, frames, correct).
std::tuple<double, std::size_t, std::size_t> example_loss_and_grads(
    const ArchitectureSpec& spec, const ModelWeights& weights, const Example& ex,
    const ReceptiveField& geom, FlatGrads& grads) {
    LayerTrace trace = forward(spec, weights, ex.spectrogram);
    const Matrix& logits = trace.logits();
    std::vector<std::size_t> labels = output_frame_labels(geom, ex.frame_labels, logits.cols());

    // dLoss/dZ_L via softmax - onehot (final layer assumed identity for logits;
    // chain through its activation derivative regardless)
    Matrix dz(logits.rows(), logits.cols());
    double loss = 0.0;
    std::size_t correct = 0;
    for (std::size_t t = 0; t < logits.cols(); ++t) {
        double maxv = logits(0, t);
        for (std::size_t c = 1; c < logits.rows(); ++c) maxv = std::max(maxv, logits(c, t));
        std::size_t best = 0;
        for (std::size_t c = 1; c < logits.rows(); ++c)
            if (logits(c, t) > logits(best, t)) best = c;
        if (best == labels[t]) ++correct;
        double denom = 0.0;
        for (std::size_t c = 0; c < logits.rows(); ++c) denom += std::exp(logits(c, t) - maxv);
        std::size_t y = labels[t];
        if (y >= logits.rows())
            throw DataError("label " + std::to_string(y) + " exceeds class count " +
                            std::to_string(logits.rows()));
        loss += -(logits(y, t) - maxv) + std::log(denom);
        for (std::size_t c = 0; c < logits.rows(); ++c) {
            double p = std::exp(logits(c, t) - maxv) / denom;
            dz(c, t) = p - (c == y ? 1.0 : 0.0);
        }
    }
    // chain through final activation
    Activation top_act = spec.layers.back().activation;
    for (std::size_t i = 0; i < dz.size(); ++i)
        dz.raw()[i] *= detail::activation_derivative(top_act, trace.pre.back().raw()[i]);

    // backprop layer by layer, accumulating weight grads
    for (std::size_t l = spec.num_layers(); l >= 1; --l) {
        const LayerSpec& ls = spec.layers[l - 1];
        const LayerWeights& lw = weights.layers[l - 1];
        const Matrix& below = trace.activation(l - 1);
        Matrix da(below.rows(), below.cols());
        for (std::size_t o = 0; o < ls.out_channels; ++o) {
            for (std::size_t t = 0; t < dz.cols(); ++t) {
                double g = dz(o, t);
                if (g == 0.0) continue;
                grads.bias[l - 1][o] += g;
                std::size_t base = t * ls.stride;
                for (std::size_t i = 0; i < ls.in_channels; ++i) {
                    const double* wrow = &lw.kernel[(o * ls.in_channels + i) * ls.kernel];
                    double* gw = &grads.kernel[l - 1][(o * ls.in_channels + i) * ls.kernel];
                    for (std::size_t k = 0; k < ls.kernel; ++k) {
                        gw[k] += g * below(i, base + k);
                        da(i, base + k) += g * wrow[k];
                    }
                }
            }
        }
        if (l > 1) {
            const Matrix& pz = trace.pre[l - 1];
            Activation pact = spec.layers[l - 2].activation;
            dz = std::move(da);
            for (std::size_t i = 0; i < dz.size(); ++i)
                dz.raw()[i] *= detail::activation_derivative(pact, pz.raw()[i]);
        }
    }
    return {loss, logits.cols(), correct};
}

}  // namespace

ModelWeights init_weights(const ArchitectureSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(Rng::derive(seed, 0x57e16475));
    ModelWeights w;
    for (const LayerSpec& ls : spec.layers) {
        LayerWeights lw;
        std::size_t fan_in = ls.in_channels * ls.kernel;
        double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
        lw.kernel.resize(ls.out_channels * fan_in);
        lw.bias.assign(ls.out_channels, 0.0);
        for (double& v : lw.kernel) v = rng.gaussian(0.0, scale);
        w.layers.push_back(std::move(lw));
    }
    return w;
}

double frame_accuracy(const ArchitectureSpec& spec, const ModelWeights& weights,
                      const Dataset& dataset) {
    ReceptiveField geom = receptive_field(spec, spec.num_layers());
    std::size_t correct = 0, total = 0;
    for (const Example& ex : dataset.examples) {
        PredictionTrack track = predict_frames(spec, weights, ex.spectrogram);
        std::vector<std::size_t> labels =
            output_frame_labels(geom, ex.frame_labels, track.classes.size());
        for (std::size_t t = 0; t < labels.size(); ++t)
            if (track.classes[t] == labels[t]) ++correct;
        total += labels.size();
    }
    return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

ModelWeights train_toy(const ArchitectureSpec& spec, const Dataset& dataset,
                       const TrainConfig& config, TrainReport* report) {
    spec.validate();
    config.validate();
    if (dataset.examples.empty()) throw DataError("train_toy: empty dataset");
    if (spec.input_bins != dataset.bins)
        throw ConfigError("train_toy: architecture expects " + std::to_string(spec.input_bins) +
                          " bins, dataset has " + std::to_string(dataset.bins));

    ModelWeights weights = init_weights(spec, config.seed);
    ReceptiveField geom = receptive_field(spec, spec.num_layers());

    // flatten all parameters into one Adam-managed vector
    std::size_t total = 0;
    for (const LayerWeights& lw : weights.layers) total += lw.kernel.size() + lw.bias.size();
    AdamState adam(total, config.learning_rate);

    Rng shuffle_rng(Rng::derive(config.seed, 0x5f0ffULL));
    std::vector<std::size_t> order(dataset.examples.size());
    std::iota(order.begin(), order.end(), 0);

    TrainReport local;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        // Fisher-Yates with the deterministic rng
        for (std::size_t i = order.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(
                shuffle_rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
            std::swap(order[i - 1], order[j]);
        }
        double epoch_loss = 0.0;
        std::size_t epoch_frames = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            std::size_t end = std::min(start + config.batch_size, order.size());
            FlatGrads grads;
            grads.kernel.resize(spec.num_layers());
            grads.bias.resize(spec.num_layers());
            for (std::size_t l = 0; l < spec.num_layers(); ++l) {
                grads.kernel[l].assign(weights.layers[l].kernel.size(), 0.0);
                grads.bias[l].assign(weights.layers[l].bias.size(), 0.0);
            }
            double batch_loss = 0.0;
            std::size_t batch_frames = 0;
            for (std::size_t b = start; b < end; ++b) {
                auto [loss, frames, correct] = example_loss_and_grads(
                    spec, weights, dataset.examples[order[b]], geom, grads);
                batch_loss += loss;
                batch_frames += frames;
                (void)correct;
            }
            epoch_loss += batch_loss;
            epoch_frames += batch_frames;
            if (epoch == 0 && start == 0)
                local.initial_loss = batch_loss / static_cast<double>(batch_frames);
            // mean over frames in the batch
            double inv = 1.0 / static_cast<double>(batch_frames);
            std::vector<double> flat_params, flat_grads;
            flat_params.reserve(total);
            flat_grads.reserve(total);
            for (std::size_t l = 0; l < spec.num_layers(); ++l) {
                flat_params.insert(flat_params.end(), weights.layers[l].kernel.begin(),
                                   weights.layers[l].kernel.end());
                flat_params.insert(flat_params.end(), weights.layers[l].bias.begin(),
                                   weights.layers[l].bias.end());
                for (double g : grads.kernel[l]) flat_grads.push_back(g * inv);
                for (double g : grads.bias[l]) flat_grads.push_back(g * inv);
            }
            adam_step(adam, flat_params, flat_grads);
            std::size_t pos = 0;
            for (std::size_t l = 0; l < spec.num_layers(); ++l) {
                std::copy_n(flat_params.begin() + pos, weights.layers[l].kernel.size(),
                            weights.layers[l].kernel.begin());
                pos += weights.layers[l].kernel.size();
                std::copy_n(flat_params.begin() + pos, weights.layers[l].bias.size(),
                            weights.layers[l].bias.begin());
                pos += weights.layers[l].bias.size();
            }
        }
        local.epoch_losses.push_back(epoch_loss / static_cast<double>(epoch_frames));
    }
    local.final_accuracy = frame_accuracy(spec, weights, dataset);
    if (report) *report = local;
    return weights;
}

namespace {

constexpr char kWeightMagic[4] = {'G', 'N', 'W', '1'};

void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in, const std::string& what) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw DataError("truncated weight file while reading " + what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void save_weights(const std::filesystem::path& path, const ModelWeights& weights,
                  const ArchitectureSpec& spec) {
    weights.validate_against(spec);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write weight file " + path.string());
    out.write(kWeightMagic, 4);
    write_u32(out, static_cast<std::uint32_t>(spec.num_layers()));
    for (std::size_t l = 0; l < spec.num_layers(); ++l) {
        const LayerSpec& ls = spec.layers[l];
        write_u32(out, static_cast<std::uint32_t>(ls.out_channels));
        write_u32(out, static_cast<std::uint32_t>(ls.in_channels));
        write_u32(out, static_cast<std::uint32_t>(ls.kernel));
        write_u32(out, static_cast<std::uint32_t>(ls.stride));
        for (double v : weights.layers[l].kernel) {
            float f = static_cast<float>(v);
            std::uint32_t bits;
            std::memcpy(&bits, &f, 4);
            write_u32(out, bits);
        }
        for (double v : weights.layers[l].bias) {
            float f = static_cast<float>(v);
            std::uint32_t bits;
            std::memcpy(&bits, &f, 4);
            write_u32(out, bits);
        }
    }
}

ModelWeights load_weights(const std::filesystem::path& path, const ArchitectureSpec& spec) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open weight file " + path.string());
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kWeightMagic, 4) != 0)
        throw DataError("bad magic in weight file " + path.string());
    std::uint32_t n = read_u32(in, "layer count");
    if (n != spec.num_layers())
        throw DataError("weight file has " + std::to_string(n) + " layers, architecture has " +
                        std::to_string(spec.num_layers()));
    ModelWeights weights;
    for (std::size_t l = 0; l < n; ++l) {
        std::uint32_t out_c = read_u32(in, "out_channels");
        std::uint32_t in_c = read_u32(in, "in_channels");
        std::uint32_t kernel = read_u32(in, "kernel");
        std::uint32_t stride = read_u32(in, "stride");
        const LayerSpec& ls = spec.layers[l];
        if (out_c != ls.out_channels || in_c != ls.in_channels || kernel != ls.kernel ||
            stride != ls.stride)
            throw DataError("weight file layer " + std::to_string(l + 1) +
                            " shape does not match architecture (file " + std::to_string(out_c) +
                            "x" + std::to_string(in_c) + "x" + std::to_string(kernel) +
                            " stride " + std::to_string(stride) + ")");
        LayerWeights lw;
        lw.kernel.resize(static_cast<std::size_t>(out_c) * in_c * kernel);
        lw.bias.resize(out_c);
        for (double& v : lw.kernel) {
            std::uint32_t bits = read_u32(in, "kernel payload");
            float f;
            std::memcpy(&f, &bits, 4);
            v = static_cast<double>(f);
        }
        for (double& v : lw.bias) {
            std::uint32_t bits = read_u32(in, "bias payload");
            float f;
            std::memcpy(&f, &bits, 4);
            v = static_cast<double>(f);
        }
        weights.layers.push_back(std::move(lw));
    }
    weights.validate_against(spec);
    return weights;
}

ArchitectureSpec parse_architecture(const std::string& text) {
    ArchitectureSpec spec;
    std::istringstream in(text);
    std::string line;
    std::size_t prev_out = 0;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::istringstream ss(line);
        std::string key;
        if (!(ss >> key)) continue;
        if (key == "input_bins") {
            ss >> spec.input_bins;
            prev_out = spec.input_bins;
        } else if (key == "layer") {
            LayerSpec ls;
            ls.in_channels = prev_out;
            std::string tok;
            while (ss >> tok) {
                auto eq = tok.find('=');
                if (eq == std::string::npos)
                    throw ConfigError("architecture: expected key=value, got '" + tok + "'");
                std::string k = tok.substr(0, eq), v = tok.substr(eq + 1);
                if (k == "out") ls.out_channels = std::stoul(v);
                else if (k == "kernel") ls.kernel = std::stoul(v);
                else if (k == "stride") ls.stride = std::stoul(v);
                else if (k == "act") ls.activation = activation_from_string(v);
                else throw ConfigError("architecture: unknown layer key '" + k + "'");
            }
            prev_out = ls.out_channels;
            spec.layers.push_back(ls);
        } else {
            throw ConfigError("architecture: unknown directive '" + key + "'");
        }
    }
    spec.validate();
    return spec;
}

ArchitectureSpec load_architecture(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open architecture file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_architecture(ss.str());
}

void save_architecture(const std::filesystem::path& path, const ArchitectureSpec& spec) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write architecture file " + path.string());
    out << "input_bins " << spec.input_bins << "\n";
    for (const LayerSpec& ls : spec.layers)
        out << "layer out=" << ls.out_channels << " kernel=" << ls.kernel
            << " stride=" << ls.stride << " act=" << activation_to_string(ls.activation) << "\n";
}

}  // namespace gradnap
