#include "gradnap/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "gradnap/errors.hpp"
#include "gradnap/rng.hpp"

namespace gradnap {

namespace {

void validate_class_spec(const ClassSpec& cs, std::size_t bins) {
    if (cs.min_frames < 1 || cs.max_frames < cs.min_frames)
        throw ConfigError("class '" + cs.name + "': bad segment length range");
    if (cs.kind == ClassSpec::Kind::Bands) {
        if (cs.bands.empty()) throw ConfigError("class '" + cs.name + "': no bands");
        for (const ClassSpec::Band& b : cs.bands) {
            if (b.center_bin + b.width_bins >= bins || b.center_bin < b.width_bins)
                throw ConfigError("class '" + cs.name + "': band at bin " +
                                  std::to_string(b.center_bin) + " width " +
                                  std::to_string(b.width_bins) + " leaves bin range [0," +
                                  std::to_string(bins) + ")");
            if (!std::isfinite(b.intensity))
                throw ConfigError("class '" + cs.name + "': non-finite intensity");
        }
    }
}

/// Paint one segment of class `cs` into columns [t0, t0+len) of the raw
/// (pre-noise, pre-normalization) spectrogram.
void paint_segment(Matrix& spec, const ClassSpec& cs, std::size_t t0, std::size_t len) {
    if (cs.kind == ClassSpec::Kind::Bands) {
        for (const ClassSpec::Band& b : cs.bands)
            for (std::size_t f = b.center_bin - b.width_bins; f <= b.center_bin + b.width_bins; ++f)
                for (std::size_t t = t0; t < t0 + len; ++t)
                    spec(f, t) += b.intensity;
    } else {
        // broadband burst decaying from the onset
        for (std::size_t t = t0; t < t0 + len; ++t) {
            double dt = static_cast<double>(t - t0);
            double env = cs.transient.broadband_intensity *
                         std::exp(-dt / std::max(cs.transient.onset_sharpness, 1e-9));
            for (std::size_t f = 0; f < spec.rows(); ++f) spec(f, t) += env;
        }
    }
}

}  // namespace

Dataset generate(const std::vector<ClassSpec>& class_specs, const GenerateConfig& config) {
    if (class_specs.empty()) throw ConfigError("generate: need at least one class");
    if (config.bins == 0 || config.frames == 0)
        throw ConfigError("generate: bins and frames must be positive");
    for (const ClassSpec& cs : class_specs) validate_class_spec(cs, config.bins);

    Dataset ds;
    ds.bins = config.bins;
    ds.class_specs = class_specs;
    std::size_t silence = ds.silence_index();

    for (std::size_t e = 0; e < config.n_examples; ++e) {
        Rng rng(Rng::derive(config.seed, e));
        Example ex;
        ex.spectrogram = Matrix(config.bins, config.frames);
        ex.frame_labels.assign(config.frames, silence);

        std::size_t t = 0;
        while (t < config.frames) {
            bool is_silence = rng.uniform() < config.silence_fraction;
            std::size_t cls = is_silence
                                  ? silence
                                  : static_cast<std::size_t>(rng.uniform_int(
                                        0, static_cast<std::int64_t>(class_specs.size()) - 1));
            std::size_t lo = is_silence ? 4 : class_specs[cls].min_frames;
            std::size_t hi = is_silence ? 12 : class_specs[cls].max_frames;
            std::size_t len = static_cast<std::size_t>(rng.uniform_int(
                static_cast<std::int64_t>(lo), static_cast<std::int64_t>(hi)));
            len = std::min(len, config.frames - t);
            if (!is_silence) {
                paint_segment(ex.spectrogram, class_specs[cls], t, len);
                for (std::size_t i = t; i < t + len; ++i) ex.frame_labels[i] = cls;
            }
            t += len;
        }
        if (config.noise_std > 0.0)
            for (double& v : ex.spectrogram.raw()) v += rng.gaussian(0.0, config.noise_std);
        ds.examples.push_back(std::move(ex));
    }

    // per-bin z-normalization over the whole dataset; stats stored pre-normalization
    ds.bin_mean.assign(config.bins, 0.0);
    ds.bin_std.assign(config.bins, 1.0);
    std::size_t count = config.n_examples * config.frames;
    for (std::size_t f = 0; f < config.bins; ++f) {
        double sum = 0.0;
        for (const Example& ex : ds.examples)
            for (std::size_t t2 = 0; t2 < ex.spectrogram.cols(); ++t2)
                sum += ex.spectrogram(f, t2);
        double mean = sum / static_cast<double>(count);
        double var = 0.0;
        for (const Example& ex : ds.examples)
            for (std::size_t t2 = 0; t2 < ex.spectrogram.cols(); ++t2) {
                double d = ex.spectrogram(f, t2) - mean;
                var += d * d;
            }
        double sd = std::sqrt(var / static_cast<double>(count));
        if (sd < 1e-12) sd = 1.0;  // flat bin, leave centered values as-is
        ds.bin_mean[f] = mean;
        ds.bin_std[f] = sd;
    }
    for (Example& ex : ds.examples)
        for (std::size_t f = 0; f < config.bins; ++f)
            for (std::size_t t2 = 0; t2 < ex.spectrogram.cols(); ++t2)
                ex.spectrogram(f, t2) = (ex.spectrogram(f, t2) - ds.bin_mean[f]) / ds.bin_std[f];
    return ds;
}

namespace {

constexpr char kSpecMagic[4] = {'G', 'N', 'S', '1'};

void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in, const std::string& what) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw DataError("truncated file while reading " + what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f32(std::ostream& out, float v) {
    std::uint32_t bits;
    static_assert(sizeof(bits) == sizeof(v));
    std::memcpy(&bits, &v, 4);
    write_u32(out, bits);
}

float read_f32(std::istream& in, const std::string& what) {
    std::uint32_t bits = read_u32(in, what);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

std::string example_stem(std::size_t i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "ex%04zu", i);
    return buf;
}

}  // namespace

void save_spectrogram(const std::filesystem::path& path, const Matrix& spectrogram) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(kSpecMagic, 4);
    write_u32(out, static_cast<std::uint32_t>(spectrogram.rows()));
    write_u32(out, static_cast<std::uint32_t>(spectrogram.cols()));
    for (double v : spectrogram.raw()) write_f32(out, static_cast<float>(v));
}

Matrix load_spectrogram(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kSpecMagic, 4) != 0)
        throw DataError("bad magic in " + path.string());
    std::uint32_t f = read_u32(in, path.string() + " F");
    std::uint32_t t = read_u32(in, path.string() + " T");
    Matrix m(f, t);
    for (double& v : m.raw()) v = static_cast<double>(read_f32(in, path.string() + " payload"));
    return m;
}

void save_dataset(const std::filesystem::path& dir, const Dataset& dataset) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream meta(dir / "meta");
        if (!meta) throw DataError("cannot write " + (dir / "meta").string());
        meta << "version 1\n";
        meta << "bins " << dataset.bins << "\n";
        meta << "examples " << dataset.examples.size() << "\n";
        for (const ClassSpec& cs : dataset.class_specs) {
            meta << "class " << cs.name << " "
                 << (cs.kind == ClassSpec::Kind::Bands ? "bands" : "transient");
            if (cs.kind == ClassSpec::Kind::Bands)
                for (const ClassSpec::Band& b : cs.bands)
                    meta << " " << b.center_bin << ":" << b.width_bins << ":" << b.intensity;
            else
                meta << " " << cs.transient.onset_sharpness << ":"
                     << cs.transient.broadband_intensity;
            meta << " frames " << cs.min_frames << " " << cs.max_frames << "\n";
        }
        meta.precision(17);
        meta << "mean";
        for (double v : dataset.bin_mean) meta << " " << v;
        meta << "\nstd";
        for (double v : dataset.bin_std) meta << " " << v;
        meta << "\n";
    }
    for (std::size_t i = 0; i < dataset.examples.size(); ++i) {
        const Example& ex = dataset.examples[i];
        std::ofstream spec(dir / (example_stem(i) + ".spec"), std::ios::binary);
        spec.write(kSpecMagic, 4);
        write_u32(spec, static_cast<std::uint32_t>(ex.spectrogram.rows()));
        write_u32(spec, static_cast<std::uint32_t>(ex.spectrogram.cols()));
        for (double v : ex.spectrogram.raw()) write_f32(spec, static_cast<float>(v));

        std::ofstream lab(dir / (example_stem(i) + ".lab"));
        for (std::size_t t = 0; t < ex.frame_labels.size(); ++t)
            lab << t << "," << ex.frame_labels[t] << "\n";
    }
}

Dataset load_dataset(const std::filesystem::path& dir) {
    std::ifstream meta(dir / "meta");
    if (!meta) throw DataError("cannot open dataset meta file in " + dir.string());
    Dataset ds;
    std::size_t n_examples = 0;
    std::string line;
    bool version_ok = false;
    while (std::getline(meta, line)) {
        std::istringstream ss(line);
        std::string key;
        ss >> key;
        if (key == "version") {
            int v = 0;
            ss >> v;
            if (v != 1) throw DataError("unsupported dataset version " + std::to_string(v));
            version_ok = true;
        } else if (key == "bins") {
            ss >> ds.bins;
        } else if (key == "examples") {
            ss >> n_examples;
        } else if (key == "class") {
            ClassSpec cs;
            std::string kind;
            ss >> cs.name >> kind;
            std::vector<std::string> fields;
            std::string tok;
            while (ss >> tok) fields.push_back(tok);
            // trailing "frames min max"
            if (fields.size() < 3 || fields[fields.size() - 3] != "frames")
                throw DataError("malformed class line in meta: " + line);
            cs.min_frames = std::stoul(fields[fields.size() - 2]);
            cs.max_frames = std::stoul(fields[fields.size() - 1]);
            fields.resize(fields.size() - 3);
            if (kind == "bands") {
                cs.kind = ClassSpec::Kind::Bands;
                for (const std::string& f : fields) {
                    ClassSpec::Band b;
                    if (std::sscanf(f.c_str(), "%zu:%zu:%lf", &b.center_bin, &b.width_bins,
                                    &b.intensity) != 3)
                        throw DataError("malformed band '" + f + "' in meta");
                    cs.bands.push_back(b);
                }
            } else if (kind == "transient") {
                cs.kind = ClassSpec::Kind::Transient;
                if (fields.size() != 1 ||
                    std::sscanf(fields[0].c_str(), "%lf:%lf", &cs.transient.onset_sharpness,
                                &cs.transient.broadband_intensity) != 2)
                    throw DataError("malformed transient spec in meta");
            } else {
                throw DataError("unknown class kind '" + kind + "' in meta");
            }
            ds.class_specs.push_back(std::move(cs));
        } else if (key == "mean") {
            double v;
            while (ss >> v) ds.bin_mean.push_back(v);
        } else if (key == "std") {
            double v;
            while (ss >> v) ds.bin_std.push_back(v);
        }
    }
    if (!version_ok) throw DataError("dataset meta missing version field");
    if (ds.bins == 0) throw DataError("dataset meta missing bins");

    for (std::size_t i = 0; i < n_examples; ++i) {
        std::string stem = example_stem(i);
        std::ifstream spec(dir / (stem + ".spec"), std::ios::binary);
        if (!spec) throw DataError("missing example file " + stem + ".spec");
        char magic[4];
        if (!spec.read(magic, 4) || std::memcmp(magic, kSpecMagic, 4) != 0)
            throw DataError("bad magic in " + stem + ".spec");
        std::uint32_t f = read_u32(spec, stem + ".spec F");
        std::uint32_t t = read_u32(spec, stem + ".spec T");
        if (f != ds.bins)
            throw DataError(stem + ".spec has " + std::to_string(f) + " bins, meta says " +
                            std::to_string(ds.bins));
        Example ex;
        ex.spectrogram = Matrix(f, t);
        for (double& v : ex.spectrogram.raw())
            v = static_cast<double>(read_f32(spec, stem + ".spec payload"));

        std::ifstream lab(dir / (stem + ".lab"));
        if (!lab) throw DataError("missing label file " + stem + ".lab");
        ex.frame_labels.assign(t, 0);
        std::size_t rows = 0;
        std::string lline;
        while (std::getline(lab, lline)) {
            if (lline.empty()) continue;
            std::size_t frame, cls;
            if (std::sscanf(lline.c_str(), "%zu,%zu", &frame, &cls) != 2)
                throw DataError("malformed label line in " + stem + ".lab: " + lline);
            if (frame >= t)
                throw DataError(stem + ".lab: frame index " + std::to_string(frame) +
                                " out of range");
            ex.frame_labels[frame] = cls;
            ++rows;
        }
        if (rows != t)
            throw DataError(stem + ".lab has " + std::to_string(rows) + " rows, expected " +
                            std::to_string(t));
        ds.examples.push_back(std::move(ex));
    }
    return ds;
}

}  // namespace gradnap
