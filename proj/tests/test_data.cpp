#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "gradnap/data.hpp"
#include "gradnap/errors.hpp"

using namespace gradnap;
namespace fs = std::filesystem;

namespace {

ClassSpec band_class(const std::string& name, std::size_t center, std::size_t width,
                     double intensity) {
    ClassSpec cs;
    cs.name = name;
    cs.kind = ClassSpec::Kind::Bands;
    cs.bands.push_back({center, width, intensity});
    cs.min_frames = 6;
    cs.max_frames = 12;
    return cs;
}

fs::path temp_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("gradnap_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("generate: band rows carry more energy than background") {
    GenerateConfig cfg;
    cfg.n_examples = 6;
    cfg.bins = 32;
    cfg.frames = 96;
    cfg.noise_std = 0.01;
    cfg.seed = 9;
    Dataset ds = generate({band_class("A", 20, 2, 2.0)}, cfg);

    // pre-normalization stats are stored; reconstruct raw band/background means
    double band_mean = 0.0, bg_mean = 0.0;
    std::size_t band_n = 0, bg_n = 0;
    for (const Example& ex : ds.examples)
        for (std::size_t f = 0; f < cfg.bins; ++f)
            for (std::size_t t = 0; t < cfg.frames; ++t) {
                if (ex.frame_labels[t] != 0) continue;  // class-A frames only
                double raw = ex.spectrogram(f, t) * ds.bin_std[f] + ds.bin_mean[f];
                if (f >= 18 && f <= 22) {
                    band_mean += raw;
                    ++band_n;
                } else {
                    bg_mean += raw;
                    ++bg_n;
                }
            }
    REQUIRE(band_n > 0);
    REQUIRE(bg_n > 0);
    CHECK(band_mean / band_n > bg_mean / bg_n);
}

TEST_CASE("generate: no noise, one class, no silence -> labels all that class") {
    GenerateConfig cfg;
    cfg.n_examples = 3;
    cfg.bins = 8;
    cfg.frames = 40;
    cfg.noise_std = 0.0;
    cfg.silence_fraction = 0.0;
    Dataset ds = generate({band_class("only", 4, 1, 1.0)}, cfg);
    for (const Example& ex : ds.examples)
        for (std::size_t label : ex.frame_labels) CHECK(label == 0);
}

TEST_CASE("generate: post-normalization per-bin stats are 0/1") {
    GenerateConfig cfg;
    cfg.n_examples = 8;
    cfg.bins = 12;
    cfg.frames = 64;
    cfg.noise_std = 0.2;
    cfg.seed = 3;
    Dataset ds = generate({band_class("A", 5, 1, 1.5)}, cfg);
    std::size_t n = cfg.n_examples * cfg.frames;
    for (std::size_t f = 0; f < cfg.bins; ++f) {
        double mean = 0.0;
        for (const Example& ex : ds.examples)
            for (std::size_t t = 0; t < cfg.frames; ++t) mean += ex.spectrogram(f, t);
        mean /= n;
        double var = 0.0;
        for (const Example& ex : ds.examples)
            for (std::size_t t = 0; t < cfg.frames; ++t) {
                double d = ex.spectrogram(f, t) - mean;
                var += d * d;
            }
        double sd = std::sqrt(var / n);
        CHECK(std::abs(mean) < 1e-9);
        CHECK(std::abs(sd - 1.0) < 1e-9);
    }
}

TEST_CASE("generate: seed-deterministic") {
    GenerateConfig cfg;
    cfg.n_examples = 4;
    cfg.bins = 10;
    cfg.frames = 50;
    cfg.seed = 77;
    Dataset a = generate({band_class("A", 5, 1, 1.0)}, cfg);
    Dataset b = generate({band_class("A", 5, 1, 1.0)}, cfg);
    REQUIRE(a.examples.size() == b.examples.size());
    for (std::size_t i = 0; i < a.examples.size(); ++i) {
        CHECK(a.examples[i].spectrogram == b.examples[i].spectrogram);
        CHECK(a.examples[i].frame_labels == b.examples[i].frame_labels);
    }
}

TEST_CASE("generate: labels are valid class or silence indices") {
    GenerateConfig cfg;
    cfg.n_examples = 5;
    cfg.bins = 10;
    cfg.frames = 60;
    cfg.seed = 12;
    Dataset ds = generate({band_class("A", 3, 1, 1.0), band_class("B", 7, 1, 1.0)}, cfg);
    for (const Example& ex : ds.examples)
        for (std::size_t label : ex.frame_labels) CHECK(label <= ds.silence_index());
}

TEST_CASE("generate: band outside bin range rejected") {
    GenerateConfig cfg;
    cfg.bins = 8;
    CHECK_THROWS_AS(generate({band_class("bad", 7, 2, 1.0)}, cfg), ConfigError);
}

TEST_CASE("dataset round trip is bit-exact") {
    GenerateConfig cfg;
    cfg.n_examples = 3;
    cfg.bins = 6;
    cfg.frames = 30;
    cfg.seed = 5;
    Dataset ds = generate({band_class("A", 3, 1, 1.0)}, cfg);
    fs::path dir = temp_dir("roundtrip");
    save_dataset(dir, ds);
    Dataset loaded = load_dataset(dir);
    REQUIRE(loaded.examples.size() == ds.examples.size());
    CHECK(loaded.bins == ds.bins);
    for (std::size_t i = 0; i < ds.examples.size(); ++i) {
        // float32 payload: compare after one float round trip
        REQUIRE(loaded.examples[i].spectrogram.same_shape(ds.examples[i].spectrogram));
        for (std::size_t k = 0; k < ds.examples[i].spectrogram.size(); ++k)
            CHECK(loaded.examples[i].spectrogram.raw()[k] ==
                  static_cast<double>(static_cast<float>(ds.examples[i].spectrogram.raw()[k])));
        CHECK(loaded.examples[i].frame_labels == ds.examples[i].frame_labels);
    }
    // second save of the loaded dataset is byte-identical per example file
    fs::path dir2 = temp_dir("roundtrip2");
    save_dataset(dir2, loaded);
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() != ".spec") continue;
        std::ifstream a(entry.path(), std::ios::binary), b(dir2 / entry.path().filename(),
                                                           std::ios::binary);
        std::string sa((std::istreambuf_iterator<char>(a)), {});
        std::string sb((std::istreambuf_iterator<char>(b)), {});
        CHECK(sa == sb);
    }
}

TEST_CASE("dataset load: version mismatch reported") {
    fs::path dir = temp_dir("badversion");
    std::ofstream(dir / "meta") << "version 9\nbins 4\nexamples 0\n";
    CHECK_THROWS_WITH_AS(load_dataset(dir), "unsupported dataset version 9", DataError);
}

TEST_CASE("dataset load: wrong label row count names the example") {
    GenerateConfig cfg;
    cfg.n_examples = 1;
    cfg.bins = 4;
    cfg.frames = 10;
    Dataset ds = generate({band_class("A", 2, 1, 1.0)}, cfg);
    fs::path dir = temp_dir("badlabels");
    save_dataset(dir, ds);
    std::ofstream(dir / "ex0000.lab") << "0,0\n1,0\n";  // too few rows
    try {
        load_dataset(dir);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("ex0000") != std::string::npos);
    }
}

TEST_CASE("transient class paints a decaying broadband burst") {
    ClassSpec cs;
    cs.name = "T";
    cs.kind = ClassSpec::Kind::Transient;
    cs.transient = {2.0, 3.0};
    cs.min_frames = 8;
    cs.max_frames = 8;
    GenerateConfig cfg;
    cfg.n_examples = 2;
    cfg.bins = 6;
    cfg.frames = 40;
    cfg.noise_std = 0.0;
    cfg.silence_fraction = 0.5;
    cfg.seed = 21;
    Dataset ds = generate({cs}, cfg);
    // find an onset right after silence and check the burst decays
    bool checked = false;
    for (const Example& ex : ds.examples) {
        for (std::size_t t = 1; t + 4 < cfg.frames && !checked; ++t) {
            if (ex.frame_labels[t] == 0 && ex.frame_labels[t - 1] == ds.silence_index()) {
                for (std::size_t d = 1; d <= 3; ++d) {
                    double prev = ex.spectrogram(0, t + d - 1) * ds.bin_std[0] + ds.bin_mean[0];
                    double cur = ex.spectrogram(0, t + d) * ds.bin_std[0] + ds.bin_mean[0];
                    CHECK(cur < prev + 1e-9);
                }
                checked = true;
            }
        }
    }
    CHECK(checked);
}
